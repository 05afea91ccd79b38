#ifndef ISOROBUST_MODEL_HPP
#define ISOROBUST_MODEL_HPP

#include "isorobust/pointcloud.hpp"
#include "isorobust/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace isorobust {

/// Pre-softmax network output z.
struct Logits {
  Eigen::VectorXd values;
};

struct Prediction {
  Eigen::VectorXd probabilities;
  int predicted_class = 0;
};

/// Max-subtracted softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& z);

/// Lowest index wins ties.
int argmax_class(const Eigen::VectorXd& v);

Prediction prediction_from_logits(const Logits& z);

/// What the attacks see of a victim: logits, input gradients and the class count.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int class_count() const = 0;
  virtual Logits logits(const Cloud& cloud) const = 0;

  /// d(cotangent . z) / dP, one row per point.
  virtual PointMatrix<double> input_gradient(const Cloud& cloud,
                                             const Eigen::VectorXd& cotangent) const = 0;

  Prediction predict(const Cloud& cloud) const { return prediction_from_logits(logits(cloud)); }
};

/// Affine layer y = W x + b, W is (out x in).
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

/// Shared per-point ReLU MLP, coordinatewise max over points, then a ReLU MLP
/// head whose last layer is linear.
struct MiniPointNetParams {
  std::vector<DenseLayer> point_layers;
  std::vector<DenseLayer> head_layers;

  int class_count() const { return static_cast<int>(head_layers.back().bias.size()); }
  std::vector<int> point_widths() const;
  std::vector<int> head_widths() const;  // hidden widths only

  /// He-uniform weights, zero biases.
  static MiniPointNetParams initialize(const std::vector<int>& point_widths,
                                       const std::vector<int>& head_widths, int classes,
                                       Rng& rng);

  void validate() const;
};

/// Gradients of (cotangent . z) with respect to every parameter and the input.
struct MiniPointNetGradients {
  MiniPointNetParams params;
  PointMatrix<double> input;
};

class MiniPointNet : public Classifier {
 public:
  explicit MiniPointNet(MiniPointNetParams params);

  int class_count() const override { return params_.class_count(); }
  Logits logits(const Cloud& cloud) const override;
  PointMatrix<double> input_gradient(const Cloud& cloud,
                                     const Eigen::VectorXd& cotangent) const override;

  /// Forward pass plus full backward pass for the given logit cotangent.
  std::pair<Logits, MiniPointNetGradients> backward(const Cloud& cloud,
                                                    const Eigen::VectorXd& cotangent) const;
  /// Same, with the cotangent computed from this pass's logits (e.g. a loss gradient).
  std::pair<Logits, MiniPointNetGradients> backward(
      const Cloud& cloud, const std::function<Eigen::VectorXd(const Logits&)>& cotangent_of) const;

  const MiniPointNetParams& params() const { return params_; }

 private:
  struct Forward;
  Forward forward(const Cloud& cloud) const;

  MiniPointNetParams params_;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 0.02;
  bool augment = true;
  AugmentConfig augmentation;
  /// Probability of a full random rotation per training sample.
  double p_rotation = 0.0;
  std::vector<int> point_widths{32, 64};
  std::vector<int> head_widths{32};
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainReport {
  int epochs = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

struct TrainResult {
  MiniPointNetParams params;
  TrainReport report;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minibatch gradient descent on softmax cross-entropy. Returned parameters are
/// rounded to float32 so that a checkpoint round trip reproduces them exactly.
TrainResult train(const ShapeDataset& data, const TrainConfig& cfg);
TrainResult train(const ShapeDatasetSpec& spec, const TrainConfig& cfg);

double accuracy(const Classifier& model, std::span<const Cloud> clouds);

/// "IRMN", u32 version, u32 point-layer count, u32 head-layer count, then per
/// layer u32 out, u32 in, out*in row-major float32 weights, out float32 biases.
void save_checkpoint(const MiniPointNetParams& params, const std::filesystem::path& path);
MiniPointNetParams load_checkpoint(const std::filesystem::path& path);

}  // namespace isorobust

#endif  // ISOROBUST_MODEL_HPP
