#include "isorobust/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

namespace isorobust {

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const Eigen::ArrayXd e = (z.array() - z.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

int argmax_class(const Eigen::VectorXd& v) {
  int best = 0;
  for (int j = 1; j < v.size(); ++j)
    if (v(j) > v(best)) best = j;
  return best;
}

Prediction prediction_from_logits(const Logits& z) {
  Prediction p;
  p.probabilities = softmax(z.values);
  p.predicted_class = argmax_class(z.values);
  return p;
}

std::vector<int> MiniPointNetParams::point_widths() const {
  std::vector<int> w;
  for (const auto& layer : point_layers) w.push_back(static_cast<int>(layer.bias.size()));
  return w;
}

std::vector<int> MiniPointNetParams::head_widths() const {
  std::vector<int> w;
  for (std::size_t l = 0; l + 1 < head_layers.size(); ++l)
    w.push_back(static_cast<int>(head_layers[l].bias.size()));
  return w;
}

MiniPointNetParams MiniPointNetParams::initialize(const std::vector<int>& point_widths,
                                                  const std::vector<int>& head_widths,
                                                  int classes, Rng& rng) {
  auto make = [&rng](int in, int out) {
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    const double bound = std::sqrt(6.0 / in);
    // Row-major fill order keeps initialization independent of storage order.
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = uniform(rng, -bound, bound);
    return layer;
  };
  MiniPointNetParams p;
  int in = 3;
  for (int w : point_widths) {
    p.point_layers.push_back(make(in, w));
    in = w;
  }
  for (int w : head_widths) {
    p.head_layers.push_back(make(in, w));
    in = w;
  }
  p.head_layers.push_back(make(in, classes));
  p.validate();
  return p;
}

void MiniPointNetParams::validate() const {
  if (point_layers.empty() || head_layers.empty())
    throw std::invalid_argument("network needs at least one point layer and one head layer");
  Eigen::Index in = 3;
  auto check = [&in](const DenseLayer& layer) {
    if (layer.weight.cols() != in || layer.weight.rows() != layer.bias.size() ||
        layer.weight.rows() < 1)
      throw std::invalid_argument("inconsistent layer shapes");
    if (!layer.weight.allFinite() || !layer.bias.allFinite())
      throw std::invalid_argument("non-finite parameters");
    in = layer.weight.rows();
  };
  for (const auto& layer : point_layers) check(layer);
  for (const auto& layer : head_layers) check(layer);
  if (class_count() < 2) throw std::invalid_argument("classifier needs at least two classes");
}

struct MiniPointNet::Forward {
  // m x width after ReLU; act > 0 exactly where the pre-activation is positive.
  std::vector<Eigen::MatrixXd> point_act;
  std::vector<Eigen::Index> winner;        // pooled channel -> point row
  Eigen::VectorXd pooled;
  std::vector<Eigen::VectorXd> head_pre;
  std::vector<Eigen::VectorXd> head_act;
  Eigen::VectorXd z;
};

MiniPointNet::MiniPointNet(MiniPointNetParams params) : params_(std::move(params)) {
  params_.validate();
}

MiniPointNet::Forward MiniPointNet::forward(const Cloud& cloud) const {
  if (cloud.size() < 1) throw std::invalid_argument("cannot classify an empty cloud");
  Forward f;
  f.point_act.reserve(params_.point_layers.size());
  for (const auto& layer : params_.point_layers) {
    Eigen::MatrixXd act(cloud.points.rows(), layer.weight.rows());
    if (f.point_act.empty())
      act.noalias() = cloud.points * layer.weight.transpose();
    else
      act.noalias() = f.point_act.back() * layer.weight.transpose();
    act.rowwise() += layer.bias.transpose();
    act = act.cwiseMax(0.0);
    f.point_act.push_back(std::move(act));
  }

  const Eigen::MatrixXd& last = f.point_act.back();
  f.pooled.resize(last.cols());
  f.winner.resize(static_cast<std::size_t>(last.cols()));
  for (Eigen::Index j = 0; j < last.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < last.rows(); ++i)
      if (last(i, j) > last(best, j)) best = i;
    f.winner[static_cast<std::size_t>(j)] = best;
    f.pooled(j) = last(best, j);
  }

  Eigen::VectorXd h = f.pooled;
  for (std::size_t l = 0; l < params_.head_layers.size(); ++l) {
    const auto& layer = params_.head_layers[l];
    Eigen::VectorXd pre = layer.weight * h + layer.bias;
    if (l + 1 < params_.head_layers.size()) {
      h = pre.cwiseMax(0.0);
      f.head_pre.push_back(std::move(pre));
      f.head_act.push_back(h);
    } else {
      f.z = std::move(pre);
    }
  }
  return f;
}

Logits MiniPointNet::logits(const Cloud& cloud) const { return {forward(cloud).z}; }

std::pair<Logits, MiniPointNetGradients> MiniPointNet::backward(
    const Cloud& cloud, const Eigen::VectorXd& cotangent) const {
  return backward(cloud, [&](const Logits&) { return cotangent; });
}

std::pair<Logits, MiniPointNetGradients> MiniPointNet::backward(
    const Cloud& cloud, const std::function<Eigen::VectorXd(const Logits&)>& cotangent_of) const {
  const Forward f = forward(cloud);
  const Eigen::VectorXd cotangent = cotangent_of(Logits{f.z});
  if (cotangent.size() != class_count())
    throw std::invalid_argument("cotangent length must equal the class count");
  MiniPointNetGradients grads;
  grads.params = params_;

  // Head, last layer first.
  Eigen::VectorXd g = cotangent;
  for (std::size_t l = params_.head_layers.size(); l-- > 0;) {
    const Eigen::VectorXd& in = l == 0 ? f.pooled : f.head_act[l - 1];
    grads.params.head_layers[l].weight = g * in.transpose();
    grads.params.head_layers[l].bias = g;
    Eigen::VectorXd d_in = params_.head_layers[l].weight.transpose() * g;
    if (l > 0) d_in = d_in.cwiseProduct((f.head_pre[l - 1].array() > 0.0).cast<double>().matrix());
    g = std::move(d_in);
  }

  // Only pooling winners receive gradient; work on those rows alone.
  std::vector<Eigen::Index> rows = f.winner;
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  const auto n_rows = static_cast<Eigen::Index>(rows.size());

  Eigen::MatrixXd d_act = Eigen::MatrixXd::Zero(n_rows, g.size());
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const auto pos = std::lower_bound(rows.begin(), rows.end(), f.winner[static_cast<std::size_t>(j)]) - rows.begin();
    d_act(pos, j) = g(j);
  }

  for (std::size_t l = params_.point_layers.size(); l-- > 0;) {
    const Eigen::MatrixXd pre = f.point_act[l](rows, Eigen::all);
    const Eigen::MatrixXd in = l == 0 ? Eigen::MatrixXd(cloud.points(rows, Eigen::all))
                                      : Eigen::MatrixXd(f.point_act[l - 1](rows, Eigen::all));
    const Eigen::MatrixXd d_pre = d_act.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    grads.params.point_layers[l].weight = d_pre.transpose() * in;
    grads.params.point_layers[l].bias = d_pre.colwise().sum().transpose();
    d_act = d_pre * params_.point_layers[l].weight;
  }

  grads.input = PointMatrix<double>::Zero(cloud.size(), 3);
  grads.input(rows, Eigen::all) = d_act;
  return {Logits{f.z}, std::move(grads)};
}

PointMatrix<double> MiniPointNet::input_gradient(const Cloud& cloud,
                                                 const Eigen::VectorXd& cotangent) const {
  return backward(cloud, cotangent).second.input;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(p_rotation >= 0.0 && p_rotation <= 1.0))
    throw std::invalid_argument("p_rotation must lie in [0, 1]");
  if (point_widths.empty()) throw std::invalid_argument("need at least one point layer");
  for (int w : point_widths)
    if (w < 1) throw std::invalid_argument("layer widths must be positive");
  for (int w : head_widths)
    if (w < 1) throw std::invalid_argument("layer widths must be positive");
}

double accuracy(const Classifier& model, std::span<const Cloud> clouds) {
  if (clouds.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& c : clouds)
    if (c.label && model.predict(c).predicted_class == *c.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(clouds.size());
}

namespace {

void axpy(MiniPointNetParams& dst, double scale, const MiniPointNetParams& src) {
  for (std::size_t l = 0; l < dst.point_layers.size(); ++l) {
    dst.point_layers[l].weight += scale * src.point_layers[l].weight;
    dst.point_layers[l].bias += scale * src.point_layers[l].bias;
  }
  for (std::size_t l = 0; l < dst.head_layers.size(); ++l) {
    dst.head_layers[l].weight += scale * src.head_layers[l].weight;
    dst.head_layers[l].bias += scale * src.head_layers[l].bias;
  }
}

void zero(MiniPointNetParams& p) {
  for (auto* layers : {&p.point_layers, &p.head_layers})
    for (auto& layer : *layers) {
      layer.weight.setZero();
      layer.bias.setZero();
    }
}

bool all_finite(const MiniPointNetParams& p) {
  for (const auto* layers : {&p.point_layers, &p.head_layers})
    for (const auto& layer : *layers)
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

void round_to_float(MiniPointNetParams& p) {
  auto r = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (auto* layers : {&p.point_layers, &p.head_layers})
    for (auto& layer : *layers) {
      layer.weight = layer.weight.unaryExpr(r);
      layer.bias = layer.bias.unaryExpr(r);
    }
}

}  // namespace

TrainResult train(const ShapeDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  const auto classes = static_cast<int>(data.classes.size());
  if (classes < 2) throw std::invalid_argument("dataset needs at least two classes");
  if (data.train.empty() && cfg.epochs > 0) throw std::invalid_argument("empty training set");

  Rng init_rng(derive_seed(cfg.seed, "init"));
  Rng rng(derive_seed(cfg.seed, "train"));
  MiniPointNetParams params =
      MiniPointNetParams::initialize(cfg.point_widths, cfg.head_widths, classes, init_rng);

  TrainResult result;
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the project RNG; std::shuffle is not portable across libraries.
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(i)));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const MiniPointNet net(params);
      MiniPointNetParams grad = params;
      zero(grad);
      for (std::size_t b = start; b < end; ++b) {
        const Cloud& source = data.train[order[b]];
        Cloud sample = cfg.augment ? augment(source, cfg.augmentation, rng) : source;
        if (cfg.p_rotation > 0.0) sample = augment_p_rotation(sample, cfg.p_rotation, rng);
        const int label = source.label.value_or(0);

        const auto cross_entropy = [&](const Logits& z) {
          Eigen::VectorXd cot = softmax(z.values);
          epoch_loss += -std::log(std::max(cot(label), 1e-300));
          cot(label) -= 1.0;
          return cot;
        };
        axpy(grad, 1.0, net.backward(sample, cross_entropy).second.params);
      }
      axpy(params, -cfg.learning_rate / static_cast<double>(end - start), grad);
      if (!all_finite(params))
        throw DivergenceError("parameters became non-finite at epoch " + std::to_string(epoch));
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss))
      throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch));
    result.report.epoch_loss.push_back(epoch_loss);
  }

  round_to_float(params);
  const MiniPointNet net(params);
  result.report.epochs = cfg.epochs;
  result.report.train_accuracy = accuracy(net, data.train);
  result.report.test_accuracy = accuracy(net, data.test);
  result.params = std::move(params);
  return result;
}

TrainResult train(const ShapeDatasetSpec& spec, const TrainConfig& cfg) {
  return train(generate_shapes(spec), cfg);
}

namespace {

constexpr std::array<char, 4> kCheckpointMagic{'I', 'R', 'M', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.put(static_cast<char>((v >> s) & 0xff));
}

void put_f32(std::ostream& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
 public:
  Reader(std::vector<unsigned char> bytes, std::filesystem::path path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint32_t u32() {
    if (pos_ + 4 > bytes_.size())
      throw ParseError(path_.string() + ": truncated checkpoint at byte " + std::to_string(pos_),
                       pos_);
    std::uint32_t v = 0;
    for (int s = 0; s < 4; ++s) v |= static_cast<std::uint32_t>(bytes_[pos_ + s]) << (8 * s);
    pos_ += 4;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  std::vector<unsigned char> bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const MiniPointNetParams& params, const std::filesystem::path& path) {
  params.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kCheckpointMagic.data(), 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.point_layers.size()));
  put_u32(out, static_cast<std::uint32_t>(params.head_layers.size()));
  for (const auto* layers : {&params.point_layers, &params.head_layers})
    for (const auto& layer : *layers) {
      put_u32(out, static_cast<std::uint32_t>(layer.weight.rows()));
      put_u32(out, static_cast<std::uint32_t>(layer.weight.cols()));
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) put_f32(out, layer.weight(r, c));
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) put_f32(out, layer.bias(r));
    }
  if (!out) throw IoError("failed writing " + path.string());
}

MiniPointNetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  if (bytes.size() < 4 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
    throw ParseError(path.string() + ": not a model checkpoint", 0);
  bytes.erase(bytes.begin(), bytes.begin() + 4);
  Reader r(std::move(bytes), path);
  if (r.u32() != kCheckpointVersion)
    throw ParseError(path.string() + ": unsupported checkpoint version", 4);
  const std::uint32_t n_point = r.u32();
  const std::uint32_t n_head = r.u32();
  if (n_point > 64 || n_head > 64) throw ParseError(path.string() + ": implausible layer count", 8);

  MiniPointNetParams params;
  auto read_layer = [&r, &path]() {
    const std::uint32_t out = r.u32();
    const std::uint32_t inp = r.u32();
    if (out == 0 || inp == 0 || out > 1u << 16 || inp > 1u << 16)
      throw ParseError(path.string() + ": implausible layer shape", r.pos());
    DenseLayer layer{Eigen::MatrixXd(out, inp), Eigen::VectorXd(out)};
    for (std::uint32_t i = 0; i < out; ++i)
      for (std::uint32_t j = 0; j < inp; ++j) layer.weight(i, j) = r.f32();
    for (std::uint32_t i = 0; i < out; ++i) layer.bias(i) = r.f32();
    return layer;
  };
  for (std::uint32_t l = 0; l < n_point; ++l) params.point_layers.push_back(read_layer());
  for (std::uint32_t l = 0; l < n_head; ++l) params.head_layers.push_back(read_layer());
  if (!r.done()) throw ParseError(path.string() + ": trailing bytes in checkpoint", r.pos() + 4);
  try {
    params.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return params;
}

}  // namespace isorobust
