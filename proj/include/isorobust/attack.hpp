#ifndef ISOROBUST_ATTACK_HPP
#define ISOROBUST_ATTACK_HPP

#include "isorobust/bandit.hpp"
#include "isorobust/geometry.hpp"
#include "isorobust/model.hpp"
#include "isorobust/pointcloud.hpp"
#include "isorobust/random.hpp"

#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace isorobust {

enum class TransformFamily { Rotation, Reflection };

std::string family_name(TransformFamily f);
TransformFamily family_from_name(const std::string& name);

struct TsiConfig {
  double lo = -std::numbers::pi;
  double hi = std::numbers::pi;
  int divisions = 4;
  int max_samples = 10;
  TransformFamily family = TransformFamily::Rotation;
  std::uint64_t seed = 0;

  void validate() const;
  /// Rank 3 (Euler angles) for rotations, rank 2 (azimuth, polar) for reflections.
  AnglePartition partition() const;
};

enum class TargetRule { SecondLogit, Fixed };

struct CtriConfig {
  TsiConfig tsi{.max_samples = 50};
  int max_iters = 50;
  double eta = 0.0005;
  double lambda = 0.001;
  double kappa = 0.0;
  TargetRule target_rule = TargetRule::SecondLogit;
  int fixed_target = 0;
  double degeneracy_tol = 1e-8;

  void validate() const;
};

struct AttackOutcome {
  std::size_t cloud_index = 0;
  Transform3<double> transform = Transform3<double>::Identity();
  bool success = false;
  /// sigma(A^T A - I); exactly 0 for transforms that never left the orthogonal group.
  double penalty = 0.0;
  int samples_used = 0;
  int gradient_steps = 0;
  int degenerate_steps = 0;
  bool warm_start_success = false;
  int original_class = 0;
  int final_class = 0;
  std::optional<int> target_class;
  bool target_hit = false;
  double confidence = 0.0;
};

struct CwLoss {
  double value;
  /// d value / d z: +1 at the strongest non-target logit, -1 at the target, or zero when clipped.
  Eigen::VectorXd cotangent;
};

/// max(-kappa, max_{j != t} z_j - z_t).
CwLoss cw_loss(const Logits& z, int target, double kappa);

/// Largest logit other than the true class; lowest index on ties.
int select_target(const Logits& z, int true_class);

/// Orthogonal matrix for a uniform draw inside bandit cell k.
Transform3<double> sample_isometry(const AnglePartition& partition, TransformFamily family,
                                   std::size_t k, Rng& rng);

/// Indices of labelled clouds the model classifies correctly in their original pose.
std::vector<std::size_t> correctly_classified(const Classifier& model,
                                              std::span<const Cloud> clouds);

/// TSI on one cloud: at most cfg.max_samples select/sample/evaluate/update rounds,
/// stopping at the first misclassification. On failure the transform that
/// minimized the true-class probability is returned.
AttackOutcome tsi_attack_cloud(const Classifier& model, const Cloud& cloud, const TsiConfig& cfg,
                               BanditState& state, Rng& rng, std::size_t index = 0);

/// Sequential TSI with one bandit shared across all clouds.
std::vector<AttackOutcome> tsi(const Classifier& model, std::span<const Cloud> clouds,
                               const TsiConfig& cfg, BanditState& state, Rng& rng);

/// Fresh bandit and the "tsi" sub-seed of cfg.seed.
std::vector<AttackOutcome> tsi(const Classifier& model, std::span<const Cloud> clouds,
                               const TsiConfig& cfg);

/// Throughput mode: the bandit is a read-only snapshot and each cloud gets its
/// own stream, so clouds run in parallel. This is not the sequential algorithm.
std::vector<AttackOutcome> tsi_frozen(const Classifier& model, std::span<const Cloud> clouds,
                                      const TsiConfig& cfg, const BanditState& snapshot,
                                      unsigned threads = 0);

struct TransformGradient {
  double objective = 0.0;
  double penalty = 0.0;
  double cw = 0.0;
  Transform3<double> gradient = Transform3<double>::Zero();
  Logits logits;
  bool degenerate = false;
};

/// Value and gradient w.r.t. A of sigma(A^T A - I) + lambda * cw(z(P A^T), target, kappa).
/// The penalty part falls back to a subgradient (flagged) when its spectrum is degenerate.
TransformGradient transform_gradient(const Classifier& model, const Cloud& cloud,
                                     const Transform3<double>& a, int target, double lambda,
                                     double kappa, double degeneracy_tol = 1e-8);

/// Gradient phase only, starting from a TSI outcome of the same cloud.
AttackOutcome ctri_descend(const Classifier& model, const Cloud& cloud,
                           const AttackOutcome& warm_start, const CtriConfig& cfg);

/// TSI warm start (shared bandit across clouds) followed by gradient descent on
/// clouds the warm start did not fool.
std::vector<AttackOutcome> ctri(const Classifier& model, std::span<const Cloud> clouds,
                                const CtriConfig& cfg);

}  // namespace isorobust

#endif  // ISOROBUST_ATTACK_HPP
