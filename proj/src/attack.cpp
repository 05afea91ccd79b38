#include "isorobust/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace isorobust {

std::string family_name(TransformFamily f) {
  return f == TransformFamily::Rotation ? "rotation" : "reflection";
}

TransformFamily family_from_name(const std::string& name) {
  if (name == "rotation") return TransformFamily::Rotation;
  if (name == "reflection") return TransformFamily::Reflection;
  throw std::invalid_argument("unknown transform family '" + name + "'");
}

void TsiConfig::validate() const {
  if (!(lo < hi)) throw std::invalid_argument("TSI angle range requires lo < hi");
  if (divisions < 1) throw std::invalid_argument("TSI divisions must be at least 1");
  if (max_samples < 1) throw std::invalid_argument("TSI max_samples must be at least 1");
}

AnglePartition TsiConfig::partition() const {
  return {lo, hi, divisions, family == TransformFamily::Rotation ? 3 : 2};
}

void CtriConfig::validate() const {
  tsi.validate();
  if (max_iters < 0) throw std::invalid_argument("CTRI max_iters must be non-negative");
  if (!(eta > 0.0)) throw std::invalid_argument("CTRI eta must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("CTRI lambda must be positive");
  if (!(kappa >= 0.0)) throw std::invalid_argument("CTRI kappa must be non-negative");
  if (target_rule == TargetRule::Fixed && fixed_target < 0)
    throw std::invalid_argument("CTRI fixed target must be a class index");
}

CwLoss cw_loss(const Logits& z, int target, double kappa) {
  const auto c = static_cast<int>(z.values.size());
  if (c < 2) throw std::invalid_argument("CW loss needs at least two classes");
  if (target < 0 || target >= c) throw std::out_of_range("CW target out of range");
  int runner_up = target == 0 ? 1 : 0;
  for (int j = 0; j < c; ++j)
    if (j != target && z.values(j) > z.values(runner_up)) runner_up = j;
  const double margin = z.values(runner_up) - z.values(target);
  CwLoss loss{std::max(-kappa, margin), Eigen::VectorXd::Zero(c)};
  if (margin > -kappa) {
    loss.cotangent(runner_up) = 1.0;
    loss.cotangent(target) = -1.0;
  }
  return loss;
}

int select_target(const Logits& z, int true_class) {
  const auto c = static_cast<int>(z.values.size());
  if (c < 2) throw std::invalid_argument("target selection needs at least two classes");
  int best = true_class == 0 ? 1 : 0;
  for (int j = 0; j < c; ++j)
    if (j != true_class && z.values(j) > z.values(best)) best = j;
  return best;
}

Transform3<double> sample_isometry(const AnglePartition& partition, TransformFamily family,
                                   std::size_t k, Rng& rng) {
  if (family == TransformFamily::Rotation)
    return euler_to_rotation(sample_angles(partition, k, rng));
  // Cell angles may leave [0, pi] for the polar angle; re-derive canonical
  // spherical coordinates from the normal, which fixes the same plane.
  const auto raw = sample_reflection_axis(partition, k, rng);
  const Vector3<double> n = raw.normal();
  const ReflectionAxis<double> axis{std::atan2(n.y(), n.x()),
                                    std::acos(std::clamp(n.z(), -1.0, 1.0))};
  return householder_reflection(axis);
}

std::vector<std::size_t> correctly_classified(const Classifier& model,
                                              std::span<const Cloud> clouds) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < clouds.size(); ++i)
    if (clouds[i].label && model.predict(clouds[i]).predicted_class == *clouds[i].label)
      keep.push_back(i);
  return keep;
}

namespace {

int true_label(const Cloud& cloud) {
  if (!cloud.label) throw std::invalid_argument("attacks need labelled clouds");
  return *cloud.label;
}

AttackOutcome tsi_rounds(const Classifier& model, const Cloud& cloud, const TsiConfig& cfg,
                         const AnglePartition& partition, BanditState* state,
                         const BanditState& policy, Rng& rng, std::size_t index) {
  const int truth = true_label(cloud);
  AttackOutcome out;
  out.cloud_index = index;
  out.original_class = truth;

  double best_true_prob = std::numeric_limits<double>::infinity();
  for (int s = 1; s <= cfg.max_samples; ++s) {
    const std::size_t k = select_action(policy, rng);
    const Transform3<double> a = sample_isometry(partition, cfg.family, k, rng);
    const Prediction pred = model.predict(apply_transform(cloud, a));
    const int reward = pred.predicted_class != truth ? 1 : 0;
    if (state) state->update(k, reward);
    out.samples_used = s;

    if (reward == 1 || pred.probabilities(truth) < best_true_prob) {
      best_true_prob = pred.probabilities(truth);
      out.transform = a;
      out.final_class = pred.predicted_class;
      out.confidence = pred.probabilities(pred.predicted_class);
    }
    if (reward == 1) {
      out.success = true;
      break;
    }
  }
  out.penalty = 0.0;
  return out;
}

}  // namespace

AttackOutcome tsi_attack_cloud(const Classifier& model, const Cloud& cloud, const TsiConfig& cfg,
                               BanditState& state, Rng& rng, std::size_t index) {
  cfg.validate();
  const AnglePartition partition = cfg.partition();
  if (state.cell_count() != partition.cell_count() ||
      state.partition().rank != partition.rank)
    throw std::invalid_argument("bandit state does not match the TSI partition");
  return tsi_rounds(model, cloud, cfg, partition, &state, state, rng, index);
}

std::vector<AttackOutcome> tsi(const Classifier& model, std::span<const Cloud> clouds,
                               const TsiConfig& cfg, BanditState& state, Rng& rng) {
  std::vector<AttackOutcome> outcomes;
  outcomes.reserve(clouds.size());
  for (std::size_t n = 0; n < clouds.size(); ++n)
    outcomes.push_back(tsi_attack_cloud(model, clouds[n], cfg, state, rng, n));
  return outcomes;
}

std::vector<AttackOutcome> tsi(const Classifier& model, std::span<const Cloud> clouds,
                               const TsiConfig& cfg) {
  cfg.validate();
  BanditState state(cfg.partition());
  Rng rng(derive_seed(cfg.seed, "tsi"));
  return tsi(model, clouds, cfg, state, rng);
}

std::vector<AttackOutcome> tsi_frozen(const Classifier& model, std::span<const Cloud> clouds,
                                      const TsiConfig& cfg, const BanditState& snapshot,
                                      unsigned threads) {
  cfg.validate();
  const AnglePartition partition = cfg.partition();
  if (snapshot.cell_count() != partition.cell_count())
    throw std::invalid_argument("bandit snapshot does not match the TSI partition");
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const std::uint64_t base = derive_seed(cfg.seed, "tsi-frozen");

  std::vector<AttackOutcome> outcomes(clouds.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t n = first; n < clouds.size(); n += stride) {
      Rng rng(base ^ static_cast<std::uint64_t>(n));
      outcomes[n] = tsi_rounds(model, clouds[n], cfg, partition, nullptr, snapshot, rng, n);
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work, t, threads);
  work(0, threads);
  return outcomes;
}

TransformGradient transform_gradient(const Classifier& model, const Cloud& cloud,
                                     const Transform3<double>& a, int target, double lambda,
                                     double kappa, double degeneracy_tol) {
  const Cloud moved = apply_transform(cloud, a);
  TransformGradient out;
  out.logits = model.logits(moved);
  const CwLoss cw = cw_loss(out.logits, target, kappa);
  const auto pen = spectral_norm_penalty_subgradient(a, degeneracy_tol);
  out.penalty = spectral_norm_penalty(a);
  out.cw = cw.value;
  out.objective = out.penalty + lambda * cw.value;
  out.degenerate = pen.degenerate;
  out.gradient = pen.gradient;
  if (!cw.cotangent.isZero(0.0)) {
    // q_i = A p_i, so d/dA of a function of Q = P A^T is G^T P.
    const PointMatrix<double> g = model.input_gradient(moved, cw.cotangent);
    out.gradient += lambda * (g.transpose() * cloud.points);
  }
  return out;
}

AttackOutcome ctri_descend(const Classifier& model, const Cloud& cloud,
                           const AttackOutcome& warm_start, const CtriConfig& cfg) {
  const int truth = true_label(cloud);
  AttackOutcome out = warm_start;
  out.target_class = cfg.target_rule == TargetRule::Fixed
                         ? cfg.fixed_target
                         : select_target(model.logits(cloud), truth);
  if (*out.target_class >= model.class_count())
    throw std::out_of_range("CTRI target class out of range");

  if (warm_start.success) {
    out.warm_start_success = true;
    out.penalty = 0.0;
    out.target_hit = out.final_class == *out.target_class;
    return out;
  }

  Transform3<double> a = warm_start.transform;
  int steps = 0;
  TransformGradient tg;
  for (;;) {
    tg = transform_gradient(model, cloud, a, *out.target_class, cfg.lambda, cfg.kappa,
                            cfg.degeneracy_tol);
    if (argmax_class(tg.logits.values) != truth || steps >= cfg.max_iters) break;
    const Transform3<double> next = a - cfg.eta * tg.gradient;
    if (!next.allFinite()) break;
    if (tg.degenerate) ++out.degenerate_steps;
    a = next;
    ++steps;
  }

  const Prediction pred = prediction_from_logits(tg.logits);
  out.transform = a;
  out.gradient_steps = steps;
  out.final_class = pred.predicted_class;
  out.confidence = pred.probabilities(pred.predicted_class);
  out.success = pred.predicted_class != truth;
  out.target_hit = pred.predicted_class == *out.target_class;
  out.penalty = steps == 0 ? 0.0 : tg.penalty;
  return out;
}

std::vector<AttackOutcome> ctri(const Classifier& model, std::span<const Cloud> clouds,
                                const CtriConfig& cfg) {
  cfg.validate();
  BanditState state(cfg.tsi.partition());
  Rng rng(derive_seed(cfg.tsi.seed, "tsi"));
  std::vector<AttackOutcome> outcomes;
  outcomes.reserve(clouds.size());
  for (std::size_t n = 0; n < clouds.size(); ++n) {
    const AttackOutcome warm = tsi_attack_cloud(model, clouds[n], cfg.tsi, state, rng, n);
    outcomes.push_back(ctri_descend(model, clouds[n], warm, cfg));
  }
  return outcomes;
}

}  // namespace isorobust
