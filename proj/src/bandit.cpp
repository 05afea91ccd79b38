#include "isorobust/bandit.hpp"

#include <stdexcept>
#include <string>

namespace isorobust {

void AnglePartition::validate() const {
  if (!(lo < hi)) throw std::invalid_argument("angle range requires lo < hi");
  if (divisions < 1) throw std::invalid_argument("divisions must be at least 1");
  if (rank != 2 && rank != 3) throw std::invalid_argument("partition rank must be 2 or 3");
}

std::size_t AnglePartition::cell_count() const {
  std::size_t n = 1;
  for (int r = 0; r < rank; ++r) n *= static_cast<std::size_t>(divisions);
  return n;
}

std::pair<double, double> AnglePartition::interval(int i) const {
  const double width = (hi - lo) / divisions;
  // The last cell ends exactly at hi.
  return {lo + i * width, i + 1 == divisions ? hi : lo + (i + 1) * width};
}

std::array<int, 3> AnglePartition::cell_coords(std::size_t k) const {
  if (k >= cell_count()) throw std::out_of_range("cell index " + std::to_string(k));
  std::array<int, 3> coords{0, 0, 0};
  const auto d = static_cast<std::size_t>(divisions);
  for (int r = rank - 1; r >= 0; --r) {
    coords[r] = static_cast<int>(k % d);
    k /= d;
  }
  return coords;
}

std::size_t AnglePartition::cell_index(const std::array<int, 3>& coords) const {
  std::size_t k = 0;
  for (int r = 0; r < rank; ++r) {
    if (coords[r] < 0 || coords[r] >= divisions) throw std::out_of_range("cell coordinate");
    k = k * static_cast<std::size_t>(divisions) + static_cast<std::size_t>(coords[r]);
  }
  return k;
}

BanditState::BanditState(AnglePartition partition)
    : partition_(partition),
      alpha_((partition.validate(), partition.cell_count()), 1.0),
      beta_(partition.cell_count(), 1.0) {}

BanditState::BanditState(AnglePartition partition, std::vector<double> alpha,
                         std::vector<double> beta)
    : partition_(partition), alpha_(std::move(alpha)), beta_(std::move(beta)) {
  partition_.validate();
  if (alpha_.size() != partition_.cell_count() || beta_.size() != partition_.cell_count())
    throw std::invalid_argument("bandit parameter count does not match partition");
  for (std::size_t k = 0; k < alpha_.size(); ++k)
    if (!(alpha_[k] >= 1.0) || !(beta_[k] >= 1.0))
      throw std::invalid_argument("bandit parameters must be >= 1");
}

void BanditState::update(std::size_t k, int reward) {
  if (reward != 0 && reward != 1) throw std::invalid_argument("reward must be 0 or 1");
  if (k >= alpha_.size()) throw std::out_of_range("cell index " + std::to_string(k));
  alpha_[k] += reward;
  beta_[k] += 1 - reward;
}

double BanditState::total_pulls() const {
  double n = 0.0;
  for (std::size_t k = 0; k < alpha_.size(); ++k) n += alpha_[k] + beta_[k] - 2.0;
  return n;
}

std::size_t argmax_draws(std::span<const double> draws) {
  if (draws.empty()) throw std::invalid_argument("no draws");
  std::size_t best = 0;
  for (std::size_t k = 1; k < draws.size(); ++k)
    if (draws[k] > draws[best]) best = k;
  return best;
}

std::size_t select_action(const BanditState& state, Rng& rng) {
  std::vector<double> draws(state.cell_count());
  for (std::size_t k = 0; k < draws.size(); ++k)
    draws[k] = sample_beta(rng, state.alpha(k), state.beta(k));
  return argmax_draws(draws);
}

std::array<double, 3> sample_cell(const AnglePartition& partition, std::size_t k, Rng& rng) {
  const auto coords = partition.cell_coords(k);
  std::array<double, 3> theta{0.0, 0.0, 0.0};
  for (int r = 0; r < partition.rank; ++r) {
    const auto [a, b] = partition.interval(coords[r]);
    theta[r] = uniform(rng, a, b);
  }
  return theta;
}

EulerAngles<double> sample_angles(const AnglePartition& partition, std::size_t k, Rng& rng) {
  if (partition.rank != 3) throw std::invalid_argument("Euler angles need a rank-3 partition");
  const auto t = sample_cell(partition, k, rng);
  return {t[0], t[1], t[2]};
}

ReflectionAxis<double> sample_reflection_axis(const AnglePartition& partition, std::size_t k,
                                              Rng& rng) {
  if (partition.rank != 2)
    throw std::invalid_argument("reflection axes need a rank-2 partition");
  const auto t = sample_cell(partition, k, rng);
  return {t[0], t[1]};
}

HeatmapMarginals heatmap_marginals(const BanditState& state) {
  const auto& part = state.partition();
  const int d = part.divisions;
  HeatmapMarginals out;
  if (part.rank == 2) {
    out.xy.resize(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out.xy(i, j) = state.posterior_mean(part.cell_index({i, j, 0}));
    return out;
  }
  out.xy = Eigen::MatrixXd::Zero(d, d);
  out.xz = Eigen::MatrixXd::Zero(d, d);
  out.yz = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t k = 0; k < state.cell_count(); ++k) {
    const auto [i, j, h] = part.cell_coords(k);
    const double mean = state.posterior_mean(k);
    out.xy(i, j) += mean;
    out.xz(i, h) += mean;
    out.yz(j, h) += mean;
  }
  out.xy /= d;
  out.xz /= d;
  out.yz /= d;
  return out;
}

}  // namespace isorobust
