#ifndef ISOROBUST_BANDIT_HPP
#define ISOROBUST_BANDIT_HPP

#include "isorobust/geometry.hpp"
#include "isorobust/random.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace isorobust {

/// Splits [lo, hi]^rank into divisions^rank equal cells. Cell coordinates are
/// 0-based; coordinate i covers [lo + i (hi - lo) / d, lo + (i + 1) (hi - lo) / d].
/// rank 3 parameterizes Euler angles, rank 2 a reflection axis (azimuth, polar).
struct AnglePartition {
  double lo = -3.141592653589793;
  double hi = 3.141592653589793;
  int divisions = 4;
  int rank = 3;

  void validate() const;
  std::size_t cell_count() const;
  std::pair<double, double> interval(int i) const;
  std::array<int, 3> cell_coords(std::size_t k) const;
  std::size_t cell_index(const std::array<int, 3>& coords) const;
};

/// Beta posteriors, one per cell. Starts at (1, 1) and only ever grows.
class BanditState {
 public:
  explicit BanditState(AnglePartition partition);
  BanditState(AnglePartition partition, std::vector<double> alpha, std::vector<double> beta);

  const AnglePartition& partition() const { return partition_; }
  std::size_t cell_count() const { return alpha_.size(); }
  double alpha(std::size_t k) const { return alpha_.at(k); }
  double beta(std::size_t k) const { return beta_.at(k); }
  std::span<const double> alphas() const { return alpha_; }
  std::span<const double> betas() const { return beta_; }

  /// (alpha_k, beta_k) += (reward, 1 - reward); other cells untouched.
  void update(std::size_t k, int reward);

  /// Sum over cells of alpha + beta - 2.
  double total_pulls() const;
  double posterior_mean(std::size_t k) const { return alpha_.at(k) / (alpha_[k] + beta_[k]); }

 private:
  AnglePartition partition_;
  std::vector<double> alpha_;
  std::vector<double> beta_;
};

/// Index of the largest draw; ties go to the lowest index.
std::size_t argmax_draws(std::span<const double> draws);

/// One Beta draw per cell, then the argmax.
std::size_t select_action(const BanditState& state, Rng& rng);

/// Uniform point of cell k, in partition order (unused trailing coordinates are 0).
std::array<double, 3> sample_cell(const AnglePartition& partition, std::size_t k, Rng& rng);

EulerAngles<double> sample_angles(const AnglePartition& partition, std::size_t k, Rng& rng);
ReflectionAxis<double> sample_reflection_axis(const AnglePartition& partition, std::size_t k,
                                              Rng& rng);

/// Posterior means averaged along one axis. For rank 3: xy averages over z,
/// xz over y, yz over x. For rank 2 only xy is filled (the cell means themselves).
struct HeatmapMarginals {
  Eigen::MatrixXd xy;
  Eigen::MatrixXd xz;
  Eigen::MatrixXd yz;
};

HeatmapMarginals heatmap_marginals(const BanditState& state);

}  // namespace isorobust

#endif  // ISOROBUST_BANDIT_HPP
