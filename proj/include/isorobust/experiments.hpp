#ifndef ISOROBUST_EXPERIMENTS_HPP
#define ISOROBUST_EXPERIMENTS_HPP

#include "isorobust/attack.hpp"
#include "isorobust/bandit.hpp"
#include "isorobust/model.hpp"
#include "isorobust/pointcloud.hpp"
#include "isorobust/report.hpp"

#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace isorobust {

nlohmann::json to_json(const TsiConfig& cfg);
nlohmann::json to_json(const CtriConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const ShapeDatasetSpec& spec);
nlohmann::json to_json(const TrainReport& report);

/// First `max_clouds` clouds (in order) that the model classifies correctly.
/// Misclassified clouds never enter any attack statistic.
std::vector<std::size_t> select_attack_set(const Classifier& model, std::span<const Cloud> clouds,
                                           std::size_t max_clouds);

std::vector<Cloud> gather(std::span<const Cloud> clouds, std::span<const std::size_t> ids);

/// Success within budget s of a single max-budget run: success and samples_used <= s.
/// Budgets therefore nest and the rates are non-decreasing in s.
struct TsiEvalConfig {
  TsiConfig tsi;
  std::vector<int> budgets{1, 2, 10};
  std::size_t max_clouds = 200;
};

struct TsiEvalResult {
  std::vector<std::size_t> cloud_ids;
  std::size_t excluded = 0;
  std::vector<AttackOutcome> outcomes;
  std::vector<std::pair<int, SuccessRate>> rates;
  BanditState state{AnglePartition{}};
  RunReport report;
};

TsiEvalResult run_tsi_eval(const Classifier& model, std::span<const Cloud> clouds,
                           const TsiEvalConfig& cfg);

/// For every half-width eps the TSI warm start runs once on [-eps, eps] and
/// each K continues from those same warm starts, so CTRI and TSI are paired.
struct CtriEvalConfig {
  CtriConfig ctri;
  std::vector<int> iterations{7, 50, 1000};
  std::vector<double> half_ranges{std::numbers::pi};
  std::size_t max_clouds = 200;
};

struct CtriEvalEntry {
  double half_range = 0.0;
  int max_iters = 0;
  SuccessRate tsi;
  SuccessRate ctri;
  PenaltyStats penalty;
  std::vector<AttackOutcome> outcomes;
};

struct CtriEvalResult {
  std::vector<std::size_t> cloud_ids;
  std::size_t excluded = 0;
  std::vector<std::vector<AttackOutcome>> warm_starts;  // one per half range
  std::vector<CtriEvalEntry> entries;
  RunReport report;
};

CtriEvalResult run_ctri_eval(const Classifier& model, std::span<const Cloud> clouds,
                             const CtriEvalConfig& cfg);

struct NamedModel {
  std::string name;
  const Classifier* model = nullptr;
};

struct TransferConfig {
  CtriConfig ctri;
  std::size_t max_clouds = 200;
};

/// Source attacks its own correctly classified clouds with CTRI; the target is
/// scored on the resulting P A*^T for clouds it classifies correctly at identity.
/// The baseline is TSI with S = 1 on the target over the same clouds.
struct TransferCell {
  std::string source;
  std::string target;
  SuccessRate source_attack;  // on the evaluated clouds
  SuccessRate transfer;
  SuccessRate baseline;
};

struct TransferResult {
  std::vector<std::string> names;
  std::vector<TransferCell> cells;  // off-diagonal only
  RunReport report;

  /// Rows = source, columns = target, "/" on the diagonal.
  std::string matrix_csv() const;
};

TransferResult run_transfer_eval(std::span<const NamedModel> models, std::span<const Cloud> clouds,
                                 const TransferConfig& cfg);

struct TradeoffConfig {
  std::vector<double> probabilities{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int repeats = 3;
  TsiConfig tsi;
  CtriConfig ctri{.max_iters = 50};
  std::size_t max_clouds = 200;
};

struct TradeoffRow {
  double p = 0.0;
  std::vector<double> accuracies;
  double accuracy_mean = 0.0;
  double accuracy_var = 0.0;  // population variance over repeats
  SuccessRate tsi;
  SuccessRate ctri;
};

struct TradeoffResult {
  std::vector<TradeoffRow> rows;
  RunReport report;

  std::string csv() const;
};

/// Repeat r trains with seed train.seed for r = 0 and derive_seed(train.seed, "repeat-r")
/// otherwise; the same seeds are used for every p. Attacks target the repeat-0 model.
TradeoffResult run_augmentation_tradeoff(const ShapeDataset& data, const TrainConfig& train,
                                         const TradeoffConfig& cfg);

}  // namespace isorobust

#endif  // ISOROBUST_EXPERIMENTS_HPP
