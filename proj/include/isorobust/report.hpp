#ifndef ISOROBUST_REPORT_HPP
#define ISOROBUST_REPORT_HPP

#include "isorobust/attack.hpp"
#include "isorobust/bandit.hpp"
#include "isorobust/geometry.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace isorobust {

inline constexpr int kReportSchemaVersion = 1;

/// Row-major array of 9 entries.
nlohmann::json transform_to_json(const Transform3<double>& a);
Transform3<double> transform_from_json(const nlohmann::json& j);

nlohmann::json outcome_to_json(const AttackOutcome& o);
AttackOutcome outcome_from_json(const nlohmann::json& j);

/// Penalty statistics over successful outcomes. The starred pair only sees
/// strictly positive penalties, i.e. excludes successes that stayed orthogonal.
struct PenaltyStats {
  std::size_t count = 0;
  std::size_t nonzero_count = 0;
  std::optional<double> max;
  std::optional<double> mean;
  std::optional<double> var;
  std::optional<double> mean_nonzero;
  std::optional<double> var_nonzero;
};

/// Population mean / variance of the penalties themselves.
PenaltyStats penalty_stats(std::span<const double> penalties);
PenaltyStats penalty_stats(std::span<const AttackOutcome> outcomes);
nlohmann::json penalty_stats_to_json(const PenaltyStats& s);

struct SuccessRate {
  std::size_t attacked = 0;
  std::size_t successes = 0;

  std::optional<double> rate() const;
};

nlohmann::json rate_to_json(const SuccessRate& r);

nlohmann::json bandit_to_json(const BanditState& state);
BanditState bandit_from_json(const nlohmann::json& j);
nlohmann::json heatmap_to_json(const HeatmapMarginals& h);

/// One experiment's output. `aggregates` is an array of group records
/// {"group", "attacked", "successes", "rate", optional "budget", optional "penalty"}
/// and every outcome line carries the "group" it belongs to.
struct RunReport {
  std::string experiment;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json aggregates = nlohmann::json::array();
  nlohmann::json extra = nlohmann::json::object();
  std::vector<nlohmann::json> outcome_lines;
  double wall_clock_seconds = 0.0;

  nlohmann::json summary() const;
  /// Outcome lines joined with '\n'; deterministic for a fixed seed.
  std::string outcome_text() const;
};

/// Adds an aggregate record for `group`, computed from the lines that carry it.
void add_group_aggregate(RunReport& report, const std::string& group,
                         std::optional<int> budget = std::nullopt, bool with_penalty = false);

/// Recomputes every aggregate from the outcome lines. Returns a list of
/// mismatches; empty means the report is self-consistent.
std::vector<std::string> verify_report(const nlohmann::json& summary,
                                       std::span<const nlohmann::json> lines);

/// <stem>_summary.json and <stem>_outcomes.jsonl under dir; plus
/// <stem>_aggregates.csv when `csv` is set.
void write_report(const RunReport& report, const std::filesystem::path& dir,
                  const std::string& stem, bool csv);

nlohmann::json read_json(const std::filesystem::path& path);
std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path);

std::string aggregates_csv(const nlohmann::json& aggregates);

/// d x d matrix as CSV rows.
std::string matrix_csv(const Eigen::MatrixXd& m);
/// Plain-text greyscale PGM (P2), values in [0, 1] mapped to 0..255.
std::string matrix_pgm(const Eigen::MatrixXd& m);

/// heatmap_{xy,xz,yz}.csv and .pgm under dir (only xy for rank-2 partitions).
void write_heatmaps(const HeatmapMarginals& h, const std::filesystem::path& dir,
                    const std::string& prefix = "heatmap");

}  // namespace isorobust

#endif  // ISOROBUST_REPORT_HPP
