#include "isorobust/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace isorobust {

nlohmann::json transform_to_json(const Transform3<double>& a) {
  nlohmann::json j = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j.push_back(a(r, c));
  return j;
}

Transform3<double> transform_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 9)
    throw std::invalid_argument("transform must be a 9-element array");
  Transform3<double> a;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a(r, c) = j.at(static_cast<std::size_t>(r * 3 + c)).get<double>();
  return a;
}

nlohmann::json outcome_to_json(const AttackOutcome& o) {
  nlohmann::json j{{"cloud", o.cloud_index},
                   {"transform", transform_to_json(o.transform)},
                   {"success", o.success},
                   {"penalty", o.penalty},
                   {"samples_used", o.samples_used},
                   {"gradient_steps", o.gradient_steps},
                   {"degenerate_steps", o.degenerate_steps},
                   {"warm_start_success", o.warm_start_success},
                   {"original_class", o.original_class},
                   {"final_class", o.final_class},
                   {"target_hit", o.target_hit},
                   {"confidence", o.confidence}};
  j["target_class"] = o.target_class ? nlohmann::json(*o.target_class) : nlohmann::json();
  return j;
}

AttackOutcome outcome_from_json(const nlohmann::json& j) {
  AttackOutcome o;
  o.cloud_index = j.at("cloud").get<std::size_t>();
  o.transform = transform_from_json(j.at("transform"));
  o.success = j.at("success").get<bool>();
  o.penalty = j.at("penalty").get<double>();
  o.samples_used = j.value("samples_used", 0);
  o.gradient_steps = j.value("gradient_steps", 0);
  o.degenerate_steps = j.value("degenerate_steps", 0);
  o.warm_start_success = j.value("warm_start_success", false);
  o.original_class = j.at("original_class").get<int>();
  o.final_class = j.at("final_class").get<int>();
  if (j.contains("target_class") && !j["target_class"].is_null())
    o.target_class = j["target_class"].get<int>();
  o.target_hit = j.value("target_hit", false);
  o.confidence = j.value("confidence", 0.0);
  return o;
}

namespace {

std::pair<double, double> mean_var(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, var / static_cast<double>(v.size())};
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

}  // namespace

PenaltyStats penalty_stats(std::span<const double> penalties) {
  PenaltyStats s;
  s.count = penalties.size();
  if (penalties.empty()) return s;
  const std::vector<double> all(penalties.begin(), penalties.end());
  std::vector<double> nonzero;
  std::copy_if(all.begin(), all.end(), std::back_inserter(nonzero), [](double p) { return p > 0.0; });
  s.nonzero_count = nonzero.size();
  s.max = *std::max_element(all.begin(), all.end());
  std::tie(s.mean, s.var) = mean_var(all);
  if (!nonzero.empty()) std::tie(s.mean_nonzero, s.var_nonzero) = mean_var(nonzero);
  return s;
}

PenaltyStats penalty_stats(std::span<const AttackOutcome> outcomes) {
  std::vector<double> p;
  for (const auto& o : outcomes)
    if (o.success) p.push_back(o.penalty);
  return penalty_stats(p);
}

nlohmann::json penalty_stats_to_json(const PenaltyStats& s) {
  return {{"count", s.count},     {"nonzero_count", s.nonzero_count},
          {"max", opt(s.max)},    {"mean", opt(s.mean)},
          {"var", opt(s.var)},    {"mean_nonzero", opt(s.mean_nonzero)},
          {"var_nonzero", opt(s.var_nonzero)}};
}

std::optional<double> SuccessRate::rate() const {
  if (attacked == 0) return std::nullopt;
  return static_cast<double>(successes) / static_cast<double>(attacked);
}

nlohmann::json rate_to_json(const SuccessRate& r) {
  nlohmann::json j{{"attacked", r.attacked}, {"successes", r.successes}, {"rate", opt(r.rate())}};
  if (r.attacked == 0) j["zero_denominator"] = true;
  return j;
}

nlohmann::json bandit_to_json(const BanditState& state) {
  const auto& p = state.partition();
  return {{"lo", p.lo},
          {"hi", p.hi},
          {"divisions", p.divisions},
          {"rank", p.rank},
          {"alpha", std::vector<double>(state.alphas().begin(), state.alphas().end())},
          {"beta", std::vector<double>(state.betas().begin(), state.betas().end())}};
}

BanditState bandit_from_json(const nlohmann::json& j) {
  const AnglePartition p{j.at("lo").get<double>(), j.at("hi").get<double>(),
                         j.at("divisions").get<int>(), j.at("rank").get<int>()};
  return BanditState(p, j.at("alpha").get<std::vector<double>>(),
                     j.at("beta").get<std::vector<double>>());
}

nlohmann::json heatmap_to_json(const HeatmapMarginals& h) {
  auto mat = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  nlohmann::json j{{"xy", mat(h.xy)}};
  if (h.xz.size() > 0) j["xz"] = mat(h.xz);
  if (h.yz.size() > 0) j["yz"] = mat(h.yz);
  return j;
}

nlohmann::json RunReport::summary() const {
  return {{"schema_version", kReportSchemaVersion},
          {"experiment", experiment},
          {"seed", seed},
          {"seeds", seeds},
          {"config", config},
          {"aggregates", aggregates},
          {"extra", extra},
          {"outcome_count", outcome_lines.size()},
          {"wall_clock_seconds", wall_clock_seconds}};
}

std::string RunReport::outcome_text() const {
  std::string text;
  for (const auto& line : outcome_lines) {
    text += line.dump();
    text += '\n';
  }
  return text;
}

namespace {

nlohmann::json group_aggregate(std::span<const nlohmann::json> lines, const std::string& group,
                               std::optional<int> budget, bool with_penalty) {
  SuccessRate rate;
  std::vector<double> penalties;
  for (const auto& line : lines) {
    if (line.at("group").get<std::string>() != group) continue;
    ++rate.attacked;
    const bool ok = line.at("success").get<bool>() &&
                    (!budget || line.value("samples_used", 0) <= *budget);
    if (ok) {
      ++rate.successes;
      penalties.push_back(line.value("penalty", 0.0));
    }
  }
  nlohmann::json j = rate_to_json(rate);
  j["group"] = group;
  if (budget) j["budget"] = *budget;
  if (with_penalty) j["penalty"] = penalty_stats_to_json(penalty_stats(penalties));
  return j;
}

bool same_value(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>();
    const double y = b.get<double>();
    return std::abs(x - y) <= 1e-12 * std::max({1.0, std::abs(x), std::abs(y)});
  }
  if (a.is_object() && b.is_object()) {
    if (a.size() != b.size()) return false;
    for (auto it = a.begin(); it != a.end(); ++it)
      if (!b.contains(it.key()) || !same_value(it.value(), b.at(it.key()))) return false;
    return true;
  }
  return a == b;
}

}  // namespace

void add_group_aggregate(RunReport& report, const std::string& group, std::optional<int> budget,
                         bool with_penalty) {
  report.aggregates.push_back(group_aggregate(report.outcome_lines, group, budget, with_penalty));
}

std::vector<std::string> verify_report(const nlohmann::json& summary,
                                       std::span<const nlohmann::json> lines) {
  std::vector<std::string> problems;
  if (summary.value("schema_version", 0) != kReportSchemaVersion)
    problems.push_back("unsupported schema_version");
  if (summary.value("outcome_count", std::size_t{0}) != lines.size())
    problems.push_back("outcome_count does not match the number of outcome lines");
  for (const auto& agg : summary.at("aggregates")) {
    const std::string group = agg.at("group").get<std::string>();
    std::optional<int> budget;
    if (agg.contains("budget")) budget = agg["budget"].get<int>();
    const nlohmann::json again = group_aggregate(lines, group, budget, agg.contains("penalty"));
    for (auto it = again.begin(); it != again.end(); ++it)
      if (!agg.contains(it.key()) || !same_value(agg.at(it.key()), it.value()))
        problems.push_back("group '" + group + "': field '" + it.key() + "' does not recompute");
  }
  return problems;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<nlohmann::json> lines;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      lines.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what(), n);
    }
  }
  return lines;
}

std::string aggregates_csv(const nlohmann::json& aggregates) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "group,budget,attacked,successes,rate,penalty_max,penalty_mean,penalty_var,"
         "penalty_mean_nonzero,penalty_var_nonzero\n";
  auto cell = [&out](const nlohmann::json& j, const char* key) {
    if (j.contains(key) && !j.at(key).is_null()) {
      if (j.at(key).is_number_float())
        out << j.at(key).get<double>();
      else
        out << j.at(key).dump();
    }
  };
  for (const auto& a : aggregates) {
    out << a.at("group").get<std::string>() << ',';
    cell(a, "budget");
    out << ',' << a.value("attacked", 0) << ',' << a.value("successes", 0) << ',';
    cell(a, "rate");
    const nlohmann::json pen = a.value("penalty", nlohmann::json::object());
    for (const char* key : {"max", "mean", "var", "mean_nonzero", "var_nonzero"}) {
      out << ',';
      cell(pen, key);
    }
    out << '\n';
  }
  return out.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_report(const RunReport& report, const std::filesystem::path& dir,
                  const std::string& stem, bool csv) {
  std::filesystem::create_directories(dir);
  write_text(dir / (stem + "_summary.json"), report.summary().dump(2) + "\n");
  write_text(dir / (stem + "_outcomes.jsonl"), report.outcome_text());
  if (csv) write_text(dir / (stem + "_aggregates.csv"), aggregates_csv(report.aggregates));
}

std::string matrix_csv(const Eigen::MatrixXd& m) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
  return out.str();
}

std::string matrix_pgm(const Eigen::MatrixXd& m) {
  std::ostringstream out;
  out << "P2\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out << (j ? " " : "") << static_cast<int>(std::lround(255.0 * std::clamp(m(i, j), 0.0, 1.0)));
    out << '\n';
  }
  return out.str();
}

void write_heatmaps(const HeatmapMarginals& h, const std::filesystem::path& dir,
                    const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const std::pair<const char*, const Eigen::MatrixXd*> planes[] = {
      {"xy", &h.xy}, {"xz", &h.xz}, {"yz", &h.yz}};
  for (const auto& [name, m] : planes) {
    if (m->size() == 0) continue;
    write_text(dir / (prefix + "_" + name + ".csv"), matrix_csv(*m));
    write_text(dir / (prefix + "_" + name + ".pgm"), matrix_pgm(*m));
  }
}

}  // namespace isorobust
