#include "isorobust/experiments.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

namespace isorobust {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

nlohmann::json tagged(const AttackOutcome& o, const std::string& group) {
  nlohmann::json j = outcome_to_json(o);
  j["group"] = group;
  return j;
}

// Outcomes index into the attacked subset; report them against the caller's clouds.
void remap(std::vector<AttackOutcome>& outcomes, std::span<const std::size_t> ids) {
  for (auto& o : outcomes) o.cloud_index = ids[o.cloud_index];
}

SuccessRate count(std::span<const AttackOutcome> outcomes) {
  SuccessRate r;
  r.attacked = outcomes.size();
  for (const auto& o : outcomes) r.successes += o.success ? 1 : 0;
  return r;
}

}  // namespace

nlohmann::json to_json(const TsiConfig& cfg) {
  return {{"lo", cfg.lo},
          {"hi", cfg.hi},
          {"divisions", cfg.divisions},
          {"max_samples", cfg.max_samples},
          {"family", family_name(cfg.family)},
          {"seed", cfg.seed}};
}

nlohmann::json to_json(const CtriConfig& cfg) {
  return {{"tsi", to_json(cfg.tsi)},
          {"max_iters", cfg.max_iters},
          {"eta", cfg.eta},
          {"lambda", cfg.lambda},
          {"kappa", cfg.kappa},
          {"target", cfg.target_rule == TargetRule::SecondLogit
                         ? nlohmann::json("second-logit")
                         : nlohmann::json(cfg.fixed_target)},
          {"degeneracy_tol", cfg.degeneracy_tol}};
}

nlohmann::json to_json(const TrainConfig& cfg) {
  const auto& a = cfg.augmentation;
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"augment", cfg.augment},
          {"augmentation",
           {{"rotate_y", {a.rotate_y_lo, a.rotate_y_hi}},
            {"scale", {a.scale_lo, a.scale_hi}},
            {"translate", a.translate},
            {"jitter_sigma", a.jitter_sigma},
            {"jitter_clip", a.jitter_clip}}},
          {"p_rotation", cfg.p_rotation},
          {"point_widths", cfg.point_widths},
          {"head_widths", cfg.head_widths},
          {"seed", cfg.seed}};
}

nlohmann::json to_json(const ShapeDatasetSpec& spec) {
  return {{"classes", spec.classes},         {"points_per_cloud", spec.points_per_cloud},
          {"train_count", spec.train_count}, {"test_count", spec.test_count},
          {"noise_sigma", spec.noise_sigma}, {"seed", spec.seed}};
}

nlohmann::json to_json(const TrainReport& report) {
  return {{"epochs", report.epochs},
          {"train_accuracy", report.train_accuracy},
          {"test_accuracy", report.test_accuracy},
          {"epoch_loss", report.epoch_loss}};
}

std::vector<std::size_t> select_attack_set(const Classifier& model, std::span<const Cloud> clouds,
                                           std::size_t max_clouds) {
  std::vector<std::size_t> ids = correctly_classified(model, clouds);
  if (ids.size() > max_clouds) ids.resize(max_clouds);
  return ids;
}

std::vector<Cloud> gather(std::span<const Cloud> clouds, std::span<const std::size_t> ids) {
  std::vector<Cloud> out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(clouds[i]);
  return out;
}

TsiEvalResult run_tsi_eval(const Classifier& model, std::span<const Cloud> clouds,
                           const TsiEvalConfig& cfg) {
  const auto start = Clock::now();
  if (cfg.budgets.empty()) throw std::invalid_argument("TSI evaluation needs at least one budget");
  TsiConfig tsi_cfg = cfg.tsi;
  tsi_cfg.max_samples = *std::max_element(cfg.budgets.begin(), cfg.budgets.end());
  tsi_cfg.validate();

  TsiEvalResult result;
  const auto correct = correctly_classified(model, clouds);
  result.excluded = clouds.size() - correct.size();
  result.cloud_ids = correct;
  if (result.cloud_ids.size() > cfg.max_clouds) result.cloud_ids.resize(cfg.max_clouds);
  const std::vector<Cloud> attacked = gather(clouds, result.cloud_ids);

  result.state = BanditState(tsi_cfg.partition());
  Rng rng(derive_seed(tsi_cfg.seed, "tsi"));
  result.outcomes = tsi(model, attacked, tsi_cfg, result.state, rng);
  remap(result.outcomes, result.cloud_ids);

  RunReport& report = result.report;
  report.experiment = "tsi";
  report.seed = tsi_cfg.seed;
  report.seeds = {{"tsi", derive_seed(tsi_cfg.seed, "tsi")}};
  report.config = {{"tsi", to_json(tsi_cfg)}, {"budgets", cfg.budgets}, {"max_clouds", cfg.max_clouds}};
  for (const auto& o : result.outcomes) report.outcome_lines.push_back(tagged(o, "tsi"));
  for (int s : cfg.budgets) {
    SuccessRate r;
    r.attacked = result.outcomes.size();
    for (const auto& o : result.outcomes) r.successes += o.success && o.samples_used <= s ? 1 : 0;
    result.rates.emplace_back(s, r);
    add_group_aggregate(report, "tsi", s);
  }
  report.extra = {{"excluded", result.excluded},
                  {"bandit", bandit_to_json(result.state)},
                  {"heatmap", heatmap_to_json(heatmap_marginals(result.state))}};
  report.wall_clock_seconds = seconds_since(start);
  return result;
}

CtriEvalResult run_ctri_eval(const Classifier& model, std::span<const Cloud> clouds,
                             const CtriEvalConfig& cfg) {
  const auto start = Clock::now();
  cfg.ctri.validate();
  CtriEvalResult result;
  const auto correct = correctly_classified(model, clouds);
  result.excluded = clouds.size() - correct.size();
  result.cloud_ids = correct;
  if (result.cloud_ids.size() > cfg.max_clouds) result.cloud_ids.resize(cfg.max_clouds);
  const std::vector<Cloud> attacked = gather(clouds, result.cloud_ids);

  RunReport& report = result.report;
  report.experiment = "ctri";
  report.seed = cfg.ctri.tsi.seed;
  report.seeds = {{"tsi", derive_seed(cfg.ctri.tsi.seed, "tsi")}};
  report.config = {{"ctri", to_json(cfg.ctri)},
                   {"iterations", cfg.iterations},
                   {"half_ranges", cfg.half_ranges},
                   {"max_clouds", cfg.max_clouds}};

  nlohmann::json table = nlohmann::json::array();
  for (double eps : cfg.half_ranges) {
    CtriConfig range_cfg = cfg.ctri;
    range_cfg.tsi.lo = -eps;
    range_cfg.tsi.hi = eps;
    range_cfg.validate();
    std::vector<AttackOutcome> warm = tsi(model, attacked, range_cfg.tsi);
    const std::string tsi_group = "tsi[eps=" + fmt(eps) + "]";

    for (int k : cfg.iterations) {
      range_cfg.max_iters = k;
      range_cfg.validate();
      CtriEvalEntry entry;
      entry.half_range = eps;
      entry.max_iters = k;
      entry.tsi = count(warm);
      for (std::size_t n = 0; n < attacked.size(); ++n)
        entry.outcomes.push_back(ctri_descend(model, attacked[n], warm[n], range_cfg));
      remap(entry.outcomes, result.cloud_ids);
      entry.ctri = count(entry.outcomes);
      entry.penalty = penalty_stats(entry.outcomes);

      const std::string group = "ctri[eps=" + fmt(eps) + ",K=" + std::to_string(k) + "]";
      for (const auto& o : entry.outcomes) report.outcome_lines.push_back(tagged(o, group));
      add_group_aggregate(report, group, std::nullopt, true);
      table.push_back({{"half_range", eps},
                       {"K", k},
                       {"tsi", rate_to_json(entry.tsi)},
                       {"ctri", rate_to_json(entry.ctri)},
                       {"penalty", penalty_stats_to_json(entry.penalty)}});
      result.entries.push_back(std::move(entry));
    }
    remap(warm, result.cloud_ids);
    for (const auto& o : warm) report.outcome_lines.push_back(tagged(o, tsi_group));
    add_group_aggregate(report, tsi_group, std::nullopt, true);
    result.warm_starts.push_back(std::move(warm));
  }
  report.extra = {{"excluded", result.excluded}, {"table", table}};
  report.wall_clock_seconds = seconds_since(start);
  return result;
}

TransferResult run_transfer_eval(std::span<const NamedModel> models, std::span<const Cloud> clouds,
                                 const TransferConfig& cfg) {
  const auto start = Clock::now();
  if (models.size() < 2) throw std::invalid_argument("transfer evaluation needs two models");
  cfg.ctri.validate();
  TransferResult result;
  for (const auto& m : models) result.names.push_back(m.name);

  RunReport& report = result.report;
  report.experiment = "transfer";
  report.seed = cfg.ctri.tsi.seed;
  report.seeds = {{"tsi", derive_seed(cfg.ctri.tsi.seed, "tsi")},
                  {"baseline", derive_seed(cfg.ctri.tsi.seed, "baseline")}};
  report.config = {{"ctri", to_json(cfg.ctri)}, {"max_clouds", cfg.max_clouds}, {"models", result.names}};

  std::vector<std::vector<char>> correct(models.size(), std::vector<char>(clouds.size(), 0));
  for (std::size_t m = 0; m < models.size(); ++m)
    for (std::size_t i : correctly_classified(*models[m].model, clouds)) correct[m][i] = 1;

  for (std::size_t s = 0; s < models.size(); ++s) {
    const Classifier& source = *models[s].model;
    const std::vector<std::size_t> ids = select_attack_set(source, clouds, cfg.max_clouds);
    const std::vector<Cloud> attacked = gather(clouds, ids);
    std::vector<AttackOutcome> adv = ctri(source, attacked, cfg.ctri);
    const std::string source_group = "source[" + models[s].name + "]";
    for (std::size_t n = 0; n < adv.size(); ++n) {
      AttackOutcome o = adv[n];
      o.cloud_index = ids[n];
      report.outcome_lines.push_back(tagged(o, source_group));
    }
    add_group_aggregate(report, source_group, std::nullopt, true);

    for (std::size_t t = 0; t < models.size(); ++t) {
      if (t == s) continue;
      const Classifier& target = *models[t].model;
      TransferCell cell;
      cell.source = models[s].name;
      cell.target = models[t].name;
      std::vector<std::size_t> keep;  // positions within `attacked`
      for (std::size_t n = 0; n < ids.size(); ++n)
        if (correct[t][ids[n]]) keep.push_back(n);

      const std::string group = "transfer[" + cell.source + "->" + cell.target + "]";
      std::vector<Cloud> kept;
      for (std::size_t n : keep) {
        const Cloud moved = apply_transform(attacked[n], adv[n].transform);
        const Prediction pred = target.predict(moved);
        AttackOutcome o = adv[n];
        o.cloud_index = ids[n];
        o.final_class = pred.predicted_class;
        o.confidence = pred.probabilities(pred.predicted_class);
        o.success = pred.predicted_class != o.original_class;
        o.target_hit = o.target_class && pred.predicted_class == *o.target_class;
        ++cell.transfer.attacked;
        cell.transfer.successes += o.success ? 1 : 0;
        ++cell.source_attack.attacked;
        cell.source_attack.successes += adv[n].success ? 1 : 0;
        report.outcome_lines.push_back(tagged(o, group));
        kept.push_back(attacked[n]);
      }
      add_group_aggregate(report, group);

      TsiConfig base_cfg = cfg.ctri.tsi;
      base_cfg.max_samples = 1;
      base_cfg.seed = derive_seed(cfg.ctri.tsi.seed, "baseline");
      std::vector<AttackOutcome> base = tsi(target, kept, base_cfg);
      const std::string base_group = "baseline[" + cell.source + "->" + cell.target + "]";
      for (std::size_t n = 0; n < base.size(); ++n) {
        base[n].cloud_index = ids[keep[n]];
        report.outcome_lines.push_back(tagged(base[n], base_group));
      }
      cell.baseline = count(base);
      add_group_aggregate(report, base_group);
      result.cells.push_back(std::move(cell));
    }
  }

  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells)
    cells.push_back({{"source", c.source},
                     {"target", c.target},
                     {"source_attack", rate_to_json(c.source_attack)},
                     {"transfer", rate_to_json(c.transfer)},
                     {"baseline", rate_to_json(c.baseline)}});
  report.extra = {{"cells", cells}};
  report.wall_clock_seconds = seconds_since(start);
  return result;
}

std::string TransferResult::matrix_csv() const {
  std::ostringstream out;
  out << std::setprecision(6) << "source";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& s : names) {
    out << s;
    for (const auto& t : names) {
      out << ',';
      if (s == t) {
        out << '/';
        continue;
      }
      for (const auto& c : cells)
        if (c.source == s && c.target == t && c.transfer.rate()) out << *c.transfer.rate();
    }
    out << '\n';
  }
  return out.str();
}

TradeoffResult run_augmentation_tradeoff(const ShapeDataset& data, const TrainConfig& train_cfg,
                                         const TradeoffConfig& cfg) {
  const auto start = Clock::now();
  if (cfg.repeats < 1) throw std::invalid_argument("tradeoff needs at least one repeat");
  cfg.tsi.validate();
  cfg.ctri.validate();
  TradeoffResult result;
  RunReport& report = result.report;
  report.experiment = "tradeoff";
  report.seed = train_cfg.seed;
  report.config = {{"train", to_json(train_cfg)},
                   {"probabilities", cfg.probabilities},
                   {"repeats", cfg.repeats},
                   {"tsi", to_json(cfg.tsi)},
                   {"ctri", to_json(cfg.ctri)},
                   {"max_clouds", cfg.max_clouds}};
  nlohmann::json repeat_seeds = nlohmann::json::array();
  for (int r = 0; r < cfg.repeats; ++r)
    repeat_seeds.push_back(r == 0 ? train_cfg.seed
                                  : derive_seed(train_cfg.seed, "repeat-" + std::to_string(r)));
  report.seeds = {{"repeats", repeat_seeds}};

  nlohmann::json rows = nlohmann::json::array();
  for (double p : cfg.probabilities) {
    TradeoffRow row;
    row.p = p;
    std::optional<MiniPointNet> victim;
    for (int r = 0; r < cfg.repeats; ++r) {
      TrainConfig tc = train_cfg;
      tc.p_rotation = p;
      tc.seed = repeat_seeds[static_cast<std::size_t>(r)].get<std::uint64_t>();
      TrainResult trained = train(data, tc);
      row.accuracies.push_back(trained.report.test_accuracy);
      if (r == 0) victim.emplace(std::move(trained.params));
    }
    double mean = 0.0;
    for (double a : row.accuracies) mean += a;
    mean /= static_cast<double>(row.accuracies.size());
    double var = 0.0;
    for (double a : row.accuracies) var += (a - mean) * (a - mean);
    row.accuracy_mean = mean;
    row.accuracy_var = var / static_cast<double>(row.accuracies.size());

    const auto ids = select_attack_set(*victim, data.test, cfg.max_clouds);
    const std::vector<Cloud> attacked = gather(data.test, ids);
    std::vector<AttackOutcome> tsi_out = tsi(*victim, attacked, cfg.tsi);
    std::vector<AttackOutcome> ctri_out = ctri(*victim, attacked, cfg.ctri);
    remap(tsi_out, ids);
    remap(ctri_out, ids);
    row.tsi = count(tsi_out);
    row.ctri = count(ctri_out);

    const std::string tag = "[p=" + fmt(p) + "]";
    for (const auto& o : tsi_out) report.outcome_lines.push_back(tagged(o, "tsi" + tag));
    for (const auto& o : ctri_out) report.outcome_lines.push_back(tagged(o, "ctri" + tag));
    add_group_aggregate(report, "tsi" + tag);
    add_group_aggregate(report, "ctri" + tag, std::nullopt, true);
    rows.push_back({{"p", p},
                    {"accuracies", row.accuracies},
                    {"accuracy_mean", row.accuracy_mean},
                    {"accuracy_var", row.accuracy_var},
                    {"tsi", rate_to_json(row.tsi)},
                    {"ctri", rate_to_json(row.ctri)}});
    result.rows.push_back(std::move(row));
  }
  report.extra = {{"rows", rows}};
  report.wall_clock_seconds = seconds_since(start);
  return result;
}

std::string TradeoffResult::csv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "p,accuracy_mean,accuracy_var,tsi_rate,ctri_rate,attacked\n";
  for (const auto& r : rows) {
    out << r.p << ',' << r.accuracy_mean << ',' << r.accuracy_var << ',';
    if (r.tsi.rate()) out << *r.tsi.rate();
    out << ',';
    if (r.ctri.rate()) out << *r.ctri.rate();
    out << ',' << r.tsi.attacked << '\n';
  }
  return out.str();
}

}  // namespace isorobust
