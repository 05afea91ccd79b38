#include "isorobust/config.hpp"
#include "isorobust/experiments.hpp"
#include "isorobust/report.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace isorobust;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string format = "json";
  std::string checkpoint;
  std::string manifest;
  std::vector<std::string> checkpoints;
  std::string report;
  bool save_adversarial = false;
};

Config load(const Options& opt) {
  Config cfg = opt.config_path.empty() ? Config{} : Config::from_file(opt.config_path);
  if (opt.seed) cfg.set("run.seed", std::to_string(*opt.seed));
  if (opt.out) cfg.set("run.out", *opt.out);
  if (!opt.checkpoint.empty()) cfg.set("train.checkpoint", opt.checkpoint);
  if (!opt.manifest.empty()) cfg.set("data.manifest", opt.manifest);
  if (!opt.checkpoints.empty()) {
    std::string joined;
    for (const auto& c : opt.checkpoints) joined += (joined.empty() ? "" : ",") + c;
    cfg.set("transfer.checkpoints", joined);
  }
  return cfg;
}

std::string percent(const SuccessRate& r) {
  const auto rate = r.rate();
  if (!rate) return "n/a (no attacked clouds)";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * *rate << "% (" << r.successes << "/"
    << r.attacked << ")";
  return s.str();
}

void save_adversarial(std::span<const Cloud> clouds, std::span<const AttackOutcome> outcomes,
                      const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& o : outcomes) {
    if (!o.success) continue;
    Cloud adv = apply_transform(clouds[o.cloud_index], o.transform);
    adv.label = o.final_class;
    std::ostringstream name;
    name << std::setw(5) << std::setfill('0') << o.cloud_index << ".pcb";
    save_cloud(adv, dir / name.str(), CloudFormat::Binary);
  }
}

int gen_data(const Config& cfg) {
  const auto spec = dataset_spec(cfg);
  const auto paths = run_paths(cfg);
  const auto data = generate_shapes(spec);
  const fs::path manifest = save_dataset(data, spec, paths.data_dir);
  std::cout << "wrote " << data.train.size() << " train and " << data.test.size()
            << " test clouds; manifest " << manifest.string() << "\n";
  return kOk;
}

int train_cmd(const Config& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const auto paths = run_paths(cfg);
  const auto tc = train_config(cfg);
  const auto data = load_dataset(paths.manifest);
  const auto result = train(data, tc);
  fs::create_directories(paths.checkpoint.parent_path().empty() ? fs::path(".")
                                                                 : paths.checkpoint.parent_path());
  save_checkpoint(result.params, paths.checkpoint);

  RunReport report;
  report.experiment = "train";
  report.seed = run_seed(cfg);
  report.seeds = {{"model", tc.seed}};
  report.config = {{"train", to_json(tc)}, {"manifest", paths.manifest.string()}};
  report.extra = {{"report", to_json(result.report)}, {"checkpoint", paths.checkpoint.string()}};
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_report(report, paths.out, "train", false);
  std::cout << "test accuracy " << result.report.test_accuracy << "; checkpoint "
            << paths.checkpoint.string() << "\n";
  return kOk;
}

int attack_tsi(const Config& cfg, const Options& opt) {
  const auto paths = run_paths(cfg);
  const auto ecfg = tsi_eval_config(cfg);
  const MiniPointNet model(load_checkpoint(paths.checkpoint));
  const auto data = load_dataset(paths.manifest);
  auto result = run_tsi_eval(model, data.test, ecfg);
  write_report(result.report, paths.out, "tsi", opt.format == "csv");
  write_heatmaps(heatmap_marginals(result.state), paths.out, "tsi_heatmap");
  if (opt.save_adversarial) save_adversarial(data.test, result.outcomes, paths.out / "adversarial" / "tsi");
  std::cout << "excluded " << result.excluded << " misclassified clouds\n";
  for (const auto& [s, rate] : result.rates) std::cout << "S=" << s << ": " << percent(rate) << "\n";
  return kOk;
}

int attack_ctri(const Config& cfg, const Options& opt) {
  const auto paths = run_paths(cfg);
  const auto ecfg = ctri_eval_config(cfg);
  const MiniPointNet model(load_checkpoint(paths.checkpoint));
  const auto data = load_dataset(paths.manifest);
  const auto result = run_ctri_eval(model, data.test, ecfg);
  write_report(result.report, paths.out, "ctri", opt.format == "csv");
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    const auto& e = result.entries[i];
    std::cout << "eps=" << e.half_range << " K=" << e.max_iters << ": TSI " << percent(e.tsi)
              << ", CTRI " << percent(e.ctri) << "\n";
    if (opt.save_adversarial)
      save_adversarial(data.test, e.outcomes,
                       paths.out / "adversarial" / ("ctri_" + std::to_string(i)));
  }
  return kOk;
}

int transfer_cmd(const Config& cfg, const Options& opt) {
  const auto paths = run_paths(cfg);
  if (paths.transfer_checkpoints.size() < 2)
    throw ConfigError("transfer needs at least two checkpoints (transfer.checkpoints)");
  const auto tcfg = transfer_config(cfg);
  std::vector<MiniPointNet> models;
  for (const auto& p : paths.transfer_checkpoints) models.emplace_back(load_checkpoint(p));
  std::vector<NamedModel> named;
  for (std::size_t i = 0; i < models.size(); ++i)
    named.push_back({paths.transfer_checkpoints[i].stem().string(), &models[i]});
  const auto data = load_dataset(paths.manifest);
  const auto result = run_transfer_eval(named, data.test, tcfg);
  write_report(result.report, paths.out, "transfer", opt.format == "csv");
  std::ofstream(paths.out / "transfer_matrix.csv") << result.matrix_csv();
  for (const auto& c : result.cells)
    std::cout << c.source << " -> " << c.target << ": transfer " << percent(c.transfer)
              << ", random isometry " << percent(c.baseline) << "\n";
  return kOk;
}

int tradeoff_cmd(const Config& cfg, const Options& opt) {
  const auto paths = run_paths(cfg);
  const auto tcfg = tradeoff_config(cfg);
  const auto train_cfg = train_config(cfg);
  const auto data = load_dataset(paths.manifest);
  const auto result = run_augmentation_tradeoff(data, train_cfg, tcfg);
  write_report(result.report, paths.out, "tradeoff", opt.format == "csv");
  std::ofstream(paths.out / "tradeoff.csv") << result.csv();
  for (const auto& r : result.rows)
    std::cout << "p=" << r.p << ": accuracy " << r.accuracy_mean << " (var " << r.accuracy_var
              << "), TSI " << percent(r.tsi) << ", CTRI " << percent(r.ctri) << "\n";
  return kOk;
}

int heatmap_cmd(const Config& cfg, const Options& opt) {
  const auto paths = run_paths(cfg);
  const fs::path source = opt.report.empty() ? paths.out / "tsi_summary.json" : fs::path(opt.report);
  const auto summary = read_json(source);
  if (!summary.contains("extra") || !summary["extra"].contains("bandit"))
    throw std::runtime_error(source.string() + " carries no bandit state");
  const BanditState state = bandit_from_json(summary["extra"]["bandit"]);
  write_heatmaps(heatmap_marginals(state), paths.out);
  std::cout << "wrote heat maps under " << paths.out.string() << "\n";
  return kOk;
}

int convert_report(const Config& cfg, const Options& opt) {
  const auto paths = run_paths(cfg);
  if (opt.report.empty()) throw ConfigError("convert-report needs --in <summary.json>");
  const fs::path summary_path = opt.report;
  std::string stem = summary_path.stem().string();
  if (stem.ends_with("_summary")) stem.resize(stem.size() - 8);
  const auto summary = read_json(summary_path);
  const auto lines = read_json_lines(summary_path.parent_path() / (stem + "_outcomes.jsonl"));
  const auto mismatches = verify_report(summary, lines);
  for (const auto& m : mismatches) std::cerr << "mismatch: " << m << "\n";
  if (!mismatches.empty()) return kRuntimeError;

  fs::create_directories(paths.out);
  if (opt.format == "csv") {
    std::ofstream(paths.out / (stem + "_aggregates.csv")) << aggregates_csv(summary["aggregates"]);
  } else {
    std::ofstream(paths.out / (stem + "_aggregates.json")) << summary["aggregates"].dump(2) << "\n";
  }
  std::cout << "verified " << lines.size() << " outcome lines against "
            << summary["aggregates"].size() << " aggregates\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Isometry attacks on point-cloud classifiers"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config_path, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", opt.seed, "Run seed (overrides run.seed)");
  app.add_option("--out", opt.out, "Output directory (overrides run.out)");
  app.add_option("--format", opt.format, "Report format")
      ->check(CLI::IsMember({"json", "csv"}));

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic shape dataset");
  auto* trn = app.add_subcommand("train", "Train the toy classifier");
  auto* tsi_cmd = app.add_subcommand("attack-tsi", "Black-box TSI evaluation");
  auto* ctri_cmd = app.add_subcommand("attack-ctri", "White-box CTRI evaluation");
  auto* xfer = app.add_subcommand("transfer", "Transfer matrix between checkpoints");
  auto* trade = app.add_subcommand("tradeoff", "Rotation augmentation tradeoff");
  auto* heat = app.add_subcommand("heatmap", "Heat maps from a TSI report's bandit state");
  auto* conv = app.add_subcommand("convert-report", "Verify a report and export its aggregates");

  for (auto* sub : {trn, tsi_cmd, ctri_cmd, xfer, trade})
    sub->add_option("--manifest", opt.manifest, "Dataset manifest");
  for (auto* sub : {trn, tsi_cmd, ctri_cmd})
    sub->add_option("--checkpoint", opt.checkpoint, "Model checkpoint");
  for (auto* sub : {tsi_cmd, ctri_cmd})
    sub->add_flag("--save-adversarial", opt.save_adversarial, "Write successful adversarial clouds");
  xfer->add_option("--checkpoints", opt.checkpoints, "Two or more checkpoints")->delimiter(',');
  heat->add_option("--in", opt.report, "TSI summary JSON");
  conv->add_option("--in", opt.report, "Summary JSON to verify")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kConfigError;
  }

  const std::map<CLI::App*, std::function<int(const Config&)>> commands{
      {gen, [&](const Config& c) { return gen_data(c); }},
      {trn, [&](const Config& c) { return train_cmd(c); }},
      {tsi_cmd, [&](const Config& c) { return attack_tsi(c, opt); }},
      {ctri_cmd, [&](const Config& c) { return attack_ctri(c, opt); }},
      {xfer, [&](const Config& c) { return transfer_cmd(c, opt); }},
      {trade, [&](const Config& c) { return tradeoff_cmd(c, opt); }},
      {heat, [&](const Config& c) { return heatmap_cmd(c, opt); }},
      {conv, [&](const Config& c) { return convert_report(c, opt); }},
  };
  try {
    const Config cfg = load(opt);
    return commands.at(app.get_subcommands().front())(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
