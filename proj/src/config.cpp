#include "isorobust/config.hpp"

#include "isorobust/random.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace isorobust {

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"seed", "out", "format"}},
      {"data", {"classes", "points", "train_count", "test_count", "noise", "dir", "manifest"}},
      {"train",
       {"epochs", "batch_size", "learning_rate", "augment", "p_rotation", "point_widths",
        "head_widths", "rotate_y_lo", "rotate_y_hi", "scale_lo", "scale_hi", "translate",
        "jitter_sigma", "jitter_clip", "checkpoint"}},
      {"tsi", {"lo", "hi", "divisions", "max_samples", "family", "budgets", "max_clouds"}},
      {"ctri",
       {"warm_samples", "max_iters", "iterations", "half_ranges", "eta", "lambda", "kappa",
        "target", "degeneracy_tol", "max_clouds"}},
      {"transfer", {"checkpoints", "max_clouds"}},
      {"tradeoff", {"probabilities", "repeats", "max_clouds", "max_iters"}},
  };
  return keys;
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

double parse_angle(const std::string& text) {
  std::string s = boost::algorithm::erase_all_copy(text, " ");
  boost::algorithm::to_lower(s);
  const auto bad = [&] { return ConfigError("cannot parse angle '" + text + "'"); };
  if (s.empty()) throw bad();
  double sign = 1.0;
  if (s.front() == '-' || s.front() == '+') {
    sign = s.front() == '-' ? -1.0 : 1.0;
    s.erase(0, 1);
  }
  std::string num = s;
  double denom = 1.0;
  if (const auto slash = s.find('/'); slash != std::string::npos) {
    num = s.substr(0, slash);
    const auto d = parse_number(s.substr(slash + 1));
    if (!d || *d == 0.0) throw bad();
    denom = *d;
  }
  double value = 0.0;
  if (const auto pos = num.find("pi"); pos != std::string::npos) {
    if (pos + 2 != num.size()) throw bad();
    std::string coef = num.substr(0, pos);
    if (!coef.empty() && coef.back() == '*') coef.pop_back();
    double c = 1.0;
    if (!coef.empty()) {
      const auto parsed = parse_number(coef);
      if (!parsed) throw bad();
      c = *parsed;
    }
    value = c * std::numbers::pi;
  } else {
    const auto parsed = parse_number(num);
    if (!parsed) throw bad();
    value = *parsed;
  }
  value = sign * value / denom;
  if (!std::isfinite(value)) throw bad();
  return value;
}

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return from_string(text.str(), path.string());
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  // The INI reader only knows ';' comments.
  std::istringstream lines(text);
  std::ostringstream cleaned;
  for (std::string line; std::getline(lines, line);) {
    const std::string trimmed = boost::algorithm::trim_copy(line);
    cleaned << (trimmed.starts_with("#") ? ";" + trimmed : line) << '\n';
  }
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(cleaned.str());
  try {
    boost::property_tree::ini_parser::read_ini(in, cfg.tree_);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  cfg.check_known_keys();
  return cfg;
}

void Config::check_known_keys() const {
  for (const auto& [section, body] : tree_) {
    if (body.empty())
      throw ConfigError(origin_ + ": key '" + section + "' must live inside a [section]");
    const auto it = known_keys().find(section);
    if (it == known_keys().end())
      throw ConfigError(origin_ + ": unknown section [" + section + "]");
    for (const auto& [key, value] : body)
      if (!it->second.contains(key))
        throw ConfigError(origin_ + ": unknown key '" + key + "' in [" + section + "]");
  }
}

bool Config::has(const std::string& key) const { return raw(key).has_value(); }

void Config::set(const std::string& key, const std::string& value) {
  tree_.put(key, value);
  check_known_keys();
}

std::optional<std::string> Config::raw(const std::string& key) const {
  const auto v = tree_.get_optional<std::string>(key);
  if (!v) return std::nullopt;
  return boost::algorithm::trim_copy(*v);
}

void Config::fail(const std::string& key, const std::string& expected,
                  const std::string& got) const {
  throw ConfigError(origin_ + ": " + key + ": expected " + expected + ", got '" + got + "'");
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  const auto parsed = parse_number(*v);
  if (!parsed) fail(key, "a number", *v);
  return *parsed;
}

double Config::get_angle(const std::string& key, double fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  try {
    return parse_angle(*v);
  } catch (const ConfigError&) {
    fail(key, "an angle such as 'pi/8' or '0.39'", *v);
  }
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  int out = 0;
  const auto [end, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (v->empty() || ec != std::errc{} || end != v->data() + v->size()) fail(key, "an integer", *v);
  return out;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (v->empty() || ec != std::errc{} || end != v->data() + v->size())
    fail(key, "an unsigned 64-bit integer", *v);
  return out;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  const std::string s = boost::algorithm::to_lower_copy(*v);
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  fail(key, "true or false", *v);
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::vector<std::string> parts;
  boost::algorithm::split(parts, *v, boost::algorithm::is_any_of(","));
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (p.empty()) fail(key, "a comma-separated list", *v);
  }
  return parts;
}

std::vector<int> Config::get_int_list(const std::string& key,
                                      const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (const auto& item : get_list(key, {})) {
    int x = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
    if (ec != std::errc{} || end != item.data() + item.size()) fail(key, "integers", item);
    out.push_back(x);
  }
  return out;
}

std::vector<double> Config::get_angle_list(const std::string& key,
                                           const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& item : get_list(key, {})) {
    try {
      out.push_back(parse_angle(item));
    } catch (const ConfigError&) {
      fail(key, "angles", item);
    }
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& item : get_list(key, {})) {
    const auto x = parse_number(item);
    if (!x) fail(key, "numbers", item);
    out.push_back(*x);
  }
  return out;
}

std::uint64_t run_seed(const Config& cfg) { return cfg.get_u64("run.seed", 0); }

namespace {

template <class Fn>
auto validated(Fn&& build) {
  try {
    return build();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::size_t clouds(const Config& cfg, const std::string& key) {
  const int n = cfg.get_int(key, 200);
  if (n < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<std::size_t>(n);
}

}  // namespace

ShapeDatasetSpec dataset_spec(const Config& cfg) {
  return validated([&] {
    ShapeDatasetSpec spec;
    spec.classes = cfg.get_list("data.classes", spec.classes);
    spec.points_per_cloud = cfg.get_int("data.points", spec.points_per_cloud);
    spec.train_count = cfg.get_int("data.train_count", spec.train_count);
    spec.test_count = cfg.get_int("data.test_count", spec.test_count);
    spec.noise_sigma = cfg.get_double("data.noise", spec.noise_sigma);
    spec.seed = derive_seed(run_seed(cfg), "data");
    spec.validate();
    return spec;
  });
}

TrainConfig train_config(const Config& cfg) {
  return validated([&] {
    TrainConfig t;
    t.epochs = cfg.get_int("train.epochs", t.epochs);
    t.batch_size = cfg.get_int("train.batch_size", t.batch_size);
    t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
    t.augment = cfg.get_bool("train.augment", t.augment);
    t.p_rotation = cfg.get_double("train.p_rotation", t.p_rotation);
    t.point_widths = cfg.get_int_list("train.point_widths", t.point_widths);
    t.head_widths = cfg.get_int_list("train.head_widths", t.head_widths);
    auto& a = t.augmentation;
    a.rotate_y_lo = cfg.get_angle("train.rotate_y_lo", a.rotate_y_lo);
    a.rotate_y_hi = cfg.get_angle("train.rotate_y_hi", a.rotate_y_hi);
    a.scale_lo = cfg.get_double("train.scale_lo", a.scale_lo);
    a.scale_hi = cfg.get_double("train.scale_hi", a.scale_hi);
    a.translate = cfg.get_double("train.translate", a.translate);
    a.jitter_sigma = cfg.get_double("train.jitter_sigma", a.jitter_sigma);
    a.jitter_clip = cfg.get_double("train.jitter_clip", a.jitter_clip);
    t.seed = derive_seed(run_seed(cfg), "model");
    t.validate();
    return t;
  });
}

TsiConfig tsi_config(const Config& cfg) {
  return validated([&] {
    TsiConfig t;
    t.lo = cfg.get_angle("tsi.lo", t.lo);
    t.hi = cfg.get_angle("tsi.hi", t.hi);
    t.divisions = cfg.get_int("tsi.divisions", t.divisions);
    t.max_samples = cfg.get_int("tsi.max_samples", t.max_samples);
    t.family = family_from_name(cfg.get_string("tsi.family", family_name(t.family)));
    t.seed = run_seed(cfg);
    t.validate();
    return t;
  });
}

CtriConfig ctri_config(const Config& cfg) {
  return validated([&] {
    CtriConfig c;
    const int warm = c.tsi.max_samples;
    c.tsi = tsi_config(cfg);
    c.tsi.max_samples = cfg.get_int("ctri.warm_samples", warm);
    c.max_iters = cfg.get_int("ctri.max_iters", c.max_iters);
    c.eta = cfg.get_double("ctri.eta", c.eta);
    c.lambda = cfg.get_double("ctri.lambda", c.lambda);
    c.kappa = cfg.get_double("ctri.kappa", c.kappa);
    c.degeneracy_tol = cfg.get_double("ctri.degeneracy_tol", c.degeneracy_tol);
    const std::string target = cfg.get_string("ctri.target", "second-logit");
    if (target == "second-logit") {
      c.target_rule = TargetRule::SecondLogit;
    } else {
      c.target_rule = TargetRule::Fixed;
      Config one;
      one.set("ctri.target", target);
      c.fixed_target = one.get_int("ctri.target", 0);
    }
    c.validate();
    return c;
  });
}

TsiEvalConfig tsi_eval_config(const Config& cfg) {
  TsiEvalConfig e;
  e.tsi = tsi_config(cfg);
  e.budgets = cfg.get_int_list("tsi.budgets", e.budgets);
  if (e.budgets.empty()) throw ConfigError("tsi.budgets must not be empty");
  for (int b : e.budgets)
    if (b < 1) throw ConfigError("tsi.budgets entries must be at least 1");
  e.max_clouds = clouds(cfg, "tsi.max_clouds");
  return e;
}

CtriEvalConfig ctri_eval_config(const Config& cfg) {
  CtriEvalConfig e;
  e.ctri = ctri_config(cfg);
  e.iterations = cfg.get_int_list("ctri.iterations", e.iterations);
  e.half_ranges = cfg.get_angle_list("ctri.half_ranges", e.half_ranges);
  if (e.iterations.empty() || e.half_ranges.empty())
    throw ConfigError("ctri.iterations and ctri.half_ranges must not be empty");
  for (int k : e.iterations)
    if (k < 0) throw ConfigError("ctri.iterations entries must be non-negative");
  for (double r : e.half_ranges)
    if (!(r > 0.0)) throw ConfigError("ctri.half_ranges entries must be positive");
  e.max_clouds = clouds(cfg, "ctri.max_clouds");
  return e;
}

TransferConfig transfer_config(const Config& cfg) {
  TransferConfig t;
  t.ctri = ctri_config(cfg);
  t.max_clouds = clouds(cfg, "transfer.max_clouds");
  return t;
}

TradeoffConfig tradeoff_config(const Config& cfg) {
  TradeoffConfig t;
  t.probabilities = cfg.get_double_list("tradeoff.probabilities", t.probabilities);
  for (double p : t.probabilities)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("tradeoff.probabilities must lie in [0, 1]");
  t.repeats = cfg.get_int("tradeoff.repeats", t.repeats);
  if (t.repeats < 1) throw ConfigError("tradeoff.repeats must be at least 1");
  t.tsi = tsi_config(cfg);
  t.ctri = ctri_config(cfg);
  t.ctri.max_iters = cfg.get_int("tradeoff.max_iters", t.ctri.max_iters);
  if (t.ctri.max_iters < 0) throw ConfigError("tradeoff.max_iters must be non-negative");
  t.max_clouds = clouds(cfg, "tradeoff.max_clouds");
  return t;
}

RunPaths run_paths(const Config& cfg) {
  RunPaths p;
  p.out = cfg.get_string("run.out", "out");
  p.data_dir = cfg.get_string("data.dir", (p.out / "data").string());
  p.manifest = cfg.get_string("data.manifest", (p.data_dir / "manifest.json").string());
  p.checkpoint = cfg.get_string("train.checkpoint", (p.out / "model.irmn").string());
  for (const auto& c : cfg.get_list("transfer.checkpoints", {})) p.transfer_checkpoints.push_back(c);
  return p;
}

}  // namespace isorobust
