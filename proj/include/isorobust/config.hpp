#ifndef ISOROBUST_CONFIG_HPP
#define ISOROBUST_CONFIG_HPP

#include "isorobust/attack.hpp"
#include "isorobust/experiments.hpp"
#include "isorobust/model.hpp"
#include "isorobust/pointcloud.hpp"

#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace isorobust {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "pi", "-pi/8", "0.25*pi", "2pi/3" or a plain number (radians).
double parse_angle(const std::string& text);

/// INI-style run configuration: `[section]` headers, `key = value` lines,
/// `;` or `#` comments. Keys are addressed as "section.key". Unknown sections
/// or keys are rejected so typos do not silently fall back to defaults.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::filesystem::path& path);
  static Config from_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  double get_angle(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_angle_list(const std::string& key,
                                     const std::vector<double>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  const std::string& origin() const { return origin_; }

 private:
  std::optional<std::string> raw(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& expected,
                         const std::string& got) const;
  void check_known_keys() const;

  boost::property_tree::ptree tree_;
  std::string origin_ = "<defaults>";
};

/// run.seed, 0 when absent.
std::uint64_t run_seed(const Config& cfg);

/// Each artifact gets its own named sub-seed of the run seed.
ShapeDatasetSpec dataset_spec(const Config& cfg);
TrainConfig train_config(const Config& cfg);
TsiConfig tsi_config(const Config& cfg);
CtriConfig ctri_config(const Config& cfg);
TsiEvalConfig tsi_eval_config(const Config& cfg);
CtriEvalConfig ctri_eval_config(const Config& cfg);
TransferConfig transfer_config(const Config& cfg);
TradeoffConfig tradeoff_config(const Config& cfg);

struct RunPaths {
  std::filesystem::path out;
  std::filesystem::path data_dir;
  std::filesystem::path manifest;
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> transfer_checkpoints;
};

/// Defaults: data under <out>/data, checkpoint <out>/model.irmn.
RunPaths run_paths(const Config& cfg);

}  // namespace isorobust

#endif  // ISOROBUST_CONFIG_HPP
