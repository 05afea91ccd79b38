#ifndef ISOROBUST_TEST_SUPPORT_HPP
#define ISOROBUST_TEST_SUPPORT_HPP

#include "isorobust/model.hpp"
#include "isorobust/pointcloud.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace isorobust::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("isorobust-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

/// Small dataset and a model trained on it, built once per test binary.
struct SmallStack {
  ShapeDatasetSpec spec;
  ShapeDataset data;
  TrainResult trained;
};

inline const SmallStack& small_stack() {
  static const SmallStack stack = [] {
    SmallStack s;
    s.spec.points_per_cloud = 256;
    s.spec.train_count = 30;
    s.spec.test_count = 15;
    s.spec.seed = 5;
    s.data = generate_shapes(s.spec);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.seed = 6;
    s.trained = train(s.data, cfg);
    return s;
  }();
  return stack;
}

}  // namespace isorobust::testing

#endif  // ISOROBUST_TEST_SUPPORT_HPP
