#ifndef ISOROBUST_POINTCLOUD_HPP
#define ISOROBUST_POINTCLOUD_HPP

#include "isorobust/geometry.hpp"
#include "isorobust/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace isorobust {

/// m x 3 coordinates, one point per row.
template <typename Scalar>
using PointMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;

template <typename Scalar>
struct PointCloud {
  PointMatrix<Scalar> points;
  std::optional<int> label;

  Eigen::Index size() const { return points.rows(); }
};

using Cloud = PointCloud<double>;

class DegenerateCloud : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  /// 1-based line for text input, byte offset for binary input.
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row i of the result is A p_i.
template <typename Scalar>
PointCloud<Scalar> apply_transform(const PointCloud<Scalar>& p, const Transform3<Scalar>& a) {
  return {p.points * a.transpose(), p.label};
}

/// Centre on the centroid, then scale so the farthest point has norm 1.
template <typename Scalar>
PointCloud<Scalar> normalize_to_unit_sphere(const PointCloud<Scalar>& p) {
  if (p.size() == 0) throw DegenerateCloud("cannot normalize an empty cloud");
  const Eigen::Matrix<Scalar, 1, 3> centroid = p.points.colwise().mean();
  PointMatrix<Scalar> centred = p.points.rowwise() - centroid;
  const Scalar radius = centred.rowwise().norm().maxCoeff();
  if (!(radius > Scalar(0))) throw DegenerateCloud("all points coincide");
  return {centred / radius, p.label};
}

struct AugmentConfig {
  double rotate_y_lo = 0.0;
  double rotate_y_hi = 2.0 * std::numbers::pi;
  double scale_lo = 0.8;
  double scale_hi = 1.25;
  double translate = 0.1;
  double jitter_sigma = 0.01;
  double jitter_clip = 0.05;

  static AugmentConfig identity() { return {0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0}; }
};

/// Rotate about y, scale, translate, jitter; in that order.
Cloud augment(const Cloud& p, const AugmentConfig& cfg, Rng& rng);

/// With probability `prob`, a full rotation with angles uniform in [-pi, pi]^3.
Cloud augment_p_rotation(const Cloud& p, double prob, Rng& rng);

enum class ShapeClass { Sphere, Box, Cone, Stairs };

ShapeClass shape_class_from_name(const std::string& name);
std::string shape_class_name(ShapeClass c);

struct ShapeDatasetSpec {
  std::vector<std::string> classes{"sphere", "box", "cone", "stairs"};
  int points_per_cloud = 512;
  int train_count = 100;
  int test_count = 50;
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ShapeDataset {
  std::vector<std::string> classes;
  std::vector<Cloud> train;
  std::vector<Cloud> test;
};

/// One normalized sample of a procedural shape in canonical (y-up) pose.
Cloud sample_shape(ShapeClass shape, int points, double noise_sigma, Rng& rng);

/// Deterministic in `spec`. Cloud i of a split is drawn from Rng(split_seed ^ i)
/// and has class i % classes.size().
ShapeDataset generate_shapes(const ShapeDatasetSpec& spec);

enum class CloudFormat { Text, Binary };

/// Text: header "pc <m> <label>" then m lines "x y z" (label -1 when absent).
/// Binary: "IRPC", u32 version, u32 m, i32 label, then m*3 little-endian float32.
template <typename Scalar>
void save_cloud(const PointCloud<Scalar>& p, const std::filesystem::path& path,
                CloudFormat format = CloudFormat::Binary);

/// Detects the format from the leading bytes.
template <typename Scalar = double>
PointCloud<Scalar> load_cloud(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  int label = 0;
};

struct DatasetManifest {
  int schema_version = 1;
  std::vector<std::string> classes;
  int points_per_cloud = 0;
  int train_count = 0;
  int test_count = 0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
};

/// Writes every cloud plus manifest.json under `dir`; returns the manifest path.
std::filesystem::path save_dataset(const ShapeDataset& data, const ShapeDatasetSpec& spec,
                                   const std::filesystem::path& dir,
                                   CloudFormat format = CloudFormat::Binary);

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
ShapeDataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace isorobust

#endif  // ISOROBUST_POINTCLOUD_HPP
