#include "isorobust/pointcloud.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace isorobust {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::array<char, 4> kCloudMagic{'I', 'R', 'P', 'C'};
constexpr std::uint32_t kCloudVersion = 1;

Eigen::RowVector3d sample_sphere(Rng& rng) {
  Eigen::RowVector3d v;
  do {
    v << standard_normal(rng), standard_normal(rng), standard_normal(rng);
  } while (v.norm() < 1e-12);
  return v.normalized();
}

// Picks an index with probability proportional to weights[i].
std::size_t pick_weighted(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform(rng, 0.0, total);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

Eigen::RowVector3d sample_box(Rng& rng, const Eigen::Vector3d& half) {
  // Six faces, two per axis, weighted by area.
  const std::vector<double> areas{half(1) * half(2), half(1) * half(2), half(0) * half(2),
                                  half(0) * half(2), half(0) * half(1), half(0) * half(1)};
  const std::size_t face = pick_weighted(areas, rng);
  const int axis = static_cast<int>(face / 2);
  const double side = face % 2 == 0 ? 1.0 : -1.0;
  Eigen::RowVector3d p;
  for (int k = 0; k < 3; ++k) p(k) = uniform(rng, -half(k), half(k));
  p(axis) = side * half(axis);
  return p;
}

Eigen::RowVector3d sample_cone(Rng& rng, double radius, double height) {
  const double slant = std::hypot(radius, height);
  const double lateral = kPi * radius * slant;
  const double base = kPi * radius * radius;
  const double phi = uniform(rng, 0.0, 2.0 * kPi);
  if (pick_weighted({lateral, base}, rng) == 0) {
    // Distance from the apex grows with sqrt(u) for uniform area density.
    const double t = std::sqrt(uniform(rng, 0.0, 1.0));
    return {t * radius * std::cos(phi), height / 2.0 - t * height, t * radius * std::sin(phi)};
  }
  const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));
  return {r * std::cos(phi), -height / 2.0, r * std::sin(phi)};
}

Eigen::RowVector3d sample_stairs(Rng& rng, int steps, double rise, double run, double width) {
  // Treads and risers of a staircase climbing along +z, extruded along x.
  std::vector<double> areas;
  for (int k = 0; k < steps; ++k) {
    areas.push_back(run * width);
    areas.push_back(rise * width);
  }
  const std::size_t part = pick_weighted(areas, rng);
  const int k = static_cast<int>(part / 2);
  const double x = uniform(rng, -width / 2.0, width / 2.0);
  if (part % 2 == 0) return {x, (k + 1) * rise, uniform(rng, k * run, (k + 1) * run)};
  return {x, uniform(rng, k * rise, (k + 1) * rise), k * run};
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename Scalar>
PointCloud<Scalar> parse_text(const std::vector<unsigned char>& bytes,
                              const std::filesystem::path& path) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  const std::string where = path.string() + ":";
  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError(where + " empty file", 1);
  std::istringstream header(line);
  std::string tag;
  long long m = 0;
  int label = -1;
  if (!(header >> tag >> m >> label) || tag != "pc")
    throw ParseError(where + std::to_string(line_no) + ": expected header 'pc <m> <label>'",
                     line_no);
  if (m < 1)
    throw ParseError(where + std::to_string(line_no) + ": cloud must hold at least one point",
                     line_no);

  PointCloud<Scalar> cloud;
  cloud.points.resize(m, 3);
  if (label >= 0) cloud.label = label;
  for (long long i = 0; i < m; ++i) {
    if (!next_line())
      throw ParseError(where + std::to_string(line_no + 1) + ": expected " + std::to_string(m) +
                           " points, found " + std::to_string(i),
                       line_no + 1);
    std::istringstream fields(line);
    std::vector<double> values;
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw ParseError(where + std::to_string(line_no) + ": not a number: '" + token + "'",
                         line_no);
      }
    }
    if (values.size() != 3)
      throw ParseError(where + std::to_string(line_no) + ": expected 3 fields, found " +
                           std::to_string(values.size()),
                       line_no);
    for (int k = 0; k < 3; ++k) {
      if (!std::isfinite(values[k]))
        throw ParseError(where + std::to_string(line_no) + ": non-finite coordinate", line_no);
      cloud.points(i, k) = static_cast<Scalar>(values[k]);
    }
  }
  if (next_line())
    throw ParseError(where + std::to_string(line_no) + ": trailing data after " +
                         std::to_string(m) + " points",
                     line_no);
  return cloud;
}

template <typename Scalar>
PointCloud<Scalar> parse_binary(const std::vector<unsigned char>& bytes,
                                const std::filesystem::path& path) {
  constexpr std::size_t header_size = 16;
  if (bytes.size() < header_size)
    throw ParseError(path.string() + ": truncated header", bytes.size());
  if (get_u32(bytes.data() + 4) != kCloudVersion)
    throw ParseError(path.string() + ": unsupported version", 4);
  const std::uint32_t m = get_u32(bytes.data() + 8);
  const auto label = static_cast<std::int32_t>(get_u32(bytes.data() + 12));
  if (m < 1) throw ParseError(path.string() + ": cloud must hold at least one point", 8);
  const std::size_t expected = header_size + std::size_t{m} * 12;
  if (bytes.size() != expected)
    throw ParseError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                         std::to_string(bytes.size()),
                     std::min(bytes.size(), expected));

  PointCloud<Scalar> cloud;
  cloud.points.resize(m, 3);
  if (label >= 0) cloud.label = label;
  const unsigned char* data = bytes.data() + header_size;
  for (std::uint32_t i = 0; i < m; ++i) {
    for (int k = 0; k < 3; ++k) {
      const std::size_t offset = (std::size_t{i} * 3 + k) * 4;
      const float v = std::bit_cast<float>(get_u32(data + offset));
      if (!std::isfinite(v))
        throw ParseError(path.string() + ": non-finite coordinate", header_size + offset);
      cloud.points(i, k) = static_cast<Scalar>(v);
    }
  }
  return cloud;
}

}  // namespace

Cloud augment(const Cloud& p, const AugmentConfig& cfg, Rng& rng) {
  const double theta = uniform(rng, cfg.rotate_y_lo, cfg.rotate_y_hi);
  const double scale = uniform(rng, cfg.scale_lo, cfg.scale_hi);
  Eigen::RowVector3d shift;
  for (int k = 0; k < 3; ++k) shift(k) = uniform(rng, -cfg.translate, cfg.translate);

  Cloud out = apply_transform(p, euler_to_rotation<double>({0.0, theta, 0.0}));
  out.points *= scale;
  out.points.rowwise() += shift;
  if (cfg.jitter_sigma > 0.0) {
    for (Eigen::Index i = 0; i < out.points.rows(); ++i)
      for (int k = 0; k < 3; ++k)
        out.points(i, k) += std::clamp(cfg.jitter_sigma * standard_normal(rng), -cfg.jitter_clip,
                                       cfg.jitter_clip);
  }
  return out;
}

Cloud augment_p_rotation(const Cloud& p, double prob, Rng& rng) {
  if (!(prob >= 0.0 && prob <= 1.0))
    throw std::invalid_argument("p-rotation probability must lie in [0, 1]");
  if (!(uniform(rng, 0.0, 1.0) < prob)) return p;
  const EulerAngles<double> angles{uniform(rng, -kPi, kPi), uniform(rng, -kPi, kPi),
                                   uniform(rng, -kPi, kPi)};
  return apply_transform(p, euler_to_rotation(angles));
}

ShapeClass shape_class_from_name(const std::string& name) {
  if (name == "sphere") return ShapeClass::Sphere;
  if (name == "box") return ShapeClass::Box;
  if (name == "cone") return ShapeClass::Cone;
  if (name == "stairs") return ShapeClass::Stairs;
  throw std::invalid_argument("unknown shape class '" + name + "'");
}

std::string shape_class_name(ShapeClass c) {
  switch (c) {
    case ShapeClass::Sphere: return "sphere";
    case ShapeClass::Box: return "box";
    case ShapeClass::Cone: return "cone";
    case ShapeClass::Stairs: return "stairs";
  }
  return "unknown";
}

void ShapeDatasetSpec::validate() const {
  if (classes.size() < 2) throw std::invalid_argument("dataset needs at least two classes");
  for (const auto& name : classes) shape_class_from_name(name);
  if (points_per_cloud < 1) throw std::invalid_argument("points_per_cloud must be positive");
  if (train_count < 0 || test_count < 0)
    throw std::invalid_argument("train/test counts must be non-negative");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be non-negative");
}

Cloud sample_shape(ShapeClass shape, int points, double noise_sigma, Rng& rng) {
  // Per-instance proportions vary by +-15% so classes are not single templates.
  auto jitter = [&rng](double v) { return v * uniform(rng, 0.85, 1.15); };
  const Eigen::Vector3d half{jitter(1.0), jitter(0.55), jitter(0.35)};
  const double cone_r = jitter(0.8);
  const double cone_h = jitter(1.6);
  const double rise = jitter(0.3);
  const double run = jitter(0.35);
  const double width = jitter(1.2);

  Cloud cloud;
  cloud.points.resize(points, 3);
  for (int i = 0; i < points; ++i) {
    Eigen::RowVector3d p;
    switch (shape) {
      case ShapeClass::Sphere: p = sample_sphere(rng); break;
      case ShapeClass::Box: p = sample_box(rng, half); break;
      case ShapeClass::Cone: p = sample_cone(rng, cone_r, cone_h); break;
      case ShapeClass::Stairs: p = sample_stairs(rng, 4, rise, run, width); break;
    }
    if (noise_sigma > 0.0)
      for (int k = 0; k < 3; ++k) p(k) += noise_sigma * standard_normal(rng);
    cloud.points.row(i) = p;
  }
  return normalize_to_unit_sphere(cloud);
}

ShapeDataset generate_shapes(const ShapeDatasetSpec& spec) {
  spec.validate();
  std::vector<ShapeClass> shapes;
  for (const auto& name : spec.classes) shapes.push_back(shape_class_from_name(name));
  const auto n_classes = static_cast<int>(shapes.size());

  auto make_split = [&](int per_class, std::string_view name) {
    const std::uint64_t split_seed = derive_seed(spec.seed, name);
    std::vector<Cloud> clouds;
    clouds.reserve(static_cast<std::size_t>(per_class * n_classes));
    for (int i = 0; i < per_class * n_classes; ++i) {
      Rng rng(split_seed ^ static_cast<std::uint64_t>(i));
      const int label = i % n_classes;
      Cloud c = sample_shape(shapes[label], spec.points_per_cloud, spec.noise_sigma, rng);
      c.label = label;
      clouds.push_back(std::move(c));
    }
    return clouds;
  };
  return {spec.classes, make_split(spec.train_count, "train"), make_split(spec.test_count, "test")};
}

template <typename Scalar>
void save_cloud(const PointCloud<Scalar>& p, const std::filesystem::path& path,
                CloudFormat format) {
  if (p.size() < 1) throw std::invalid_argument("cannot save an empty cloud");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const int label = p.label.value_or(-1);
  if (format == CloudFormat::Text) {
    out << "pc " << p.size() << ' ' << label << '\n';
    out << std::setprecision(9);
    for (Eigen::Index i = 0; i < p.size(); ++i)
      out << static_cast<double>(p.points(i, 0)) << ' ' << static_cast<double>(p.points(i, 1))
          << ' ' << static_cast<double>(p.points(i, 2)) << '\n';
  } else {
    out.write(kCloudMagic.data(), 4);
    put_u32(out, kCloudVersion);
    put_u32(out, static_cast<std::uint32_t>(p.size()));
    put_u32(out, static_cast<std::uint32_t>(static_cast<std::int32_t>(label)));
    for (Eigen::Index i = 0; i < p.size(); ++i)
      for (int k = 0; k < 3; ++k)
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p.points(i, k))));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename Scalar>
PointCloud<Scalar> load_cloud(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() >= 4 && std::equal(kCloudMagic.begin(), kCloudMagic.end(), bytes.begin()))
    return parse_binary<Scalar>(bytes, path);
  return parse_text<Scalar>(bytes, path);
}

template void save_cloud<float>(const PointCloud<float>&, const std::filesystem::path&,
                                CloudFormat);
template void save_cloud<double>(const PointCloud<double>&, const std::filesystem::path&,
                                 CloudFormat);
template PointCloud<float> load_cloud<float>(const std::filesystem::path&);
template PointCloud<double> load_cloud<double>(const std::filesystem::path&);

std::filesystem::path save_dataset(const ShapeDataset& data, const ShapeDatasetSpec& spec,
                                   const std::filesystem::path& dir, CloudFormat format) {
  namespace fs = std::filesystem;
  const char* ext = format == CloudFormat::Binary ? ".pcb" : ".pc";
  nlohmann::json manifest{{"schema_version", 1},
                          {"classes", data.classes},
                          {"points_per_cloud", spec.points_per_cloud},
                          {"train_count", spec.train_count},
                          {"test_count", spec.test_count},
                          {"noise_sigma", spec.noise_sigma},
                          {"seed", spec.seed}};
  for (const auto* split : {"train", "test"}) {
    const auto& clouds = std::string(split) == "train" ? data.train : data.test;
    fs::create_directories(dir / split);
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      std::ostringstream name;
      name << split << '/' << std::setw(5) << std::setfill('0') << i << '_'
           << data.classes.at(static_cast<std::size_t>(clouds[i].label.value_or(0))) << ext;
      save_cloud(clouds[i], dir / name.str(), format);
      entries.push_back({{"path", name.str()}, {"label", clouds[i].label.value_or(-1)}});
    }
    manifest[split] = std::move(entries);
  }
  const fs::path manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
    DatasetManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.points_per_cloud = j.value("points_per_cloud", 0);
    m.train_count = j.value("train_count", 0);
    m.test_count = j.value("test_count", 0);
    m.noise_sigma = j.value("noise_sigma", 0.0);
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto* split : {"train", "test"}) {
      auto& entries = std::string(split) == "train" ? m.train : m.test;
      for (const auto& e : j.at(split))
        entries.push_back({e.at("path").get<std::string>(), e.at("label").get<int>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what(), 0);
  }
}

ShapeDataset load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  ShapeDataset data;
  data.classes = m.classes;
  auto load_split = [&](const std::vector<ManifestEntry>& entries, std::vector<Cloud>& out) {
    for (const auto& e : entries) {
      Cloud c = load_cloud<double>(base / e.path);
      c.label = e.label;
      out.push_back(std::move(c));
    }
  };
  load_split(m.train, data.train);
  load_split(m.test, data.test);
  return data;
}

}  // namespace isorobust
