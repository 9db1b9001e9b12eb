#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pt {

using Point3 = std::array<float, 3>;

struct PointCloud {
  std::vector<Point3> points;
  std::optional<int> label;
  std::string id;
  /// False when the coordinates are raw (not unit-sphere normalized).
  bool normalized = false;

  std::size_t size() const { return points.size(); }
  /// Row-major N x 3 copy of the coordinates.
  template <typename T>
  std::vector<T> flat() const {
    std::vector<T> out;
    out.reserve(points.size() * 3);
    for (const auto& p : points) out.insert(out.end(), {T(p[0]), T(p[1]), T(p[2])});
    return out;
  }
};

enum class Split { Train, Val, Test };

struct LabeledDataset {
  std::vector<PointCloud> samples;
  std::vector<std::string> class_names;
  Split split = Split::Test;

  std::size_t num_classes() const { return class_names.size(); }
  /// Throws Load errors for labels outside class_names or duplicate ids.
  void validate() const;
};

enum class SamplingMethod { FarthestPoint, UniformRandom };

struct SamplingSpec {
  SamplingMethod method = SamplingMethod::FarthestPoint;
  std::size_t target_count = 1024;
  std::uint64_t seed = 0;
};

/// Rejects empty clouds and non-finite coordinates.
void validate_points(const PointCloud& pc);

/// Centroid to the origin, farthest point to radius 1. A cloud whose points
/// all coincide maps to the origin.
PointCloud normalize_unit_sphere(const PointCloud& pc);

/// Greedy max-min selection starting from a seeded random point. The output
/// keeps selection order.
PointCloud farthest_point_sample(const PointCloud& pc, std::size_t count, std::uint64_t seed);
std::vector<std::size_t> farthest_point_indices(const PointCloud& pc, std::size_t count,
                                                std::uint64_t seed);

/// `count` distinct points chosen uniformly at random, kept in input order.
PointCloud uniform_sample(const PointCloud& pc, std::size_t count, std::uint64_t seed);

PointCloud apply_sampling(const PointCloud& pc, const SamplingSpec& spec);

/// Row-major N x k neighbor indices, self excluded, ascending distance with
/// exact ties broken toward the lower index. Brute force over all pairs.
std::vector<std::size_t> knn_indices(const PointCloud& pc, std::size_t k);

namespace serial {
std::vector<std::size_t> knn_indices(const PointCloud& pc, std::size_t k);
std::vector<std::size_t> farthest_point_indices(const PointCloud& pc, std::size_t count,
                                                std::uint64_t seed);
}  // namespace serial

struct AugmentParams {
  float scale = 1.0f;
  Point3 translation{0.0f, 0.0f, 0.0f};
};

/// Draws one scale in (0.8, 1.25) and one translation with each component in
/// (-0.1, 0.1).
AugmentParams draw_augmentation(std::uint64_t seed);

/// Scale, then translate. With `identity` set the input is returned as is.
PointCloud augment(const PointCloud& pc, std::uint64_t seed, bool identity = false);
PointCloud apply_augmentation(const PointCloud& pc, const AugmentParams& params);

/// Order-independent seed mixing (splitmix64).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t hash_string(const std::string& s);

// ---- files -----------------------------------------------------------------

/// Loads a cloud in either the text (`x y z` per line) or binary (`PCL1`)
/// encoding, detected from the leading magic.
PointCloud read_cloud(const std::filesystem::path& path);
void write_text_cloud(const std::filesystem::path& path, const PointCloud& pc);
void write_binary_cloud(const std::filesystem::path& path, const PointCloud& pc);
std::vector<std::uint8_t> encode_binary_cloud(const PointCloud& pc);

struct LoadOptions {
  std::optional<SamplingSpec> sampling;
  Split split = Split::Test;
};

/// Manifest format:
///   classes:<name;name;...>
///   [prenormalized:true]
///   <relative_path>,<label_int>,<id>
/// Blank lines and lines starting with '#' are ignored.
LabeledDataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& options = {});

enum class CloudEncoding { Text, Binary };

/// Writes every sample as `<id>.xyz` / `<id>.pcl` plus `manifest.txt` into
/// `dir`. Returns the manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir, const LabeledDataset& ds,
                                    CloudEncoding encoding = CloudEncoding::Binary);

// ---- synthetic roofs ---------------------------------------------------------

enum class RoofKind { Saddleback = 0, TwoSidedHip = 1, Pyramid = 2 };

struct RoofSample {
  PointCloud cloud;
  /// Facet index per point (0..1 for saddleback, 0..3 otherwise).
  std::vector<int> facets;
};

/// Points uniformly over the footprint of a randomized roof of `kind`, lifted
/// onto its facets, normalized, then jittered with N(0, noise_sigma) per
/// coordinate.
RoofSample sample_roof(RoofKind kind, std::size_t points, float noise_sigma, std::uint64_t seed);

/// `per_class` roofs of each kind, labels 0/1/2 in kind order, interleaved.
LabeledDataset generate_synthetic_roofs(std::size_t per_class, float noise_sigma,
                                        std::uint64_t seed, std::size_t points_per_cloud = 256,
                                        const std::string& id_prefix = "");

struct SyntheticSplits {
  LabeledDataset train, val, test;
};

/// Independent train / val / test roof sets with split-prefixed ids.
SyntheticSplits generate_synthetic_splits(std::size_t train_per_class, std::size_t val_per_class,
                                          std::size_t test_per_class, float noise_sigma,
                                          std::uint64_t seed, std::size_t points_per_cloud = 256);

}  // namespace pt
