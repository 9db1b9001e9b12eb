#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pt/pointcloud.hpp"

namespace pt {

enum class CorruptionKind {
  Noise,
  Translation,
  MissingPart,
  Sparse,
  Rotation,
  Occlusion,
  NoiseFraction,
  RegionMissing,
  UniformRemoval,
  PartialQuery,
};

std::string to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(const std::string& name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::Noise;
  /// Gaussian standard deviation (noise kinds).
  double sigma = 0.02;
  /// Removed fraction (region / uniform removal), noised fraction
  /// (noise_fraction) or kept fraction (occlusion).
  double fraction = 1.0;
  /// Points kept by `sparse`.
  std::size_t target_count = 128;
  /// Translation components are uniform in (-range, range).
  double translation_range = 0.2;
  std::uint64_t seed = 0;

  /// Default magnitudes for `kind`.
  static CorruptionSpec defaults(CorruptionKind kind, std::uint64_t seed = 0);
  void validate() const;
};

/// Applies one seeded corruption. Removal kinds keep the surviving points in
/// their original order. Output is never re-normalized.
PointCloud apply(const CorruptionSpec& spec, const PointCloud& pc);

/// Number of points `apply` returns for an N-point input.
std::size_t corrupted_size(const CorruptionSpec& spec, std::size_t n);

struct SuiteEntry {
  std::string name;
  CorruptionSpec spec;  // kind ignored for "original"
  LabeledDataset data;
};

/// Names of the suite entries, in order. "original" is untouched.
std::vector<std::string> robustness_suite_names();

/// One transformed copy of the dataset per corruption protocol. Each sample's
/// seed is derived from (suite seed, sample id, entry name), so entries are
/// reproducible and sample-aligned.
std::vector<SuiteEntry> build_robustness_suite(const LabeledDataset& dataset, std::uint64_t seed);

/// Applies `spec` to every sample with per-sample derived seeds.
LabeledDataset corrupt_dataset(const LabeledDataset& dataset, const CorruptionSpec& spec,
                               const std::string& tag);

/// Writes each entry as a binary-cloud directory and an index `suite.txt`
/// with lines `<name>\t<directory>`. Returns the index path.
std::filesystem::path write_suite(const std::filesystem::path& dir,
                                  const std::vector<SuiteEntry>& suite);

}  // namespace pt
