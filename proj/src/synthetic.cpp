#include <algorithm>
#include <cmath>
#include <random>

#include "pt/errors.hpp"
#include "pt/pointcloud.hpp"

namespace pt {

namespace {

struct Footprint {
  double half_long;   // half extent along the ridge axis
  double half_short;  // half extent across it
  bool ridge_along_x;
};

// Height and facet id at footprint coordinates (u along the ridge axis,
// v across it).
struct RoofSurface {
  RoofKind kind;
  Footprint fp;
  double side_slope;
  double end_slope;  // hip ends / pyramid long-axis facets

  std::pair<double, int> eval(double u, double v) const {
    const double side = side_slope * (fp.half_short - std::abs(v));
    const int side_facet = v >= 0 ? 0 : 1;
    if (kind == RoofKind::Saddleback) return {side, side_facet};
    const double end = end_slope * (fp.half_long - std::abs(u));
    const int end_facet = u >= 0 ? 2 : 3;
    return side <= end ? std::pair{side, side_facet} : std::pair{end, end_facet};
  }
};

const char* kRoofNames[] = {"saddleback", "two_sided_hip", "pyramid"};

}  // namespace

RoofSample sample_roof(RoofKind kind, std::size_t points, float noise_sigma, std::uint64_t seed) {
  if (points < 1) fail(ErrorKind::Config, "roof sample needs at least one point");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double aspect = 0.5 + 1.5 * unit(rng);
  const double slope = 0.3 + 0.5 * unit(rng);
  Footprint fp{};
  fp.ridge_along_x = aspect >= 1.0;
  fp.half_long = 0.5 * std::max(aspect, 1.0);
  fp.half_short = 0.5 * std::min(aspect, 1.0);
  RoofSurface roof{kind, fp, slope, 0.0};
  const double ridge_height = slope * fp.half_short;
  if (kind == RoofKind::TwoSidedHip) {
    // Hip ends run 30-60% of the half length, leaving a ridge of positive length.
    const double run = (0.3 + 0.3 * unit(rng)) * fp.half_long;
    roof.end_slope = ridge_height / run;
  } else if (kind == RoofKind::Pyramid) {
    roof.end_slope = ridge_height / fp.half_long;  // all four facets meet at the apex
  }

  RoofSample out;
  out.cloud.points.reserve(points);
  out.facets.reserve(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double u = (2 * unit(rng) - 1) * fp.half_long;
    const double v = (2 * unit(rng) - 1) * fp.half_short;
    const auto [z, facet] = roof.eval(u, v);
    const double x = fp.ridge_along_x ? u : v;
    const double y = fp.ridge_along_x ? v : u;
    out.cloud.points.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(z)});
    out.facets.push_back(facet);
  }
  out.cloud = normalize_unit_sphere(out.cloud);
  if (noise_sigma > 0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& p : out.cloud.points)
      for (float& c : p) c = static_cast<float>(c + noise(rng));
    out.cloud = normalize_unit_sphere(out.cloud);
  }
  out.cloud.label = static_cast<int>(kind);
  return out;
}

LabeledDataset generate_synthetic_roofs(std::size_t per_class, float noise_sigma,
                                        std::uint64_t seed, std::size_t points_per_cloud,
                                        const std::string& id_prefix) {
  if (per_class < 1) fail(ErrorKind::Config, "per_class must be >= 1");
  LabeledDataset ds;
  ds.class_names = {kRoofNames[0], kRoofNames[1], kRoofNames[2]};
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int k = 0; k < 3; ++k) {
      const std::uint64_t s = mix_seed(seed, i * 3 + static_cast<std::uint64_t>(k));
      RoofSample r = sample_roof(static_cast<RoofKind>(k), points_per_cloud, noise_sigma, s);
      r.cloud.id = id_prefix + kRoofNames[k] + "_" + std::to_string(i);
      ds.samples.push_back(std::move(r.cloud));
    }
  }
  return ds;
}

SyntheticSplits generate_synthetic_splits(std::size_t train_per_class, std::size_t val_per_class,
                                          std::size_t test_per_class, float noise_sigma,
                                          std::uint64_t seed, std::size_t points_per_cloud) {
  SyntheticSplits out;
  out.train = generate_synthetic_roofs(train_per_class, noise_sigma, mix_seed(seed, 1),
                                       points_per_cloud, "train_");
  out.train.split = Split::Train;
  out.val = generate_synthetic_roofs(val_per_class, noise_sigma, mix_seed(seed, 2),
                                     points_per_cloud, "val_");
  out.val.split = Split::Val;
  out.test = generate_synthetic_roofs(test_per_class, noise_sigma, mix_seed(seed, 3),
                                      points_per_cloud, "test_");
  out.test.split = Split::Test;
  return out;
}

}  // namespace pt
