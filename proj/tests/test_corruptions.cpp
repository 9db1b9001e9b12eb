#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "pt/corruptions.hpp"
#include "pt/errors.hpp"

using namespace pt;
namespace fs = std::filesystem;

namespace {

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  PointCloud pc;
  pc.id = "cloud" + std::to_string(seed);
  pc.label = 0;
  for (std::size_t i = 0; i < n; ++i) pc.points.push_back({g(rng), g(rng), g(rng)});
  return normalize_unit_sphere(pc);
}

double dist(const Point3& a, const Point3& b) {
  double s = 0;
  for (int d = 0; d < 3; ++d) s += (double(a[d]) - b[d]) * (double(a[d]) - b[d]);
  return std::sqrt(s);
}

// Positions in `pc` of each output point, in output order. Requires the
// output to be an order-preserving subset.
std::vector<std::size_t> subset_positions(const PointCloud& pc, const PointCloud& out) {
  std::vector<std::size_t> pos;
  std::size_t cursor = 0;
  for (const auto& p : out.points) {
    while (cursor < pc.size() && pc.points[cursor] != p) ++cursor;
    REQUIRE(cursor < pc.size());
    pos.push_back(cursor++);
  }
  return pos;
}

// True when some input point can serve as a ball center that contains every
// removed point and no kept point strictly inside the removal radius.
bool removed_set_is_a_ball(const PointCloud& pc, const std::vector<std::size_t>& kept) {
  std::vector<bool> is_kept(pc.size(), false);
  for (std::size_t i : kept) is_kept[i] = true;
  for (const auto& c : pc.points) {
    double far_removed = 0, near_kept = 1e300;
    for (std::size_t i = 0; i < pc.size(); ++i) {
      const double d = dist(pc.points[i], c);
      if (is_kept[i]) near_kept = std::min(near_kept, d);
      else far_removed = std::max(far_removed, d);
    }
    if (far_removed <= near_kept) return true;
  }
  return false;
}

LabeledDataset small_dataset() {
  LabeledDataset ds = generate_synthetic_roofs(4, 0.01f, 3, 256);
  return ds;
}

}  // namespace

TEST_CASE("names and validation") {
  for (auto k : {CorruptionKind::Noise, CorruptionKind::Translation, CorruptionKind::MissingPart,
                 CorruptionKind::Sparse, CorruptionKind::Rotation, CorruptionKind::Occlusion,
                 CorruptionKind::NoiseFraction, CorruptionKind::RegionMissing,
                 CorruptionKind::UniformRemoval, CorruptionKind::PartialQuery})
    CHECK(parse_corruption_kind(to_string(k)) == k);
  try {
    parse_corruption_kind("blur");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  CorruptionSpec bad;
  bad.fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = CorruptionSpec{};
  bad.target_count = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(CorruptionSpec::defaults(CorruptionKind::UniformRemoval).fraction == 0.875);
  CHECK(CorruptionSpec::defaults(CorruptionKind::RegionMissing).fraction == 0.5);
  CHECK(CorruptionSpec::defaults(CorruptionKind::NoiseFraction).fraction == 0.75);
  CHECK(CorruptionSpec::defaults(CorruptionKind::PartialQuery).fraction == 0.75);
  CHECK(CorruptionSpec::defaults(CorruptionKind::Sparse).target_count == 128);
}

TEST_CASE("value perturbing kinds") {
  const PointCloud pc = random_cloud(1024, 1);
  SUBCASE("zero sigma noise is the identity") {
    auto s = CorruptionSpec::defaults(CorruptionKind::Noise, 5);
    s.sigma = 0;
    CHECK(apply(s, pc).points == pc.points);
  }
  SUBCASE("noise standard deviation over 10^5 points") {
    const PointCloud big = random_cloud(100000, 2);
    auto s = CorruptionSpec::defaults(CorruptionKind::Noise, 6);
    const auto out = apply(s, big);
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < big.size(); ++i)
      for (int d = 0; d < 3; ++d) {
        const double e = double(out.points[i][d]) - big.points[i][d];
        sum += e;
        sq += e * e;
      }
    const double n = 3.0 * big.size();
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(std::abs(sd - s.sigma) < 0.05 * s.sigma);
  }
  SUBCASE("noise on a fraction of the points") {
    auto s = CorruptionSpec::defaults(CorruptionKind::NoiseFraction, 7);
    const auto out = apply(s, pc);
    std::size_t moved = 0;
    for (std::size_t i = 0; i < pc.size(); ++i) moved += out.points[i] != pc.points[i];
    CHECK(moved == 768);
  }
  SUBCASE("translation shifts every point by one offset") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto out = apply(CorruptionSpec::defaults(CorruptionKind::Translation, seed), pc);
      for (int d = 0; d < 3; ++d) {
        const double t = double(out.points[0][d]) - pc.points[0][d];
        CHECK(std::abs(t) < 0.2 + 1e-6);
        for (std::size_t i = 1; i < pc.size(); ++i)
          CHECK(std::abs(double(out.points[i][d]) - pc.points[i][d] - t) < 1e-6);
      }
    }
  }
  SUBCASE("rotation is an isometry") {
    const PointCloud small = random_cloud(200, 3);
    const auto out = apply(CorruptionSpec::defaults(CorruptionKind::Rotation, 9), small);
    for (std::size_t i = 0; i < small.size(); ++i)
      for (std::size_t j = i + 1; j < small.size(); ++j)
        CHECK(std::abs(dist(out.points[i], out.points[j]) - dist(small.points[i], small.points[j])) < 1e-5);
  }
  SUBCASE("rotations cover the sphere uniformly") {
    // The image of a fixed axis under a uniform rotation is uniform on the
    // sphere: zero mean and second moment 1/3 per coordinate.
    PointCloud axis;
    axis.points = {{0, 0, 1}};
    double mean[3] = {0, 0, 0}, second[3] = {0, 0, 0};
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
      const auto p = apply(CorruptionSpec::defaults(CorruptionKind::Rotation, t), axis).points[0];
      for (int d = 0; d < 3; ++d) {
        mean[d] += p[d];
        second[d] += double(p[d]) * p[d];
      }
    }
    for (int d = 0; d < 3; ++d) {
      CHECK(std::abs(mean[d] / trials) < 0.02);
      CHECK(std::abs(second[d] / trials - 1.0 / 3) < 0.02);
    }
  }
}

TEST_CASE("removal kinds") {
  const PointCloud pc = random_cloud(1024, 4);
  SUBCASE("uniform removal of 87.5% keeps 128 points") {
    const auto out = apply(CorruptionSpec::defaults(CorruptionKind::UniformRemoval, 1), pc);
    CHECK(out.size() == 128);
    const auto pos = subset_positions(pc, out);
    CHECK(std::set<std::size_t>(pos.begin(), pos.end()).size() == 128);
  }
  SUBCASE("sparse keeps the target count") {
    const auto out = apply(CorruptionSpec::defaults(CorruptionKind::Sparse, 2), pc);
    CHECK(out.size() == 128);
    subset_positions(pc, out);
    const PointCloud tiny = random_cloud(50, 5);
    CHECK(apply(CorruptionSpec::defaults(CorruptionKind::Sparse, 2), tiny).size() == 50);
  }
  SUBCASE("region removal carves one ball") {
    for (auto kind : {CorruptionKind::MissingPart, CorruptionKind::RegionMissing, CorruptionKind::PartialQuery}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const PointCloud small = random_cloud(300, 10 + seed);
        const auto spec = CorruptionSpec::defaults(kind, seed);
        const auto out = apply(spec, small);
        CHECK(out.size() == corrupted_size(spec, small.size()));
        CHECK(out.size() == small.size() - static_cast<std::size_t>(std::llround(spec.fraction * 300)));
        CHECK(removed_set_is_a_ball(small, subset_positions(small, out)));
      }
    }
  }
  SUBCASE("occlusion keeps the nearer half along a direction") {
    const auto out = apply(CorruptionSpec::defaults(CorruptionKind::Occlusion, 3), pc);
    CHECK(out.size() == 512);
    const auto pos = subset_positions(pc, out);
    // Kept and removed centroids separate, unlike a uniform split.
    double kc[3] = {0, 0, 0}, rc[3] = {0, 0, 0};
    std::vector<bool> kept(pc.size(), false);
    for (std::size_t i : pos) kept[i] = true;
    for (std::size_t i = 0; i < pc.size(); ++i)
      for (int d = 0; d < 3; ++d) (kept[i] ? kc : rc)[d] += pc.points[i][d] / 512.0;
    const double gap = std::sqrt((kc[0] - rc[0]) * (kc[0] - rc[0]) + (kc[1] - rc[1]) * (kc[1] - rc[1]) +
                                 (kc[2] - rc[2]) * (kc[2] - rc[2]));
    CHECK(gap > 0.3);
  }
  SUBCASE("removing everything is an error") {
    auto s = CorruptionSpec::defaults(CorruptionKind::UniformRemoval, 1);
    s.fraction = 1.0;
    try {
      apply(s, pc);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Corruption);
    }
    LabeledDataset ds;
    ds.class_names = {"a"};
    ds.samples.push_back(random_cloud(10, 1));
    ds.samples.back().id = "needle";
    try {
      corrupt_dataset(ds, s, "all_gone");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("needle") != std::string::npos);
    }
  }
}

TEST_CASE("determinism") {
  const PointCloud pc = random_cloud(256, 6);
  for (auto k : {CorruptionKind::Noise, CorruptionKind::Translation, CorruptionKind::MissingPart,
                 CorruptionKind::Sparse, CorruptionKind::Rotation, CorruptionKind::Occlusion,
                 CorruptionKind::NoiseFraction, CorruptionKind::UniformRemoval}) {
    CAPTURE(to_string(k));
    const auto a = encode_binary_cloud(apply(CorruptionSpec::defaults(k, 42), pc));
    CHECK(a == encode_binary_cloud(apply(CorruptionSpec::defaults(k, 42), pc)));
    CHECK(a != encode_binary_cloud(apply(CorruptionSpec::defaults(k, 43), pc)));
  }
}

TEST_CASE("robustness suite") {
  const LabeledDataset ds = small_dataset();
  const auto suite = build_robustness_suite(ds, 5);
  std::vector<std::string> names;
  for (const auto& e : suite) names.push_back(e.name);
  CHECK(names == robustness_suite_names());
  CHECK(names.size() == 11);

  SUBCASE("original is untouched and entries stay sample-aligned") {
    for (std::size_t i = 0; i < ds.samples.size(); ++i) CHECK(suite[0].data.samples[i].points == ds.samples[i].points);
    for (const auto& e : suite) {
      REQUIRE(e.data.samples.size() == ds.samples.size());
      for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(e.data.samples[i].id == ds.samples[i].id);
        CHECK(e.data.samples[i].label == ds.samples[i].label);
      }
    }
  }
  SUBCASE("point counts follow each protocol") {
    const std::map<std::string, std::size_t> expected = {
        {"original", 256}, {"noise", 256}, {"translation", 256}, {"missing_part", 128},
        {"sparse", 128},   {"rotation", 256}, {"occlusion", 128}, {"noise_75", 256},
        {"missing_50", 128}, {"uniform_removal_875", 32}, {"partial_query_75", 64}};
    for (const auto& e : suite)
      for (const auto& s : e.data.samples) CHECK(s.size() == expected.at(e.name));
  }
  SUBCASE("rebuilding with the same seed is identical") {
    const auto again = build_robustness_suite(ds, 5);
    const auto other = build_robustness_suite(ds, 6);
    bool differs = false;
    for (std::size_t e = 0; e < suite.size(); ++e)
      for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(encode_binary_cloud(again[e].data.samples[i]) == encode_binary_cloud(suite[e].data.samples[i]));
        differs = differs || other[e].data.samples[i].points != suite[e].data.samples[i].points;
      }
    CHECK(differs);
  }
  SUBCASE("samples get independent corruptions") {
    const auto& noisy = suite[1].data;
    CHECK(noisy.samples[0].points[0][0] - ds.samples[0].points[0][0] !=
          noisy.samples[3].points[0][0] - ds.samples[3].points[0][0]);
  }
  SUBCASE("written suite round trips") {
    const fs::path dir = fs::temp_directory_path() / ("pt_suite_" + std::to_string(std::random_device{}()));
    const fs::path index = write_suite(dir, suite);
    std::ifstream in(index);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
      const auto tab = line.find('\t');
      REQUIRE(tab != std::string::npos);
      const std::string name = line.substr(0, tab);
      const auto it = std::find(names.begin(), names.end(), name);
      REQUIRE(it != names.end());
      const auto& entry = suite[static_cast<std::size_t>(it - names.begin())];
      const auto back = load_dataset(dir / line.substr(tab + 1) / "manifest.txt");
      REQUIRE(back.samples.size() == entry.data.samples.size());
      for (std::size_t i = 0; i < back.samples.size(); ++i) CHECK(back.samples[i].points == entry.data.samples[i].points);
      ++lines;
    }
    CHECK(lines == suite.size());
    fs::remove_all(dir);
  }
}
