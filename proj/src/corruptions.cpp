#include "pt/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "pt/errors.hpp"

namespace pt {

namespace {

struct KindName {
  CorruptionKind kind;
  const char* name;
};

constexpr KindName kKinds[] = {
    {CorruptionKind::Noise, "noise"},
    {CorruptionKind::Translation, "translation"},
    {CorruptionKind::MissingPart, "missing_part"},
    {CorruptionKind::Sparse, "sparse"},
    {CorruptionKind::Rotation, "rotation"},
    {CorruptionKind::Occlusion, "occlusion"},
    {CorruptionKind::NoiseFraction, "noise_fraction"},
    {CorruptionKind::RegionMissing, "region_missing"},
    {CorruptionKind::UniformRemoval, "uniform_removal"},
    {CorruptionKind::PartialQuery, "partial_query"},
};

std::size_t round_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

PointCloud keep_indices(const PointCloud& pc, std::vector<std::size_t> keep) {
  std::sort(keep.begin(), keep.end());
  PointCloud out = pc;
  out.points.clear();
  for (std::size_t i : keep) out.points.push_back(pc.points[i]);
  return out;
}

void add_noise(PointCloud& pc, const std::vector<std::size_t>& which, double sigma,
               std::mt19937_64& rng) {
  if (sigma == 0) return;
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t i : which)
    for (float& c : pc.points[i]) c = static_cast<float>(c + noise(rng));
}

// Removes the `remove` points closest to a random seed point (a ball grown
// until it holds exactly that many points).
PointCloud remove_region(const PointCloud& pc, std::size_t remove, std::mt19937_64& rng) {
  const std::size_t n = pc.size();
  const Point3 c = pc.points[rng() % n];
  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0;
    for (int k = 0; k < 3; ++k) d += (pc.points[i][k] - c[k]) * (double(pc.points[i][k]) - c[k]);
    order[i] = {d, i};
  }
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> keep;
  for (std::size_t q = remove; q < n; ++q) keep.push_back(order[q].second);
  return keep_indices(pc, std::move(keep));
}

}  // namespace

std::string to_string(CorruptionKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  return "unknown";
}

CorruptionKind parse_corruption_kind(const std::string& name) {
  for (const auto& k : kKinds)
    if (name == k.name) return k.kind;
  fail(ErrorKind::Config, "unknown corruption kind '" + name + "'");
}

CorruptionSpec CorruptionSpec::defaults(CorruptionKind kind, std::uint64_t seed) {
  CorruptionSpec s;
  s.kind = kind;
  s.seed = seed;
  switch (kind) {
    case CorruptionKind::NoiseFraction: s.fraction = 0.75; break;
    case CorruptionKind::MissingPart:
    case CorruptionKind::RegionMissing: s.fraction = 0.5; break;
    case CorruptionKind::UniformRemoval: s.fraction = 0.875; break;
    case CorruptionKind::Occlusion: s.fraction = 0.5; break;
    case CorruptionKind::PartialQuery: s.fraction = 0.75; break;
    default: break;
  }
  return s;
}

void CorruptionSpec::validate() const {
  if (!(fraction >= 0 && fraction <= 1)) fail(ErrorKind::Config, "corruption fraction must lie in [0, 1]");
  if (target_count < 1) fail(ErrorKind::Config, "corruption target_count must be >= 1");
  if (!(sigma >= 0)) fail(ErrorKind::Config, "noise sigma must be >= 0");
  if (!(translation_range >= 0)) fail(ErrorKind::Config, "translation range must be >= 0");
}

std::size_t corrupted_size(const CorruptionSpec& spec, std::size_t n) {
  switch (spec.kind) {
    case CorruptionKind::MissingPart:
    case CorruptionKind::RegionMissing:
    case CorruptionKind::PartialQuery:
    case CorruptionKind::UniformRemoval: return n - std::min(n, round_count(spec.fraction, n));
    case CorruptionKind::Sparse: return std::min(spec.target_count, n);
    case CorruptionKind::Occlusion: return round_count(spec.fraction, n);
    default: return n;
  }
}

PointCloud apply(const CorruptionSpec& spec, const PointCloud& pc) {
  spec.validate();
  if (pc.points.empty()) fail(ErrorKind::Corruption, "cannot corrupt an empty cloud");
  const std::size_t n = pc.size();
  const std::size_t keep = corrupted_size(spec, n);
  if (keep == 0)
    fail(ErrorKind::Corruption, to_string(spec.kind) + " would leave no points in '" + pc.id + "'");
  std::mt19937_64 rng(spec.seed);
  switch (spec.kind) {
    case CorruptionKind::Noise: {
      PointCloud out = pc;
      std::vector<std::size_t> all(n);
      std::iota(all.begin(), all.end(), 0);
      add_noise(out, all, spec.sigma, rng);
      return out;
    }
    case CorruptionKind::NoiseFraction: {
      PointCloud out = pc;
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(round_count(spec.fraction, n));
      std::sort(idx.begin(), idx.end());
      add_noise(out, idx, spec.sigma, rng);
      return out;
    }
    case CorruptionKind::Translation: {
      std::uniform_real_distribution<double> u(-spec.translation_range, spec.translation_range);
      const double t[3] = {u(rng), u(rng), u(rng)};
      PointCloud out = pc;
      for (auto& p : out.points)
        for (int d = 0; d < 3; ++d) p[d] = static_cast<float>(p[d] + t[d]);
      return out;
    }
    case CorruptionKind::MissingPart:
    case CorruptionKind::RegionMissing:
    case CorruptionKind::PartialQuery: return remove_region(pc, n - keep, rng);
    case CorruptionKind::Sparse:
    case CorruptionKind::UniformRemoval: {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(keep);
      return keep_indices(pc, std::move(idx));
    }
    case CorruptionKind::Rotation: {
      // Uniform unit quaternion (Shoemake).
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
      const double tau = 2 * std::numbers::pi;
      const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
      const double x = a * std::sin(tau * u2), y = a * std::cos(tau * u2);
      const double z = b * std::sin(tau * u3), w = b * std::cos(tau * u3);
      const double r[3][3] = {
          {1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
          {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
          {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)},
      };
      PointCloud out = pc;
      for (auto& p : out.points) {
        const double v[3] = {p[0], p[1], p[2]};
        for (int i = 0; i < 3; ++i)
          p[i] = static_cast<float>(r[i][0] * v[0] + r[i][1] * v[1] + r[i][2] * v[2]);
      }
      return out;
    }
    case CorruptionKind::Occlusion: {
      // Viewer at infinity along a random direction; the nearer points stay.
      std::normal_distribution<double> g(0.0, 1.0);
      double dir[3];
      double len = 0;
      do {
        for (double& c : dir) c = g(rng);
        len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      } while (len < 1e-12);
      std::vector<std::pair<double, std::size_t>> order(n);
      for (std::size_t i = 0; i < n; ++i)
        order[i] = {-(pc.points[i][0] * dir[0] + pc.points[i][1] * dir[1] + pc.points[i][2] * dir[2]) / len, i};
      std::sort(order.begin(), order.end());
      std::vector<std::size_t> idx;
      for (std::size_t q = 0; q < keep; ++q) idx.push_back(order[q].second);
      return keep_indices(pc, std::move(idx));
    }
  }
  fail(ErrorKind::Corruption, "unhandled corruption kind");
}

std::vector<std::string> robustness_suite_names() {
  return {"original",   "noise",    "translation", "missing_part",        "sparse",
          "rotation",   "occlusion", "noise_75",   "missing_50", "uniform_removal_875",
          "partial_query_75"};
}

LabeledDataset corrupt_dataset(const LabeledDataset& dataset, const CorruptionSpec& spec,
                               const std::string& tag) {
  LabeledDataset out;
  out.class_names = dataset.class_names;
  out.split = dataset.split;
  out.samples.resize(dataset.samples.size());
  std::vector<std::string> errors(dataset.samples.size());
  const auto count = static_cast<std::ptrdiff_t>(dataset.samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const PointCloud& pc = dataset.samples[static_cast<std::size_t>(i)];
    CorruptionSpec s = spec;
    s.seed = mix_seed(mix_seed(spec.seed, hash_string(pc.id)), hash_string(tag));
    try {
      out.samples[static_cast<std::size_t>(i)] = apply(s, pc);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = "sample '" + pc.id + "': " + e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorKind::Corruption, tag + ": " + e);
  return out;
}

std::vector<SuiteEntry> build_robustness_suite(const LabeledDataset& dataset, std::uint64_t seed) {
  auto spec = [seed](CorruptionKind k) { return CorruptionSpec::defaults(k, seed); };
  std::vector<std::pair<std::string, CorruptionSpec>> plan = {
      {"noise", spec(CorruptionKind::Noise)},
      {"translation", spec(CorruptionKind::Translation)},
      {"missing_part", spec(CorruptionKind::MissingPart)},
      {"sparse", spec(CorruptionKind::Sparse)},
      {"rotation", spec(CorruptionKind::Rotation)},
      {"occlusion", spec(CorruptionKind::Occlusion)},
      {"noise_75", spec(CorruptionKind::NoiseFraction)},
      {"missing_50", spec(CorruptionKind::RegionMissing)},
      {"uniform_removal_875", spec(CorruptionKind::UniformRemoval)},
      {"partial_query_75", spec(CorruptionKind::PartialQuery)},
  };
  std::vector<SuiteEntry> suite;
  suite.push_back({"original", CorruptionSpec::defaults(CorruptionKind::Noise, seed), dataset});
  suite.front().spec.sigma = 0;
  for (auto& [name, s] : plan) suite.push_back({name, s, corrupt_dataset(dataset, s, name)});
  return suite;
}

std::filesystem::path write_suite(const std::filesystem::path& dir,
                                  const std::vector<SuiteEntry>& suite) {
  std::filesystem::create_directories(dir);
  const auto index = dir / "suite.txt";
  std::ofstream out(index);
  if (!out) fail(ErrorKind::Io, "cannot write " + index.string());
  for (const auto& e : suite) {
    write_dataset(dir / e.name, e.data, CloudEncoding::Binary);
    out << e.name << '\t' << e.name << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + index.string());
  return index;
}

}  // namespace pt
