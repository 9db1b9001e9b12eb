#include "pt/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "pt/errors.hpp"

namespace pt {

namespace {

inline float sq_dist(const Point3& a, const Point3& b) {
  const float dx = a[0] - b[0];
  const float dy = a[1] - b[1];
  const float dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

struct Candidate {
  float d;
  std::size_t j;
  bool operator<(const Candidate& o) const { return d < o.d || (d == o.d && j < o.j); }
};

void check_k(const PointCloud& pc, std::size_t k) {
  if (pc.size() < 2 || k < 1 || k > pc.size() - 1)
    fail(ErrorKind::Query, "knn: k=" + std::to_string(k) + " out of range for " +
                               std::to_string(pc.size()) + " points");
}

}  // namespace

void LabeledDataset::validate() const {
  std::vector<std::string> ids;
  for (const auto& s : samples) {
    if (s.label && (*s.label < 0 || static_cast<std::size_t>(*s.label) >= class_names.size()))
      fail(ErrorKind::Load, "sample '" + s.id + "': label " + std::to_string(*s.label) +
                                " out of range for " + std::to_string(class_names.size()) +
                                " classes");
    ids.push_back(s.id);
  }
  std::sort(ids.begin(), ids.end());
  const auto dup = std::adjacent_find(ids.begin(), ids.end());
  if (dup != ids.end()) fail(ErrorKind::Load, "duplicate sample id '" + *dup + "'");
}

void validate_points(const PointCloud& pc) {
  if (pc.points.empty()) fail(ErrorKind::Load, "cloud '" + pc.id + "' has no points");
  for (std::size_t i = 0; i < pc.points.size(); ++i)
    for (float v : pc.points[i])
      if (!std::isfinite(v))
        fail(ErrorKind::Load,
             "cloud '" + pc.id + "' has a non-finite coordinate at point " + std::to_string(i));
}

PointCloud normalize_unit_sphere(const PointCloud& pc) {
  if (pc.points.empty()) fail(ErrorKind::Load, "cannot normalize an empty cloud");
  PointCloud out = pc;
  double c[3] = {0, 0, 0};
  for (const auto& p : pc.points)
    for (int d = 0; d < 3; ++d) c[d] += p[d];
  for (double& v : c) v /= static_cast<double>(pc.size());
  double r2 = 0;
  for (const auto& p : pc.points) {
    double s = 0;
    for (int d = 0; d < 3; ++d) s += (p[d] - c[d]) * (p[d] - c[d]);
    r2 = std::max(r2, s);
  }
  const double r = std::sqrt(r2);
  for (auto& p : out.points)
    for (int d = 0; d < 3; ++d)
      p[d] = r > 0 ? static_cast<float>((p[d] - c[d]) / r) : 0.0f;
  out.normalized = true;
  return out;
}

std::vector<std::size_t> farthest_point_indices(const PointCloud& pc, std::size_t count,
                                                std::uint64_t seed) {
  const std::size_t n = pc.size();
  if (count == 0 || count > n)
    fail(ErrorKind::Sampling, "farthest point sampling: cannot select " + std::to_string(count) +
                                  " of " + std::to_string(n) + " points");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(count);
  std::vector<float> dist(n, std::numeric_limits<float>::infinity());
  std::size_t current = static_cast<std::size_t>(rng() % n);
  for (std::size_t s = 0; s < count; ++s) {
    picked.push_back(current);
    dist[current] = -1.0f;
    const Point3 c = pc.points[current];
#pragma omp parallel for schedule(static) if (n >= 4096)
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i] < 0) continue;
      dist[i] = std::min(dist[i], sq_dist(pc.points[i], c));
    }
    std::size_t best = 0;
    float bd = -2.0f;
    for (std::size_t i = 0; i < n; ++i)
      if (dist[i] > bd) {
        bd = dist[i];
        best = i;
      }
    current = best;
  }
  return picked;
}

PointCloud farthest_point_sample(const PointCloud& pc, std::size_t count, std::uint64_t seed) {
  PointCloud out = pc;
  out.points.clear();
  for (std::size_t i : farthest_point_indices(pc, count, seed)) out.points.push_back(pc.points[i]);
  return out;
}

PointCloud uniform_sample(const PointCloud& pc, std::size_t count, std::uint64_t seed) {
  if (count == 0 || count > pc.size())
    fail(ErrorKind::Sampling, "uniform sampling: cannot select " + std::to_string(count) + " of " +
                                  std::to_string(pc.size()) + " points");
  std::vector<std::size_t> idx(pc.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  PointCloud out = pc;
  out.points.clear();
  for (std::size_t i : idx) out.points.push_back(pc.points[i]);
  return out;
}

PointCloud apply_sampling(const PointCloud& pc, const SamplingSpec& spec) {
  if (spec.target_count < 1) fail(ErrorKind::Sampling, "target_count must be >= 1");
  if (spec.method == SamplingMethod::FarthestPoint)
    return farthest_point_sample(pc, spec.target_count, spec.seed);
  return uniform_sample(pc, spec.target_count, spec.seed);
}

std::vector<std::size_t> knn_indices(const PointCloud& pc, std::size_t k) {
  check_k(pc, k);
  const std::size_t n = pc.size();
  std::vector<std::size_t> out(n * k);
#pragma omp parallel if (n >= 256)
  {
    std::vector<Candidate> cand(n - 1);
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t c = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) cand[c++] = Candidate{sq_dist(pc.points[i], pc.points[j]), j};
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
      for (std::size_t q = 0; q < k; ++q) out[i * k + q] = cand[q].j;
    }
  }
  return out;
}

namespace serial {

std::vector<std::size_t> knn_indices(const PointCloud& pc, std::size_t k) {
  check_k(pc, k);
  const std::size_t n = pc.size();
  std::vector<std::size_t> out;
  out.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Candidate> all;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) all.push_back({sq_dist(pc.points[i], pc.points[j]), j});
    std::sort(all.begin(), all.end());
    for (std::size_t q = 0; q < k; ++q) out.push_back(all[q].j);
  }
  return out;
}

std::vector<std::size_t> farthest_point_indices(const PointCloud& pc, std::size_t count,
                                                std::uint64_t seed) {
  const std::size_t n = pc.size();
  if (count == 0 || count > n)
    fail(ErrorKind::Sampling, "farthest point sampling: cannot select " + std::to_string(count) +
                                  " of " + std::to_string(n) + " points");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked{static_cast<std::size_t>(rng() % n)};
  std::vector<bool> used(n, false);
  used[picked[0]] = true;
  while (picked.size() < count) {
    std::size_t best = n;
    float bd = -1.0f;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      float d = std::numeric_limits<float>::infinity();
      for (std::size_t s : picked) d = std::min(d, sq_dist(pc.points[i], pc.points[s]));
      if (d > bd) {
        bd = d;
        best = i;
      }
    }
    used[best] = true;
    picked.push_back(best);
  }
  return picked;
}

}  // namespace serial

AugmentParams draw_augmentation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Open intervals: redraw the (measure-zero) lower endpoint.
  auto open = [&rng](double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (;;) {
      const double v = u(rng);
      if (v > lo && v < hi) return v;
    }
  };
  AugmentParams p;
  p.scale = static_cast<float>(open(0.8, 1.25));
  for (float& t : p.translation) t = static_cast<float>(open(-0.1, 0.1));
  return p;
}

PointCloud apply_augmentation(const PointCloud& pc, const AugmentParams& params) {
  PointCloud out = pc;
  for (auto& p : out.points)
    for (int d = 0; d < 3; ++d) p[d] = p[d] * params.scale + params.translation[d];
  return out;
}

PointCloud augment(const PointCloud& pc, std::uint64_t seed, bool identity) {
  if (identity) return pc;
  return apply_augmentation(pc, draw_augmentation(seed));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_string(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace pt
