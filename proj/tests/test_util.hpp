#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "segbeam/segmenter.hpp"

namespace segbeam::testing {

inline Complex cn(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const double re = g(rng);
  const double im = g(rng);
  return Complex(re, im) / std::sqrt(2.0);
}

inline CVector random_cvector(Index p, std::mt19937_64& rng) {
  CVector v(p);
  for (Index i = 0; i < p; ++i) v(i) = cn(rng);
  return v;
}

struct RotationScene {
  CMatrix snapshots;
  CVector nu;
};

// One rank-1 interferer whose direction turns by 90 degrees at frame `change`.
// Both directions sit at 45 degrees to the target steering vector, so they
// leak equally into the distortionless look direction.
inline RotationScene rotation_scene(std::uint64_t seed, Index p = 4, Index frames = 1000, Index change = 500,
                                    double inr = 100.0) {
  std::mt19937_64 rng(seed + 1000);
  RotationScene sc;
  sc.nu = random_cvector(p, rng);
  sc.nu /= sc.nu(0);
  const CVector nh = sc.nu.normalized();
  CVector e = random_cvector(p, rng);
  e -= nh * nh.dot(e);
  e.normalize();
  const double c = std::cos(std::numbers::pi / 4.0);
  const double s = std::sin(std::numbers::pi / 4.0);
  const double scale = std::sqrt(static_cast<double>(p));
  const CVector d1 = (c * nh + s * e) * scale;
  const CVector d2 = (-s * nh + c * e) * scale;
  sc.snapshots.resize(p, frames);
  for (Index t = 0; t < frames; ++t) {
    const CVector n = random_cvector(p, rng);
    const Complex src = cn(rng) * std::sqrt(inr);
    sc.snapshots.col(t) = (t < change ? d1 : d2) * src + n;
  }
  return sc;
}

struct BruteForce {
  std::vector<Index> partition;
  double cost = std::numeric_limits<double>::infinity();
};

// Exhaustive search over every partition (2^(T-1) of them), skipping those
// with a segment shorter than tau + 1 when tau > 0.
inline BruteForce brute_force_segment(const CMatrix& x, const SteeringVector& nu, const SegmenterConfig& cfg) {
  const Index t_len = x.cols();
  const Index p = nu.size();
  const Index min_len = cfg.tau > 0 ? cfg.tau + 1 : 1;
  auto seg_cost = [&](Index i, Index j) {
    CMatrix s = CMatrix::Identity(p, p) * cfg.delta;
    for (Index t = i; t <= j; ++t) s += x.col(t) * x.col(t).adjoint();
    const CVector w = s.inverse() * nu.values();
    const CVector wn = w / nu.values().dot(w).real();
    return wn.dot(s * wn).real() + cfg.penalty_c;
  };
  BruteForce best;
  if (t_len < min_len) {
    best.partition = {0};
    best.cost = seg_cost(0, t_len - 1);
    return best;
  }
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (t_len - 1)); ++mask) {
    std::vector<Index> starts{0};
    for (Index b = 1; b < t_len; ++b)
      if (mask & (std::uint64_t{1} << (b - 1))) starts.push_back(b);
    double total = 0.0;
    bool ok = true;
    for (std::size_t k = 0; k < starts.size() && ok; ++k) {
      const Index end = k + 1 < starts.size() ? starts[k + 1] - 1 : t_len - 1;
      if (end - starts[k] + 1 < min_len) ok = false;
      else total += seg_cost(starts[k], end);
    }
    if (ok && total < best.cost) {
      best.cost = total;
      best.partition = starts;
    }
  }
  return best;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("segbeam_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace segbeam::testing
