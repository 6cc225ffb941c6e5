#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segbeam/core.hpp"

namespace segbeam {

// Scale-invariant SDR in dB. Returns +infinity when the residual energy is
// below 1e-30 of the projected target energy.
inline double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size() || reference.empty())
    throw ShapeError("si_sdr: signals must have equal nonzero length");
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += estimate[i] * reference[i];
    ref_energy += reference[i] * reference[i];
  }
  if (!(ref_energy > 0.0)) throw ParameterError("si_sdr: reference is all zero");
  const double alpha = dot / ref_energy;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    target += s * s;
    const double e = estimate[i] - s;
    residual += e * e;
  }
  if (residual <= 1e-30 * target) return std::numeric_limits<double>::infinity();
  if (!(target > 0.0)) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(target / residual);
}

struct ChangePointScore {
  double precision = 1.0;
  double recall = 1.0;
  double mean_latency = 0.0;  // signed, detected - truth, over matches
  Index matched = 0;
};

// Greedy one-to-one matching: each true change (ascending) takes the nearest
// unmatched detection within +-tolerance; ties go to the earlier detection.
inline ChangePointScore change_point_score(const std::vector<Index>& detected, const std::vector<Index>& truth,
                                           Index tolerance) {
  std::vector<bool> used(detected.size(), false);
  ChangePointScore s;
  double latency_sum = 0.0;
  for (Index t : truth) {
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < detected.size(); ++i) {
      if (used[i]) continue;
      const Index d = detected[i] - t;
      if (d < -tolerance || d > tolerance) continue;
      if (!pick || std::abs(d) < std::abs(detected[*pick] - t)) pick = i;
    }
    if (pick) {
      used[*pick] = true;
      ++s.matched;
      latency_sum += static_cast<double>(detected[*pick] - t);
    }
  }
  s.precision = detected.empty() ? 1.0 : static_cast<double>(s.matched) / static_cast<double>(detected.size());
  s.recall = truth.empty() ? 1.0 : static_cast<double>(s.matched) / static_cast<double>(truth.size());
  s.mean_latency = s.matched > 0 ? latency_sum / static_cast<double>(s.matched) : 0.0;
  return s;
}

constexpr double kPowerFloorDb = -120.0;

inline double power_db(double p) { return std::max(kPowerFloorDb, 10.0 * std::log10(std::max(p, 1e-300))); }

// Trailing moving average of |y|^2 over `smoothing` frames (fewer at the
// start), in dB with a -120 dB floor.
inline std::vector<double> output_power_trace(std::span<const Complex> outputs, Index smoothing) {
  if (smoothing < 1) throw ParameterError("output_power_trace: smoothing must be >= 1");
  std::vector<double> trace(outputs.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    acc += std::norm(outputs[t]);
    const auto s = static_cast<std::size_t>(smoothing);
    if (t >= s) acc -= std::norm(outputs[t - s]);
    const double n = static_cast<double>(std::min(t + 1, s));
    trace[t] = power_db(std::max(acc, 0.0) / n);
  }
  return trace;
}

// One row of the metrics CSV. Change-point fields are absent for methods
// that do not segment.
struct MetricsReport {
  std::string method;
  Index window_k = 0;  // 0 for the segmented method
  double c_rel = 0.0;
  Index tau = 0;
  double si_sdr_db = 0.0;
  double si_sdr_gain_db = 0.0;
  double mean_output_power_db = 0.0;
  std::optional<double> cp_precision;
  std::optional<double> cp_recall;
  std::optional<double> cp_mean_latency_frames;
};

inline constexpr const char* kMetricsCsvHeader =
    "method,window_k,c_rel,tau,si_sdr_db,si_sdr_gain_db,mean_output_power_db,cp_precision,cp_recall,"
    "cp_mean_latency_frames";

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string to_csv_row(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); };
  std::string row = r.method + "," + std::to_string(r.window_k) + "," + format_number(r.c_rel) + "," +
                    std::to_string(r.tau) + "," + format_number(r.si_sdr_db) + "," + format_number(r.si_sdr_gain_db) +
                    "," + format_number(r.mean_output_power_db) + "," + opt(r.cp_precision) + "," + opt(r.cp_recall) +
                    "," + opt(r.cp_mean_latency_frames);
  return row;
}

}  // namespace segbeam
