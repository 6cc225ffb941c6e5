#include <random>

#include <gtest/gtest.h>

#include "segbeam/metrics.hpp"

using namespace segbeam;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(SiSdr, PerfectAndScaledEstimatesAreInfinite) {
  const auto s = noise(1000, 1);
  EXPECT_EQ(si_sdr(s, s), std::numeric_limits<double>::infinity());
  std::vector<double> twice(s);
  for (auto& v : twice) v *= 2.0;
  EXPECT_EQ(si_sdr(twice, s), std::numeric_limits<double>::infinity());
}

TEST(SiSdr, OrthogonalResidualAtTenthEnergy) {
  const auto s = noise(4096, 2);
  auto n = noise(4096, 3);
  const double k = dot(n, s) / dot(s, s);
  for (std::size_t i = 0; i < n.size(); ++i) n[i] -= k * s[i];
  const double scale = std::sqrt(dot(s, s) / 10.0 / dot(n, n));
  std::vector<double> est(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) est[i] = s[i] + scale * n[i];
  EXPECT_NEAR(si_sdr(est, s), 10.0, 1e-9);
}

TEST(SiSdr, ScaleInvariantAndMaximalAtProjection) {
  const auto s = noise(2000, 4);
  const auto e = noise(2000, 5);
  std::vector<double> x(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) x[i] = s[i] + 0.3 * e[i];
  const double base = si_sdr(x, s);
  for (double a : {1e-3, 0.2, 7.0, 5e4}) {
    std::vector<double> y(x);
    for (auto& v : y) v *= a;
    EXPECT_NEAR(si_sdr(y, s), base, 1e-9);
  }
  // Adding more orthogonal residual strictly lowers it.
  auto o = noise(2000, 6);
  const double k = dot(o, s) / dot(s, s);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= k * s[i];
  std::vector<double> z(x);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += 0.1 * o[i];
  EXPECT_LT(si_sdr(z, s), base);
}

TEST(SiSdr, Errors) {
  const std::vector<double> a{1.0, 2.0}, b{1.0}, zero{0.0, 0.0};
  EXPECT_THROW(si_sdr(a, b), ShapeError);
  EXPECT_THROW(si_sdr(a, zero), ParameterError);
  EXPECT_THROW(si_sdr(std::vector<double>{}, std::vector<double>{}), ShapeError);
}

TEST(ChangePointScore, Examples) {
  const std::vector<Index> truth{100, 300, 700};
  auto s = change_point_score(truth, truth, 5);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_EQ(s.recall, 1.0);
  EXPECT_EQ(s.mean_latency, 0.0);

  s = change_point_score({}, truth, 5);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_EQ(s.recall, 0.0);

  s = change_point_score({104}, {100}, 10);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_EQ(s.recall, 1.0);
  EXPECT_DOUBLE_EQ(s.mean_latency, 4.0);

  s = change_point_score({}, {}, 3);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_EQ(s.recall, 1.0);
}

TEST(ChangePointScore, OneToOneMatching) {
  // Two detections near one truth: only one may match.
  auto s = change_point_score({98, 103}, {100}, 10);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  EXPECT_DOUBLE_EQ(s.mean_latency, -2.0);
  // Outside tolerance does not match.
  s = change_point_score({120}, {100}, 10);
  EXPECT_EQ(s.matched, 0);
  EXPECT_EQ(s.precision, 0.0);
  EXPECT_EQ(s.recall, 0.0);
  // Signed latency is averaged over matches.
  s = change_point_score({95, 210, 330}, {100, 200, 300}, 15);
  EXPECT_DOUBLE_EQ(s.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.mean_latency, 2.5);
}

TEST(OutputPowerTrace, Examples) {
  const std::vector<Complex> zeros(20, Complex(0.0, 0.0));
  for (double v : output_power_trace(zeros, 4)) EXPECT_EQ(v, -120.0);

  std::vector<Complex> unit(20);
  for (std::size_t i = 0; i < unit.size(); ++i) unit[i] = std::polar(1.0, 0.3 * static_cast<double>(i));
  for (double v : output_power_trace(unit, 5)) EXPECT_NEAR(v, 0.0, 1e-12);

  std::vector<Complex> step(40, Complex(1.0, 0.0));
  for (std::size_t i = 20; i < 40; ++i) step[i] = Complex(std::sqrt(10.0), 0.0);
  const auto tr = output_power_trace(step, 6);
  EXPECT_NEAR(tr[19], 0.0, 1e-12);
  EXPECT_NEAR(tr[19 + 6], 10.0, 1e-9);
  for (std::size_t i = 20; i < 26; ++i) EXPECT_GT(tr[i], tr[i - 1]);

  EXPECT_THROW(output_power_trace(unit, 0), ParameterError);
}

TEST(MetricsCsv, RowFormat) {
  MetricsReport r;
  r.method = "fixed";
  r.window_k = 70;
  r.si_sdr_db = 3.25;
  r.si_sdr_gain_db = -1.0;
  r.mean_output_power_db = -20.5;
  EXPECT_EQ(to_csv_row(r), "fixed,70,0.000000,0,3.250000,-1.000000,-20.500000,NA,NA,NA");
  r.method = "segmented";
  r.window_k = 0;
  r.c_rel = 2.0;
  r.tau = 8;
  r.cp_precision = 1.0;
  r.cp_recall = 0.5;
  r.cp_mean_latency_frames = 3.0;
  r.si_sdr_db = std::numeric_limits<double>::infinity();
  EXPECT_EQ(to_csv_row(r), "segmented,0,2.000000,8,inf,-1.000000,-20.500000,1.000000,0.500000,3.000000");
  const std::string header(kMetricsCsvHeader);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 9);
}
