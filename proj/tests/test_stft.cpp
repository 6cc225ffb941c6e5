#include <random>

#include <gtest/gtest.h>

#include "segbeam/stft.hpp"

using namespace segbeam;

namespace {

RealMatrix random_audio(Index channels, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  RealMatrix x(channels, n);
  for (Index c = 0; c < channels; ++c)
    for (Index t = 0; t < n; ++t) x(c, t) = g(rng);
  return x;
}

StftConfig make_config(Index frame, Index hop, WindowType w) {
  StftConfig c;
  c.frame_size = frame;
  c.hop = hop;
  c.window = w;
  return c;
}

}  // namespace

TEST(Stft, DcFrameWithRectWindow) {
  const auto cfg = make_config(8, 4, WindowType::Rect);
  const RealMatrix x = RealMatrix::Ones(1, 32);
  const auto spec = stft_forward(x, cfg);
  ASSERT_EQ(spec.bins(), 5);
  // Frame 1 starts at padded sample 4, i.e. signal sample 0: fully inside.
  for (Index t = 1; t + 1 < spec.frames(); ++t) {
    EXPECT_NEAR(std::abs(spec.at(0, t, 0)), 8.0, 1e-12);
    for (Index b = 1; b < spec.bins(); ++b) EXPECT_NEAR(std::abs(spec.at(b, t, 0)), 0.0, 1e-12);
  }
}

TEST(Stft, BinCentredSinusoidConcentrates) {
  const auto cfg = make_config(256, 128, WindowType::Rect);
  const Index k = 19;
  RealMatrix x(1, 2048);
  for (Index t = 0; t < x.cols(); ++t)
    x(0, t) = std::cos(2.0 * std::numbers::pi * static_cast<double>(k * t) / 256.0 + 0.3);
  const auto spec = stft_forward(x, cfg);
  for (Index t = 1; t + 1 < spec.frames(); ++t) {
    double total = 0.0;
    for (Index b = 0; b < spec.bins(); ++b) total += std::norm(spec.at(b, t, 0));
    EXPECT_GE(std::norm(spec.at(k, t, 0)) / total, 0.99);
  }
}

TEST(Stft, PerfectReconstructionDefaultConfig) {
  const StftConfig cfg;
  const RealMatrix x = random_audio(2, 20000, 1);
  const RealMatrix y = istft_inverse(stft_forward(x, cfg));
  ASSERT_EQ(y.rows(), 2);
  ASSERT_EQ(y.cols(), x.cols());
  const Index f = cfg.frame_size;
  EXPECT_LE((y - x).middleCols(f, x.cols() - 2 * f).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((y - x).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Stft, PerfectReconstructionAllWindows) {
  const std::vector<StftConfig> cfgs = {
      make_config(512, 256, WindowType::SqrtHann), make_config(512, 128, WindowType::Hann),
      make_config(512, 256, WindowType::Hann),     make_config(256, 256, WindowType::Rect),
      make_config(256, 64, WindowType::Rect),      make_config(1024, 512, WindowType::SqrtHann)};
  const RealMatrix x = random_audio(1, 5000, 2);
  for (const auto& cfg : cfgs) {
    const RealMatrix y = istft_inverse(stft_forward(x, cfg));
    const Index f = cfg.frame_size;
    EXPECT_LE((y - x).middleCols(f, x.cols() - 2 * f).cwiseAbs().maxCoeff(), 1e-10)
        << to_string(cfg.window) << " " << cfg.frame_size << "/" << cfg.hop;
  }
}

TEST(Stft, NonColaPairRejected) {
  EXPECT_THROW(make_config(512, 512, WindowType::SqrtHann).validate(), ParameterError);
  EXPECT_THROW(make_config(500, 250, WindowType::Hann).validate(), ParameterError);
  EXPECT_THROW(make_config(512, 384, WindowType::Hann).validate(), ParameterError);
}

TEST(Stft, ZeroInputZeroOutput) {
  const StftConfig cfg;
  const RealMatrix x = RealMatrix::Zero(3, 4096);
  const auto spec = stft_forward(x, cfg);
  for (Index b = 0; b < spec.bins(); ++b)
    for (Index t = 0; t < spec.frames(); ++t)
      for (Index c = 0; c < 3; ++c) EXPECT_EQ(spec.at(b, t, c), Complex(0.0, 0.0));
  EXPECT_EQ(istft_inverse(spec).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Stft, SingleFrameReproducesWindowedFrame) {
  const auto cfg = make_config(64, 32, WindowType::SqrtHann);
  const RealMatrix x = random_audio(1, 64, 3);
  const RVector wa = cfg.analysis_window();
  const RVector ws = cfg.synthesis_window();
  // Build a one-frame spectrogram holding the windowed frame.
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(64);
  for (Index k = 0; k < 64; ++k) buf[static_cast<std::size_t>(k)] = x(0, k) * wa(k);
  std::vector<Complex> half;
  fft.fwd(half, buf);
  Spectrogram spec(cfg, 1, 1, 0);
  for (Index b = 0; b < spec.bins(); ++b) spec.at(b, 0, 0) = half[static_cast<std::size_t>(b)];
  const RealMatrix y = overlap_add(spec);
  ASSERT_EQ(y.cols(), 64);
  const double gain = cfg.cola_gain();
  for (Index k = 0; k < 64; ++k) EXPECT_NEAR(y(0, k), x(0, k) * wa(k) * ws(k) / gain, 1e-12);
}

TEST(Stft, ParsevalPerFrame) {
  const StftConfig cfg;
  const RealMatrix x = random_audio(1, 8192, 4);
  const auto spec = stft_forward(x, cfg);
  const RVector wa = cfg.analysis_window();
  const Index f = cfg.frame_size;
  for (Index t = 1; t + 1 < spec.frames(); ++t) {
    double time_energy = 0.0;
    for (Index k = 0; k < f; ++k) {
      const Index s = t * cfg.hop + k - cfg.pad();
      const double v = (s >= 0 && s < x.cols()) ? x(0, s) * wa(k) : 0.0;
      time_energy += v * v;
    }
    // One-sided: interior bins count twice, DC and Nyquist once.
    double freq_energy = std::norm(spec.at(0, t, 0)) + std::norm(spec.at(spec.bins() - 1, t, 0));
    for (Index b = 1; b + 1 < spec.bins(); ++b) freq_energy += 2.0 * std::norm(spec.at(b, t, 0));
    freq_energy /= static_cast<double>(f);
    EXPECT_NEAR(freq_energy, time_energy, 1e-8 * time_energy);
  }
}

TEST(Stft, Linearity) {
  const StftConfig cfg;
  const RealMatrix x = random_audio(2, 6000, 5);
  const RealMatrix y = random_audio(2, 6000, 6);
  const double a = 0.7, b = -2.3;
  const auto sx = stft_forward(x, cfg);
  const auto sy = stft_forward(y, cfg);
  const auto sz = stft_forward(a * x + b * y, cfg);
  double err = 0.0, mag = 0.0;
  for (Index bin = 0; bin < sz.bins(); ++bin)
    for (Index t = 0; t < sz.frames(); ++t)
      for (Index c = 0; c < 2; ++c) {
        err = std::max(err, std::abs(sz.at(bin, t, c) - (a * sx.at(bin, t, c) + b * sy.at(bin, t, c))));
        mag = std::max(mag, std::abs(sz.at(bin, t, c)));
      }
  EXPECT_LE(err, 1e-12 * mag);
}

TEST(Stft, FrameCountAndErrors) {
  const StftConfig cfg;
  EXPECT_EQ(stft_frame_count(1024, cfg), 3);
  EXPECT_EQ(stft_frame_count(1025, cfg), 4);
  EXPECT_EQ(stft_frame_count(640000, cfg), 1251);
  EXPECT_EQ(stft_forward(RealMatrix::Zero(1, 1024), cfg).frames(), 3);
  EXPECT_THROW(stft_forward(RealMatrix::Zero(1, 1023), cfg), ShapeError);
  RealMatrix bad = RealMatrix::Zero(1, 2048);
  bad(0, 7) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(stft_forward(bad, cfg), DataError);
  EXPECT_EQ(parse_window("sqrt-hann"), WindowType::SqrtHann);
  EXPECT_THROW(parse_window("kaiser"), ParameterError);
}

TEST(Stft, SampleToFrameCentres) {
  const StftConfig cfg;
  // Frame t is centred on signal sample t * hop + F/2 - pad.
  EXPECT_EQ(sample_to_frame(0, cfg), 0);
  EXPECT_EQ(sample_to_frame(512 * 10, cfg), 10);
  EXPECT_EQ(sample_to_frame(64000, cfg), 125);
}
