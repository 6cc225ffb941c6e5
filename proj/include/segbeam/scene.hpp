#pragma once

// Free-field piecewise-stationary scene simulator.
//
// Each source is rendered per sensor as a 1/r-attenuated, fractionally
// delayed copy of its signal (64-tap Blackman-windowed sinc). Sources move by
// jumping between fixed positions; consecutive positions are joined with a
// 10 ms linear crossfade that starts at the segment boundary.
//
// Levels: target.level_db is the target image power at the reference sensor
// in dB re. full scale. Interferer level_db and noise_level_db are relative to
// that target power.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "segbeam/core.hpp"
#include "segbeam/wav.hpp"

namespace segbeam {

using Vec3 = Eigen::Vector3d;

struct ArrayGeometry {
  std::vector<Vec3> positions;
  double sound_speed = 343.0;

  Index size() const { return static_cast<Index>(positions.size()); }

  void validate() const {
    if (positions.empty()) throw ParameterError("array.positions: need at least one sensor");
    if (!(sound_speed > 0.0)) throw ParameterError("array.sound_speed must be positive");
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (!positions[i].allFinite()) throw ParameterError("array.positions: non-finite coordinate");
      for (std::size_t j = 0; j < i; ++j)
        if ((positions[i] - positions[j]).norm() < 1e-6)
          throw ParameterError("array.positions: sensors " + std::to_string(j) + " and " + std::to_string(i) +
                               " coincide");
    }
  }

  // Sensors evenly spaced on a horizontal circle, first one on +x.
  static ArrayGeometry circular(Index count, double radius, const Vec3& centre) {
    if (count < 1) throw ParameterError("array.count must be >= 1");
    if (!(radius > 0.0) && count > 1) throw ParameterError("array.radius must be positive");
    ArrayGeometry g;
    for (Index m = 0; m < count; ++m) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(count);
      g.positions.push_back(centre + Vec3(radius * std::cos(a), radius * std::sin(a), 0.0));
    }
    return g;
  }

  static ArrayGeometry linear(Index count, double spacing, const Vec3& origin, const Vec3& axis = Vec3::UnitX()) {
    if (count < 1) throw ParameterError("array.count must be >= 1");
    if (!(spacing > 0.0) && count > 1) throw ParameterError("array.spacing must be positive");
    ArrayGeometry g;
    const Vec3 dir = axis.normalized();
    for (Index m = 0; m < count; ++m) g.positions.push_back(origin + dir * spacing * static_cast<double>(m));
    return g;
  }
};

enum class SignalKind { SpeechLike, WhiteNoise, Tone, File };

inline std::string to_string(SignalKind k) {
  switch (k) {
    case SignalKind::SpeechLike: return "speech";
    case SignalKind::WhiteNoise: return "white";
    case SignalKind::Tone: return "tone";
    case SignalKind::File: return "file";
  }
  return "?";
}

inline SignalKind parse_signal_kind(const std::string& s, const std::string& field) {
  if (s == "speech" || s == "speech-like") return SignalKind::SpeechLike;
  if (s == "white" || s == "white-noise") return SignalKind::WhiteNoise;
  if (s == "tone") return SignalKind::Tone;
  if (s == "file") return SignalKind::File;
  throw ParameterError(field + ": unknown signal '" + s + "' (speech|white|tone|file)");
}

struct PositionSegment {
  Index start_sample = 0;
  Vec3 position = Vec3::Zero();
};

struct SourceTrack {
  std::vector<PositionSegment> segments;
  SignalKind signal = SignalKind::SpeechLike;
  double level_db = 0.0;
  double tone_hz = 440.0;
  std::string file_path;

  void validate(const std::string& field, Index num_samples) const {
    if (segments.empty()) throw ParameterError(field + ".segments: need at least one position");
    if (segments.front().start_sample != 0) throw ParameterError(field + ".segments: first start must be 0");
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (!segments[i].position.allFinite()) throw ParameterError(field + ".segments: non-finite position");
      if (i > 0 && segments[i].start_sample <= segments[i - 1].start_sample)
        throw ParameterError(field + ".segments: starts must be strictly increasing");
    }
    if (segments.back().start_sample >= num_samples)
      throw ParameterError(field + ".segments: start beyond scene duration");
    if (!std::isfinite(level_db)) throw ParameterError(field + ".level_db must be finite");
    if (signal == SignalKind::Tone && !(tone_hz > 0.0)) throw ParameterError(field + ".tone_hz must be positive");
    if (signal == SignalKind::File && file_path.empty()) throw ParameterError(field + ".file: path required");
  }
};

struct SceneSpec {
  ArrayGeometry geometry;
  SourceTrack target;
  std::vector<SourceTrack> interferers;
  std::optional<double> noise_level_db;  // nullopt: noiseless
  double duration_s = 10.0;
  double sample_rate = 16000.0;
  std::uint64_t seed = 0;
  Index reference_index = 0;

  Index num_samples() const { return static_cast<Index>(std::llround(duration_s * sample_rate)); }

  void validate() const {
    if (!(sample_rate > 0.0)) throw ParameterError("scene.sample_rate must be positive");
    if (!(duration_s > 0.0)) throw ParameterError("scene.duration_s must be positive");
    geometry.validate();
    if (reference_index < 0 || reference_index >= geometry.size())
      throw ParameterError("scene.reference_index out of range");
    const Index n = num_samples();
    target.validate("target", n);
    if (target.segments.size() != 1) throw ParameterError("target.segments: target must be static (one position)");
    for (std::size_t i = 0; i < interferers.size(); ++i)
      interferers[i].validate("interferer." + std::to_string(i + 1), n);
    if (noise_level_db && !std::isfinite(*noise_level_db))
      throw ParameterError("scene.noise_level_db must be finite or 'none'");
  }
};

struct SceneOutput {
  RealMatrix mixture;  // = target_image + interference_image + noise, in that order
  RealMatrix target_image;
  RealMatrix interference_image;
  RealMatrix noise;
  std::vector<Index> true_changes;  // sample indices
  CMatrix true_steering;            // bins x channels, target RTF
  Index reference_index = 0;
  double sample_rate = 0.0;
};

// Spherical-wave RTF: entry m = (r_ref / r_m) exp(-j 2 pi f (r_m - r_ref) / c).
inline CVector steering_freefield(const ArrayGeometry& geometry, const Vec3& source, double freq_hz,
                                  Index reference_index) {
  if (!(freq_hz >= 0.0)) throw ParameterError("steering_freefield: frequency must be >= 0");
  if (reference_index < 0 || reference_index >= geometry.size())
    throw ParameterError("steering_freefield: reference_index out of range");
  const Index m_count = geometry.size();
  std::vector<double> r(static_cast<std::size_t>(m_count));
  for (Index m = 0; m < m_count; ++m) {
    r[static_cast<std::size_t>(m)] = (geometry.positions[static_cast<std::size_t>(m)] - source).norm();
    if (r[static_cast<std::size_t>(m)] < 1e-3)
      throw ParameterError("steering_freefield: source coincides with sensor " + std::to_string(m));
  }
  const double r_ref = r[static_cast<std::size_t>(reference_index)];
  CVector v(m_count);
  for (Index m = 0; m < m_count; ++m) {
    const double rm = r[static_cast<std::size_t>(m)];
    v(m) = std::polar(r_ref / rm, -2.0 * std::numbers::pi * freq_hz * (rm - r_ref) / geometry.sound_speed);
  }
  v(reference_index) = Complex(1.0, 0.0);
  return v;
}

// bins x channels matrix of target RTFs at the one-sided STFT bin centres.
inline CMatrix steering_table(const ArrayGeometry& geometry, const Vec3& source, double sample_rate, Index frame_size,
                              Index reference_index) {
  const Index bins = frame_size / 2 + 1;
  CMatrix table(bins, geometry.size());
  for (Index b = 0; b < bins; ++b) {
    const double f = static_cast<double>(b) * sample_rate / static_cast<double>(frame_size);
    table.row(b) = steering_freefield(geometry, source, f, reference_index).transpose();
  }
  return table;
}

namespace detail {

inline std::vector<double> speech_like(Index n, double fs, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);
  const double ph1 = unif(rng), ph2 = unif(rng), ph_am = unif(rng);
  const double bw = 150.0;
  const double r = std::exp(-std::numbers::pi * bw / fs);
  std::vector<double> out(static_cast<std::size_t>(n));
  double a1 = 0, a2 = 0, b1 = 0, b2 = 0;
  for (Index t = 0; t < n; ++t) {
    const double time = static_cast<double>(t) / fs;
    // Two slowly wandering resonances, formant-like.
    const double f1 = 550.0 + 250.0 * std::sin(2.0 * std::numbers::pi * 0.7 * time + ph1);
    const double f2 = 1600.0 + 600.0 * std::sin(2.0 * std::numbers::pi * 0.43 * time + ph2);
    const double c1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * f1 / fs);
    const double c2 = 2.0 * r * std::cos(2.0 * std::numbers::pi * f2 / fs);
    const double e = gauss(rng);
    const double a = (1.0 - r) * e + c1 * a1 - r * r * a2;
    a2 = a1;
    a1 = a;
    const double b = (1.0 - r) * a + c2 * b1 - r * r * b2;
    b2 = b1;
    b1 = b;
    const double s = std::sin(std::numbers::pi * 4.0 * time + ph_am);
    const double env = 0.15 + 0.85 * s * s;  // 4 Hz syllabic rate
    out[static_cast<std::size_t>(t)] = (b + 0.02 * a + 0.002 * e) * env;
  }
  return out;
}

inline std::vector<double> source_signal(const SourceTrack& src, Index n, double fs, std::mt19937_64& rng) {
  switch (src.signal) {
    case SignalKind::SpeechLike: return speech_like(n, fs, rng);
    case SignalKind::WhiteNoise: {
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::vector<double> out(static_cast<std::size_t>(n));
      for (auto& v : out) v = gauss(rng);
      return out;
    }
    case SignalKind::Tone: {
      std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);
      const double ph = unif(rng);
      std::vector<double> out(static_cast<std::size_t>(n));
      for (Index t = 0; t < n; ++t)
        out[static_cast<std::size_t>(t)] =
            std::sin(2.0 * std::numbers::pi * src.tone_hz * static_cast<double>(t) / fs + ph);
      return out;
    }
    case SignalKind::File: {
      const AudioBuffer buf = read_wav(src.file_path);
      if (std::abs(buf.sample_rate - fs) > 1e-9)
        throw ParameterError("source file '" + src.file_path + "': sample rate differs from scene.sample_rate");
      std::vector<double> out(static_cast<std::size_t>(n));
      for (Index t = 0; t < n; ++t) out[static_cast<std::size_t>(t)] = buf.samples(0, t % buf.length());
      return out;
    }
  }
  return {};
}

constexpr Index kSincHalf = 32;  // 64 taps

// Windowed-sinc tap for offset u (in samples) from the interpolation point.
inline double sinc_tap(double u) {
  if (std::abs(u) >= static_cast<double>(kSincHalf)) return 0.0;
  const double x = std::numbers::pi * u;
  const double sinc = std::abs(u) < 1e-12 ? 1.0 : std::sin(x) / x;
  const double a = std::numbers::pi * u / static_cast<double>(kSincHalf);
  const double blackman = 0.42 + 0.5 * std::cos(a) + 0.08 * std::cos(2.0 * a);
  return sinc * blackman;
}

// Adds gain(t) * g * s(t - delay) to out over [begin, end).
inline void add_delayed(std::span<double> out, std::span<const double> sig, double delay, double g, Index begin,
                        Index end, const std::vector<double>& gain) {
  const auto d_int = static_cast<Index>(std::floor(delay));
  const double frac = delay - static_cast<double>(d_int);
  std::array<double, 2 * kSincHalf> taps{};
  // y[t] = sum_k s[t - d_int - k] h(k - frac), k in [-kSincHalf + 1, kSincHalf]
  for (Index k = -kSincHalf + 1; k <= kSincHalf; ++k)
    taps[static_cast<std::size_t>(k + kSincHalf - 1)] = sinc_tap(static_cast<double>(k) - frac);
  const auto n = static_cast<Index>(sig.size());
  for (Index t = begin; t < end; ++t) {
    double acc = 0.0;
    for (Index k = -kSincHalf + 1; k <= kSincHalf; ++k) {
      const Index idx = t - d_int - k;
      if (idx >= 0 && idx < n) acc += sig[static_cast<std::size_t>(idx)] * taps[static_cast<std::size_t>(k + kSincHalf - 1)];
    }
    out[static_cast<std::size_t>(t)] += gain[static_cast<std::size_t>(t - begin)] * g * acc;
  }
}

// Per-sensor image of one source, unit-scaled (gain 1/r).
inline RealMatrix render_source(const SourceTrack& src, const ArrayGeometry& geom, std::span<const double> sig,
                                double fs, Index n) {
  RealMatrix img = RealMatrix::Zero(geom.size(), n);
  const auto xfade = std::max<Index>(1, static_cast<Index>(std::llround(0.01 * fs)));
  for (std::size_t j = 0; j < src.segments.size(); ++j) {
    const Index start = src.segments[j].start_sample;
    const Index stop = j + 1 < src.segments.size() ? src.segments[j + 1].start_sample : n;
    const bool fade_in = j > 0;
    const bool fade_out = j + 1 < src.segments.size();
    const Index end = fade_out ? std::min(n, stop + xfade) : n;
    std::vector<double> gain(static_cast<std::size_t>(end - start), 1.0);
    for (Index t = start; t < end; ++t) {
      double g = 1.0;
      if (fade_in && t < start + xfade) g = (static_cast<double>(t - start) + 0.5) / static_cast<double>(xfade);
      if (fade_out && t >= stop) g = 1.0 - (static_cast<double>(t - stop) + 0.5) / static_cast<double>(xfade);
      gain[static_cast<std::size_t>(t - start)] = g;
    }
    for (Index m = 0; m < geom.size(); ++m) {
      const double r = (geom.positions[static_cast<std::size_t>(m)] - src.segments[j].position).norm();
      if (r < 1e-3) throw ParameterError("render_scene: source coincides with sensor " + std::to_string(m));
      std::span<double> row(img.row(m).data(), static_cast<std::size_t>(n));
      add_delayed(row, sig, r / geom.sound_speed * fs, 1.0 / r, start, end, gain);
    }
  }
  return img;
}

inline double row_power(const RealMatrix& m, Index row) {
  return m.row(row).squaredNorm() / static_cast<double>(std::max<Index>(1, m.cols()));
}

}  // namespace detail

inline SceneOutput render_scene(const SceneSpec& spec, Index steering_frame_size = 1024) {
  spec.validate();
  const Index n = spec.num_samples();
  const double fs = spec.sample_rate;
  const Index ref = spec.reference_index;
  const Index channels = spec.geometry.size();

  SceneOutput out;
  out.reference_index = ref;
  out.sample_rate = fs;

  // Independent streams per source so adding an interferer does not change
  // the others.
  auto stream = [&](std::uint64_t k) { return std::mt19937_64(spec.seed * 0x9E3779B97F4A7C15ull + k * 7919u + 1u); };

  {
    auto rng = stream(0);
    const auto sig = detail::source_signal(spec.target, n, fs, rng);
    out.target_image = detail::render_source(spec.target, spec.geometry, sig, fs, n);
  }
  const double p_ref = detail::row_power(out.target_image, ref);
  if (!(p_ref > 0.0)) throw DataError("render_scene: target image is silent at the reference sensor");
  const double target_power = std::pow(10.0, spec.target.level_db / 10.0);
  out.target_image *= std::sqrt(target_power / p_ref);

  out.interference_image = RealMatrix::Zero(channels, n);
  for (std::size_t i = 0; i < spec.interferers.size(); ++i) {
    const auto& src = spec.interferers[i];
    auto rng = stream(i + 1);
    const auto sig = detail::source_signal(src, n, fs, rng);
    RealMatrix img = detail::render_source(src, spec.geometry, sig, fs, n);
    const double p = detail::row_power(img, ref);
    if (p > 0.0) img *= std::sqrt(target_power * std::pow(10.0, src.level_db / 10.0) / p);
    out.interference_image += img;
    for (std::size_t j = 1; j < src.segments.size(); ++j) out.true_changes.push_back(src.segments[j].start_sample);
  }
  std::sort(out.true_changes.begin(), out.true_changes.end());
  out.true_changes.erase(std::unique(out.true_changes.begin(), out.true_changes.end()), out.true_changes.end());

  out.noise = RealMatrix::Zero(channels, n);
  if (spec.noise_level_db) {
    auto rng = stream(0xABCDEFull);
    std::normal_distribution<double> gauss(0.0, std::sqrt(target_power * std::pow(10.0, *spec.noise_level_db / 10.0)));
    for (Index m = 0; m < channels; ++m)
      for (Index t = 0; t < n; ++t) out.noise(m, t) = gauss(rng);
  }

  out.mixture = out.target_image + out.interference_image + out.noise;
  out.true_steering =
      steering_table(spec.geometry, spec.target.segments.front().position, fs, steering_frame_size, ref);
  return out;
}

}  // namespace segbeam
