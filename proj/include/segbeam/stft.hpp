#pragma once

// Multichannel STFT analysis / weighted overlap-add synthesis.
//
// Frame t covers padded samples [t*hop, t*hop + frame_size). The signal is
// zero-padded by frame_size - hop at the front and by at least that much at
// the back, so every original sample is covered by a full set of
// overlapping frames and reconstruction is exact over the whole signal.
// Spectra are one-sided: bins = frame_size / 2 + 1.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "segbeam/core.hpp"

namespace segbeam {

enum class WindowType { SqrtHann, Hann, Rect };

inline std::string to_string(WindowType w) {
  switch (w) {
    case WindowType::SqrtHann: return "sqrt-hann";
    case WindowType::Hann: return "hann";
    case WindowType::Rect: return "rect";
  }
  return "?";
}

inline WindowType parse_window(const std::string& s) {
  if (s == "sqrt-hann" || s == "sqrthann") return WindowType::SqrtHann;
  if (s == "hann") return WindowType::Hann;
  if (s == "rect") return WindowType::Rect;
  throw ParameterError("stft.window: unknown window '" + s + "' (sqrt-hann|hann|rect)");
}

struct StftConfig {
  Index frame_size = 1024;
  Index hop = 512;
  WindowType window = WindowType::SqrtHann;
  double sample_rate = 16000.0;

  Index bins() const { return frame_size / 2 + 1; }
  Index pad() const { return frame_size - hop; }

  // Periodic windows. Hann analysis is paired with a rectangular synthesis
  // window; the other two use the same window on both sides.
  RVector analysis_window() const {
    RVector w(frame_size);
    for (Index n = 0; n < frame_size; ++n) {
      const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                               static_cast<double>(frame_size));
      switch (window) {
        case WindowType::SqrtHann: w(n) = std::sqrt(hann); break;
        case WindowType::Hann: w(n) = hann; break;
        case WindowType::Rect: w(n) = 1.0; break;
      }
    }
    return w;
  }

  RVector synthesis_window() const {
    if (window == WindowType::Hann) return RVector::Ones(frame_size);
    return analysis_window();
  }

  // Constant value of sum_k wa(n + k hop) ws(n + k hop). Throws if the pair
  // is not constant-overlap-add at this hop.
  double cola_gain() const {
    const RVector prod = analysis_window().cwiseProduct(synthesis_window());
    RVector acc = RVector::Zero(hop);
    for (Index n = 0; n < frame_size; ++n) acc(n % hop) += prod(n);
    const double gain = acc.mean();
    if (!(gain > 0.0) || (acc.array() - gain).abs().maxCoeff() > 1e-10 * gain)
      throw ParameterError("stft: window/hop pair is not constant-overlap-add");
    return gain;
  }

  void validate() const {
    if (frame_size < 2 || (frame_size & (frame_size - 1)) != 0)
      throw ParameterError("stft.frame_size must be a power of two >= 2");
    if (hop < 1 || hop > frame_size || frame_size % hop != 0)
      throw ParameterError("stft.hop must divide stft.frame_size");
    if (!(sample_rate > 0.0)) throw ParameterError("stft.sample_rate must be positive");
    cola_gain();
  }
};

class Spectrogram {
 public:
  Spectrogram() = default;
  Spectrogram(StftConfig config, Index frames, Index channels, Index num_samples)
      : config_(config),
        frames_(frames),
        channels_(channels),
        num_samples_(num_samples),
        data_(static_cast<std::size_t>(config.bins() * frames * channels)) {}

  Index bins() const { return config_.bins(); }
  Index frames() const { return frames_; }
  Index channels() const { return channels_; }
  // Length of the time signal this spectrogram was computed from.
  Index num_samples() const { return num_samples_; }
  const StftConfig& config() const { return config_; }

  Complex& at(Index bin, Index frame, Index ch) { return data_[offset(bin, frame, ch)]; }
  const Complex& at(Index bin, Index frame, Index ch) const { return data_[offset(bin, frame, ch)]; }

  // channels x frames snapshot matrix for one bin.
  CMatrix bin_snapshots(Index bin) const {
    CMatrix x(channels_, frames_);
    for (Index t = 0; t < frames_; ++t)
      for (Index c = 0; c < channels_; ++c) x(c, t) = at(bin, t, c);
    return x;
  }

  void set_bin_channel(Index bin, Index ch, const std::vector<Complex>& values) {
    if (static_cast<Index>(values.size()) != frames_) throw ShapeError("spectrogram: frame count mismatch");
    for (Index t = 0; t < frames_; ++t) at(bin, t, ch) = values[static_cast<std::size_t>(t)];
  }

 private:
  std::size_t offset(Index bin, Index frame, Index ch) const {
    return static_cast<std::size_t>((bin * frames_ + frame) * channels_ + ch);
  }

  StftConfig config_;
  Index frames_ = 0;
  Index channels_ = 0;
  Index num_samples_ = 0;
  std::vector<Complex> data_;  // [bin][frame][channel]
};

inline Index stft_frame_count(Index num_samples, const StftConfig& cfg) {
  const Index a = num_samples + cfg.frame_size - 2 * cfg.hop;
  return (a + cfg.hop - 1) / cfg.hop + 1;
}

// Frame whose centre is nearest to the given sample of the unpadded signal.
inline Index sample_to_frame(Index sample, const StftConfig& cfg) {
  const double centre_offset = static_cast<double>(cfg.frame_size) / 2.0 - static_cast<double>(cfg.pad());
  return static_cast<Index>(std::llround((static_cast<double>(sample) - centre_offset) / static_cast<double>(cfg.hop)));
}

inline Spectrogram stft_forward(const RealMatrix& audio, const StftConfig& cfg) {
  cfg.validate();
  const Index n = audio.cols();
  if (audio.rows() < 1) throw ShapeError("stft_forward: no channels");
  if (n < cfg.frame_size) throw ShapeError("stft_forward: audio shorter than one frame");
  if (!detail::all_finite(audio)) throw DataError("stft_forward: non-finite sample");

  const Index frames = stft_frame_count(n, cfg);
  const Index padded_len = (frames - 1) * cfg.hop + cfg.frame_size;
  const RVector win = cfg.analysis_window();
  Spectrogram spec(cfg, frames, audio.rows(), n);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(static_cast<std::size_t>(cfg.frame_size));
  std::vector<Complex> out;
  for (Index ch = 0; ch < audio.rows(); ++ch) {
    RVector padded = RVector::Zero(padded_len);
    padded.segment(cfg.pad(), n) = audio.row(ch).transpose();
    for (Index t = 0; t < frames; ++t) {
      for (Index k = 0; k < cfg.frame_size; ++k)
        buf[static_cast<std::size_t>(k)] = padded(t * cfg.hop + k) * win(k);
      fft.fwd(out, buf);
      for (Index b = 0; b < cfg.bins(); ++b) spec.at(b, t, ch) = out[static_cast<std::size_t>(b)];
    }
  }
  return spec;
}

// Weighted overlap-add over the padded time axis, without trimming.
inline RealMatrix overlap_add(const Spectrogram& spec) {
  const StftConfig& cfg = spec.config();
  cfg.validate();
  const Index padded_len = (spec.frames() - 1) * cfg.hop + cfg.frame_size;
  const RVector win = cfg.synthesis_window();
  const double gain = cfg.cola_gain();
  RealMatrix out = RealMatrix::Zero(spec.channels(), padded_len);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<Complex> half(static_cast<std::size_t>(cfg.bins()));
  std::vector<double> frame;
  for (Index ch = 0; ch < spec.channels(); ++ch) {
    for (Index t = 0; t < spec.frames(); ++t) {
      for (Index b = 0; b < cfg.bins(); ++b) half[static_cast<std::size_t>(b)] = spec.at(b, t, ch);
      half.front().imag(0.0);
      half.back().imag(0.0);
      fft.inv(frame, half, cfg.frame_size);
      for (Index k = 0; k < cfg.frame_size; ++k)
        out(ch, t * cfg.hop + k) += frame[static_cast<std::size_t>(k)] * win(k) / gain;
    }
  }
  return out;
}

inline RealMatrix istft_inverse(const Spectrogram& spec) {
  const RealMatrix full = overlap_add(spec);
  const Index pad = spec.config().pad();
  const Index n = spec.num_samples() > 0 ? spec.num_samples() : full.cols() - 2 * pad;
  if (pad + n > full.cols()) throw ShapeError("istft_inverse: spectrogram too short for its sample count");
  return full.middleCols(pad, n);
}

}  // namespace segbeam
