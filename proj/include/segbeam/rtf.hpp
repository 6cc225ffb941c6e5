#pragma once

// Relative transfer function estimation by covariance whitening.
//
// Per bin: Rn = L L^H (Cholesky of the loaded noise covariance),
// Q = L^-1 Rx L^-H, q = principal eigenvector of Q, g = L q,
// nu = g / g[ref]. A bin is flagged when the relative eigengap
// (l1 - l2) / l1 is below the threshold, or when the noise covariance cannot
// be factored; flagged bins still carry a usable (possibly fallback) nu.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "segbeam/mvdr.hpp"
#include "segbeam/stft.hpp"

namespace segbeam {

struct RtfOptions {
  double eigengap_threshold = 0.1;
  double noise_loading = 1e-6;  // times trace(Rn)/p
};

struct BinRtf {
  CVector nu;
  bool flagged = false;
  double eigengap = 0.0;
};

struct RtfEstimate {
  CMatrix nu_per_bin;  // bins x p
  Index reference_index = 0;
  std::vector<bool> flags;

  Index bins() const { return nu_per_bin.rows(); }
  Index channels() const { return nu_per_bin.cols(); }
  SteeringVector steering(Index bin) const {
    return SteeringVector(nu_per_bin.row(bin).transpose(), reference_index);
  }
};

inline BinRtf rtf_from_covariances(const CMatrix& rx, const CMatrix& rn, Index reference_index,
                                   const RtfOptions& opt = {}) {
  const Index p = rx.rows();
  if (rx.cols() != p || rn.rows() != p || rn.cols() != p) throw ShapeError("rtf: covariance shape mismatch");
  if (reference_index < 0 || reference_index >= p) throw ParameterError("rtf: reference_index out of range");

  BinRtf out;
  out.nu = CVector::Zero(p);
  out.nu(reference_index) = 1.0;

  const double trace = rn.trace().real();
  if (!(trace > 0.0) || !std::isfinite(trace)) {
    out.flagged = true;
    return out;
  }
  const CMatrix loaded = rn + CMatrix::Identity(p, p) * (opt.noise_loading * trace / static_cast<double>(p));
  Eigen::LLT<CMatrix> llt(loaded);
  if (llt.info() != Eigen::Success) {
    out.flagged = true;
    return out;
  }
  const CMatrix l = llt.matrixL();
  const auto lower = l.triangularView<Eigen::Lower>();
  // Q = L^-1 Rx L^-H
  CMatrix tmp = lower.solve(rx);
  CMatrix q = lower.solve(tmp.adjoint()).adjoint();
  q = (0.5 * (q + q.adjoint())).eval();

  Eigen::SelfAdjointEigenSolver<CMatrix> eig(q);
  if (eig.info() != Eigen::Success) {
    out.flagged = true;
    return out;
  }
  const RVector& lambda = eig.eigenvalues();  // ascending
  const double l1 = lambda(p - 1);
  const double l2 = p > 1 ? lambda(p - 2) : 0.0;
  out.eigengap = l1 > 0.0 ? (l1 - l2) / l1 : 0.0;

  const CVector g = l * eig.eigenvectors().col(p - 1);
  if (std::abs(g(reference_index)) < 1e-300 || !(l1 > 0.0)) {
    out.flagged = true;
    return out;
  }
  out.nu = g / g(reference_index);
  out.nu(reference_index) = Complex(1.0, 0.0);
  out.flagged = out.eigengap < opt.eigengap_threshold;
  return out;
}

// Sample covariance (1/N sum x x^H) of frames [begin, end) of one bin.
inline CMatrix bin_covariance(const Spectrogram& spec, Index bin, Index begin, Index end) {
  const Index p = spec.channels();
  CMatrix r = CMatrix::Zero(p, p);
  CVector x(p);
  for (Index t = begin; t < end; ++t) {
    for (Index c = 0; c < p; ++c) x(c) = spec.at(bin, t, c);
    r.noalias() += x * x.adjoint();
  }
  return end > begin ? CMatrix(r / static_cast<double>(end - begin)) : r;
}

struct FrameRange {
  Index begin = 0;
  Index end = -1;  // -1: all frames
};

inline RtfEstimate estimate_rtf_cw(const Spectrogram& noisy, const Spectrogram& noise, Index reference_index,
                                   const RtfOptions& opt = {}, FrameRange noisy_frames = {},
                                   FrameRange noise_frames = {}) {
  const Index p = noisy.channels();
  if (noise.channels() != p) throw ShapeError("estimate_rtf_cw: channel count mismatch");
  if (noise.bins() != noisy.bins()) throw ShapeError("estimate_rtf_cw: bin count mismatch");
  auto resolve = [](FrameRange r, const Spectrogram& s) {
    if (r.end < 0) r.end = s.frames();
    if (r.begin < 0 || r.end > s.frames() || r.begin > r.end) throw ParameterError("estimate_rtf_cw: bad frame range");
    return r;
  };
  noisy_frames = resolve(noisy_frames, noisy);
  noise_frames = resolve(noise_frames, noise);
  if (noisy_frames.end - noisy_frames.begin < p || noise_frames.end - noise_frames.begin < p)
    throw DataError("estimate_rtf_cw: need at least " + std::to_string(p) + " frames in each segment");

  RtfEstimate est;
  est.reference_index = reference_index;
  est.nu_per_bin.resize(noisy.bins(), p);
  est.flags.resize(static_cast<std::size_t>(noisy.bins()));
  for (Index b = 0; b < noisy.bins(); ++b) {
    const BinRtf r = rtf_from_covariances(bin_covariance(noisy, b, noisy_frames.begin, noisy_frames.end),
                                          bin_covariance(noise, b, noise_frames.begin, noise_frames.end),
                                          reference_index, opt);
    est.nu_per_bin.row(b) = r.nu.transpose();
    est.flags[static_cast<std::size_t>(b)] = r.flagged;
  }
  return est;
}

// Text sidecar:
//   segbeam-rtf 1
//   bins <B> channels <P> reference <R>
//   <flag> <re_0> <im_0> ... <re_{P-1}> <im_{P-1}>     (B lines, bin order)
// Values are printed with 17 significant digits so they round-trip exactly.
inline void write_rtf_sidecar(const RtfEstimate& est, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "segbeam-rtf 1\n";
  f << "bins " << est.bins() << " channels " << est.channels() << " reference " << est.reference_index << '\n';
  char num[40];
  for (Index b = 0; b < est.bins(); ++b) {
    f << (est.flags[static_cast<std::size_t>(b)] ? 1 : 0);
    for (Index c = 0; c < est.channels(); ++c) {
      std::snprintf(num, sizeof num, " %.17g", est.nu_per_bin(b, c).real());
      f << num;
      std::snprintf(num, sizeof num, " %.17g", est.nu_per_bin(b, c).imag());
      f << num;
    }
    f << '\n';
  }
  if (!f) throw IoError("write failed for '" + path + "'");
}

inline RtfEstimate read_rtf_sidecar(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open RTF sidecar '" + path + "'");
  auto bad = [&](const std::string& what) { return DataError("RTF sidecar '" + path + "': " + what); };
  std::string magic;
  int version = 0;
  if (!(f >> magic >> version) || magic != "segbeam-rtf" || version != 1) throw bad("bad header");
  std::string kb, kc, kr;
  Index bins = 0, channels = 0, ref = 0;
  if (!(f >> kb >> bins >> kc >> channels >> kr >> ref) || kb != "bins" || kc != "channels" || kr != "reference")
    throw bad("bad dimensions line");
  if (bins < 1 || channels < 1 || ref < 0 || ref >= channels) throw bad("invalid dimensions");
  RtfEstimate est;
  est.reference_index = ref;
  est.nu_per_bin.resize(bins, channels);
  est.flags.resize(static_cast<std::size_t>(bins));
  for (Index b = 0; b < bins; ++b) {
    int flag = 0;
    if (!(f >> flag)) throw bad("truncated at bin " + std::to_string(b));
    est.flags[static_cast<std::size_t>(b)] = flag != 0;
    for (Index c = 0; c < channels; ++c) {
      double re = 0, im = 0;
      if (!(f >> re >> im)) throw bad("truncated at bin " + std::to_string(b));
      est.nu_per_bin(b, c) = Complex(re, im);
    }
  }
  return est;
}

}  // namespace segbeam
