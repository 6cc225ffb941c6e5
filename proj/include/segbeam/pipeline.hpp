#pragma once

// The simulate / beamform / sweep commands as library calls. The CLI in
// tools/ only parses arguments and maps exceptions to exit codes.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "segbeam/config.hpp"
#include "segbeam/metrics.hpp"
#include "segbeam/rtf.hpp"
#include "segbeam/scene.hpp"
#include "segbeam/segmenter.hpp"
#include "segbeam/stft.hpp"
#include "segbeam/wav.hpp"

namespace segbeam {

// 40 s at 16 kHz, 5-mic circular array (radius 0.2 m), speech-like target at
// (6, 2, 1.5). Three white-noise interferers, 20 dB above the target, jump
// together every 4 s; each jump turns at least 90 degrees in azimuth and no
// interferer comes within 30 degrees of the target direction.
inline SceneSpec demo_scene(std::uint64_t seed = 1, std::uint64_t position_seed = 0x5EED) {
  SceneSpec s;
  s.duration_s = 40.0;
  s.sample_rate = 16000.0;
  s.seed = seed;
  s.reference_index = 0;
  s.noise_level_db = -30.0;
  s.geometry = ArrayGeometry::circular(5, 0.2, Vec3(3.0, 3.0, 1.5));
  s.target.signal = SignalKind::SpeechLike;
  s.target.level_db = 0.0;
  s.target.segments = {{0, Vec3(6.0, 2.0, 1.5)}};

  std::mt19937_64 rng(position_seed);  // positions are part of the scene, not of the seed
  constexpr double kPi = 3.14159265358979323846;
  std::uniform_real_distribution<double> start_angle(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> jump(0.5 * kPi, 1.5 * kPi);
  std::uniform_real_distribution<double> range(2.0, 3.5);
  const Vec3 centre(3.0, 3.0, 1.5);
  const Vec3 to_target = s.target.segments.front().position - centre;
  const double target_az = std::atan2(to_target.y(), to_target.x());
  const Index hop = static_cast<Index>(std::llround(4.0 * s.sample_rate));
  for (int k = 0; k < 3; ++k) {
    SourceTrack src;
    src.signal = SignalKind::WhiteNoise;
    src.level_db = 20.0;
    // Azimuths relative to the target; a draw within 30 degrees of it is
    // rejected and redrawn from the same previous azimuth.
    auto near_target = [&](double a) { return std::abs(std::remainder(a, 2.0 * kPi)) < kPi / 6.0; };
    double a = start_angle(rng);
    while (near_target(a)) a = start_angle(rng);
    for (Index start = 0; start < s.num_samples(); start += hop) {
      const double r = range(rng);
      const double az = a + target_az;
      src.segments.push_back({start, centre + Vec3(r * std::cos(az), r * std::sin(az), 0.0)});
      const double from = a;
      do a = from + jump(rng);
      while (near_target(a));
    }
    s.interferers.push_back(src);
  }
  return s;
}

inline RunConfig demo_config() {
  RunConfig cfg;
  cfg.scene = demo_scene();
  return cfg;
}

namespace detail {

inline Index resolve_threads(Index requested) {
  Index n = requested;
  if (n <= 0) {
    n = static_cast<Index>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("SEGBEAM_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && v >= 1) n = std::min<Index>(n, v);
    }
  }
  return std::max<Index>(1, n);
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
// exception thrown by any item is rethrown after all workers stop.
template <typename F>
void parallel_for(Index count, Index threads, F&& fn) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const Index i = next.fetch_add(1);
      if (i >= count || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (Index t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline Index seconds_to_frame(double s, double fs, const StftConfig& stft, Index frames) {
  return std::clamp<Index>(sample_to_frame(static_cast<Index>(std::llround(s * fs)), stft), 0, frames);
}

}  // namespace detail

// Everything the beamformers need, independent of method.
struct PreparedInput {
  Spectrogram spec;
  RealMatrix mixture;
  std::vector<double> reference;  // clean target image at the reference channel; empty if unknown
  std::vector<Index> true_changes;       // samples
  std::vector<Index> true_change_frames;  // frames
  RtfEstimate steering;
  Index reference_index = 0;
  double sample_rate = 0.0;
};

inline PreparedInput prepare_input(const RunConfig& cfg) {
  cfg.validate();
  StftConfig stft = cfg.stft;
  PreparedInput in{Spectrogram(stft, 0, 1, 0), {}, {}, {}, {}, {}, 0, 0.0};
  RealMatrix noise_only;  // synthetic mode: interference + noise, for RTF estimation

  if (cfg.synthetic()) {
    SceneSpec spec = *cfg.scene;
    if (cfg.seed) spec.seed = *cfg.seed;
    stft.sample_rate = spec.sample_rate;
    const SceneOutput scene = render_scene(spec, stft.frame_size);
    in.mixture = scene.mixture;
    in.reference.assign(scene.target_image.row(scene.reference_index).begin(),
                        scene.target_image.row(scene.reference_index).end());
    in.true_changes = scene.true_changes;
    in.reference_index = scene.reference_index;
    in.sample_rate = spec.sample_rate;
    if (cfg.rtf.kind == RtfSource::Kind::Oracle) {
      in.steering.nu_per_bin = scene.true_steering;
      in.steering.reference_index = scene.reference_index;
      in.steering.flags.assign(static_cast<std::size_t>(scene.true_steering.rows()), false);
    }
    noise_only = scene.interference_image + scene.noise;
  } else {
    const AudioBuffer audio = read_wav(cfg.input_wav);
    in.mixture = audio.samples;
    in.sample_rate = audio.sample_rate;
    stft.sample_rate = audio.sample_rate;
    if (!cfg.changes_path.empty()) in.true_changes = read_change_points(cfg.changes_path);
  }

  if (cfg.rtf.kind == RtfSource::Kind::Sidecar) {
    in.steering = read_rtf_sidecar(cfg.rtf.path);
    in.reference_index = in.steering.reference_index;
  }
  if (in.mixture.cols() < stft.frame_size)
    throw DataError("input is shorter than one STFT frame (" + std::to_string(stft.frame_size) + " samples)");

  in.spec = stft_forward(in.mixture, stft);

  if (cfg.rtf.kind == RtfSource::Kind::Estimate) {
    if (cfg.synthetic()) {
      // Oracle interval: the first rtf_frames frames of the mixture against
      // the same frames with the target removed.
      const Spectrogram noise_spec = stft_forward(noise_only, stft);
      const Index end = std::min(cfg.rtf_frames, in.spec.frames());
      in.steering = estimate_rtf_cw(in.spec, noise_spec, in.reference_index, {}, {0, end}, {0, end});
    } else {
      const Index f = in.spec.frames();
      const FrameRange noisy{detail::seconds_to_frame(cfg.rtf_target_interval->begin_s, in.sample_rate, stft, f),
                             detail::seconds_to_frame(cfg.rtf_target_interval->end_s, in.sample_rate, stft, f)};
      const FrameRange noise{detail::seconds_to_frame(cfg.rtf_noise_interval->begin_s, in.sample_rate, stft, f),
                             detail::seconds_to_frame(cfg.rtf_noise_interval->end_s, in.sample_rate, stft, f)};
      in.steering = estimate_rtf_cw(in.spec, in.spec, in.reference_index, {}, noisy, noise);
    }
  }

  if (in.steering.bins() != in.spec.bins() || in.steering.channels() != in.spec.channels())
    throw DataError("steering has " + std::to_string(in.steering.bins()) + " bins x " +
                    std::to_string(in.steering.channels()) + " channels; input needs " +
                    std::to_string(in.spec.bins()) + " x " + std::to_string(in.spec.channels()));

  if (!cfg.reference_wav.empty()) {
    const AudioBuffer ref = read_wav(cfg.reference_wav);
    if (ref.length() != in.mixture.cols()) throw DataError("reference WAV length differs from the mixture");
    const Index ch = ref.channels() == 1 ? 0 : in.reference_index;
    if (ch >= ref.channels()) throw DataError("reference WAV lacks the reference channel");
    in.reference.assign(ref.samples.row(ch).begin(), ref.samples.row(ch).end());
  }
  for (Index s : in.true_changes) in.true_change_frames.push_back(sample_to_frame(s, stft));
  return in;
}

struct BinSettings {
  double delta = 0.0;
  double penalty = 0.0;
};

struct SegmentedRun {
  std::vector<std::vector<Complex>> outputs;  // per bin
  std::vector<std::vector<Index>> partitions;
  std::vector<BinSettings> settings;
  Index candidate_updates = 0;
  double max_constraint_error = 0.0;
};

inline double bin_delta(const RunConfig& cfg, const CMatrix& x) {
  return cfg.delta ? *cfg.delta : default_delta(x, cfg.delta_rel);
}

inline SegmentedRun run_segmented(const PreparedInput& in, const RunConfig& cfg, double c_rel, Index tau) {
  const Index bins = in.spec.bins();
  SegmentedRun run;
  run.outputs.resize(static_cast<std::size_t>(bins));
  run.partitions.resize(static_cast<std::size_t>(bins));
  run.settings.resize(static_cast<std::size_t>(bins));
  std::vector<Index> updates(static_cast<std::size_t>(bins), 0);
  std::vector<double> errors(static_cast<std::size_t>(bins), 0.0);

  detail::parallel_for(bins, detail::resolve_threads(cfg.threads), [&](Index b) {
    const auto i = static_cast<std::size_t>(b);
    const CMatrix x = in.spec.bin_snapshots(b);
    const SteeringVector nu = in.steering.steering(b);
    SegmenterConfig sc;
    sc.delta = bin_delta(cfg, x);
    sc.penalty_c = cfg.penalty_c ? *cfg.penalty_c : default_penalty(x, nu, sc.delta, c_rel);
    sc.tau = tau;
    sc.max_window = cfg.max_window;
    OnlineResult r = run_online(x, nu, sc);
    run.outputs[i] = std::move(r.outputs);
    run.partitions[i] = std::move(r.partition);
    run.settings[i] = {sc.delta, sc.penalty_c};
    updates[i] = r.candidate_updates;
    errors[i] = r.max_constraint_error;
  });
  for (std::size_t i = 0; i < updates.size(); ++i) {
    run.candidate_updates += updates[i];
    run.max_constraint_error = std::max(run.max_constraint_error, errors[i]);
  }
  return run;
}

inline std::vector<std::vector<Complex>> run_fixed(const PreparedInput& in, const RunConfig& cfg, Index window_k) {
  const Index bins = in.spec.bins();
  std::vector<std::vector<Complex>> out(static_cast<std::size_t>(bins));
  detail::parallel_for(bins, detail::resolve_threads(cfg.threads), [&](Index b) {
    const CMatrix x = in.spec.bin_snapshots(b);
    out[static_cast<std::size_t>(b)] = fixed_window_mpdr(x, in.steering.steering(b), window_k, bin_delta(cfg, x));
  });
  return out;
}

inline RealMatrix synthesize(const PreparedInput& in, const std::vector<std::vector<Complex>>& outputs) {
  Spectrogram y(in.spec.config(), in.spec.frames(), 1, in.spec.num_samples());
  for (Index b = 0; b < in.spec.bins(); ++b) y.set_bin_channel(b, 0, outputs[static_cast<std::size_t>(b)]);
  return istft_inverse(y);
}

// Evaluation skips one frame length at each end.
inline std::pair<Index, Index> evaluation_range(const PreparedInput& in) {
  const Index n = in.mixture.cols();
  const Index edge = in.spec.config().frame_size;
  if (n > 4 * edge) return {edge, n - edge};
  return {0, n};
}

inline MetricsReport evaluate(const PreparedInput& in, const RealMatrix& enhanced,
                              const std::vector<std::vector<Complex>>& outputs) {
  MetricsReport r;
  if (!in.reference.empty()) {
    const auto [a, b] = evaluation_range(in);
    const std::span<const double> ref(in.reference.data() + a, static_cast<std::size_t>(b - a));
    std::vector<double> est(enhanced.row(0).begin() + a, enhanced.row(0).begin() + b);
    std::vector<double> raw(in.mixture.row(in.reference_index).begin() + a,
                            in.mixture.row(in.reference_index).begin() + b);
    r.si_sdr_db = si_sdr(est, ref);
    r.si_sdr_gain_db = r.si_sdr_db - si_sdr(raw, ref);
  } else {
    r.si_sdr_db = std::numeric_limits<double>::quiet_NaN();
    r.si_sdr_gain_db = std::numeric_limits<double>::quiet_NaN();
  }
  double power = 0.0;
  std::size_t count = 0;
  for (const auto& bin : outputs) {
    for (const Complex& y : bin) power += std::norm(y);
    count += bin.size();
  }
  r.mean_output_power_db = power_db(count ? power / static_cast<double>(count) : 0.0);
  return r;
}

inline Index cp_tolerance(const RunConfig& cfg, Index tau) { return cfg.cp_tolerance ? *cfg.cp_tolerance : tau + 10; }

// Change-point scores averaged over bins.
inline void score_partitions(const PreparedInput& in, const SegmentedRun& run, Index tolerance, MetricsReport& r) {
  if (in.true_changes.empty() && in.reference.empty()) return;
  double precision = 0.0, recall = 0.0, latency = 0.0;
  Index with_matches = 0;
  for (const auto& part : run.partitions) {
    const std::vector<Index> detected(part.begin() + 1, part.end());
    const ChangePointScore s = change_point_score(detected, in.true_change_frames, tolerance);
    precision += s.precision;
    recall += s.recall;
    if (s.matched > 0) {
      latency += s.mean_latency;
      ++with_matches;
    }
  }
  const auto bins = static_cast<double>(run.partitions.size());
  r.cp_precision = precision / bins;
  r.cp_recall = recall / bins;
  r.cp_mean_latency_frames = with_matches ? latency / static_cast<double>(with_matches) : 0.0;
}

inline MetricsReport segmented_report(const PreparedInput& in, const RunConfig& cfg, const SegmentedRun& run,
                                      const RealMatrix& enhanced, double c_rel, Index tau) {
  MetricsReport r = evaluate(in, enhanced, run.outputs);
  r.method = "segmented";
  r.window_k = 0;
  r.c_rel = cfg.penalty_c ? 0.0 : c_rel;
  r.tau = tau;
  score_partitions(in, run, cp_tolerance(cfg, tau), r);
  return r;
}

struct BeamformResult {
  std::vector<MetricsReport> reports;  // segmented first, then windows in order
  Index candidate_updates = 0;
  double max_constraint_error = 0.0;
  std::vector<std::vector<Index>> partitions;
  std::vector<Index> true_change_frames;
};

inline std::string partition_summary(const std::vector<std::vector<Index>>& partitions,
                                     const std::vector<Index>& truth, Index tolerance) {
  std::ostringstream o;
  o << "# bins " << partitions.size() << " tolerance_frames " << tolerance << '\n';
  o << "# true_change_frame bins_detected median_detected_frame\n";
  for (Index t : truth) {
    std::vector<Index> hits;
    for (const auto& part : partitions) {
      std::optional<Index> nearest;
      for (std::size_t j = 1; j < part.size(); ++j) {
        const Index d = part[j] - t;
        if (std::abs(d) <= tolerance && (!nearest || std::abs(d) < std::abs(*nearest - t))) nearest = part[j];
      }
      if (nearest) hits.push_back(*nearest);
    }
    o << t << ' ' << hits.size() << ' ';
    if (hits.empty()) {
      o << "NA\n";
    } else {
      std::sort(hits.begin(), hits.end());
      o << hits[hits.size() / 2] << '\n';
    }
  }
  o << "# bin changes\n";
  for (std::size_t b = 0; b < partitions.size(); ++b) o << b << ' ' << partitions[b].size() - 1 << '\n';
  return o.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_mono(const RealMatrix& x, double fs, const std::filesystem::path& path) {
  write_wav(AudioBuffer{x, fs}, path.string(), WavFormat::Float32);
}

inline std::filesystem::path make_output_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

inline BeamformResult cmd_beamform(const RunConfig& cfg) {
  const PreparedInput in = prepare_input(cfg);
  const auto out = make_output_dir(cfg.output_dir);
  BeamformResult res;
  res.true_change_frames = in.true_change_frames;

  {
    SegmentedRun run = run_segmented(in, cfg, cfg.c_rel, cfg.tau);
    const RealMatrix y = synthesize(in, run.outputs);
    res.reports.push_back(segmented_report(in, cfg, run, y, cfg.c_rel, cfg.tau));
    if (cfg.write_audio) write_mono(y, in.sample_rate, out / "enhanced_segmented.wav");
    res.candidate_updates = run.candidate_updates;
    res.max_constraint_error = run.max_constraint_error;
    res.partitions = std::move(run.partitions);
  }
  for (Index k : cfg.windows) {
    const auto outputs = run_fixed(in, cfg, k);
    const RealMatrix y = synthesize(in, outputs);
    MetricsReport r = evaluate(in, y, outputs);
    r.method = "fixed";
    r.window_k = k;
    res.reports.push_back(r);
    if (cfg.write_audio) write_mono(y, in.sample_rate, out / ("enhanced_fixed_" + std::to_string(k) + ".wav"));
  }

  std::string csv = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& r : res.reports) csv += to_csv_row(r) + "\n";
  write_text(out / "metrics.csv", csv);

  const Index tol = cp_tolerance(cfg, cfg.tau);
  write_text(out / "partitions.txt", partition_summary(res.partitions, in.true_change_frames, tol));
  if (cfg.verbose_partitions) {
    std::ostringstream o;
    o << "# bin: start frames of every segment\n";
    for (std::size_t b = 0; b < res.partitions.size(); ++b) {
      o << b << ':';
      for (Index s : res.partitions[b]) o << ' ' << s;
      o << '\n';
    }
    write_text(out / "partitions_full.txt", o.str());
  }
  std::ostringstream diag;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", res.max_constraint_error);
  diag << "candidate_updates " << res.candidate_updates << "\nmax_constraint_error " << buf << '\n';
  write_text(out / "diagnostics.txt", diag.str());
  return res;
}

struct SimulateResult {
  std::vector<std::filesystem::path> files;
  std::vector<Index> true_changes;
};

// Writes mixture.wav, target_image.wav, changes.txt (samples) and
// steering.rtf (ground-truth target RTF for the configured STFT).
inline SimulateResult cmd_simulate(const RunConfig& cfg) {
  if (!cfg.synthetic()) throw ParameterError("simulate: config has no [scene]");
  SceneSpec spec = *cfg.scene;
  if (cfg.seed) spec.seed = *cfg.seed;
  cfg.stft.validate();
  const SceneOutput scene = render_scene(spec, cfg.stft.frame_size);
  const auto out = make_output_dir(cfg.output_dir);
  SimulateResult res;
  res.true_changes = scene.true_changes;
  res.files = {out / "mixture.wav", out / "target_image.wav", out / "changes.txt", out / "steering.rtf"};
  write_wav(AudioBuffer{scene.mixture, spec.sample_rate}, res.files[0].string());
  write_wav(AudioBuffer{scene.target_image, spec.sample_rate}, res.files[1].string());
  write_change_points(scene.true_changes, res.files[2].string());
  RtfEstimate truth;
  truth.nu_per_bin = scene.true_steering;
  truth.reference_index = scene.reference_index;
  truth.flags.assign(static_cast<std::size_t>(scene.true_steering.rows()), false);
  write_rtf_sidecar(truth, res.files[3].string());
  return res;
}

struct SweepResult {
  Index rows_written = 0;
  Index rows_skipped = 0;
};

// Appends one segmented row per (c_rel, tau) to sweep.csv, skipping pairs
// already present so an interrupted sweep resumes where it stopped.
inline SweepResult cmd_sweep(const RunConfig& cfg) {
  const std::vector<double> cs = cfg.sweep_c.empty() ? std::vector<double>{cfg.c_rel} : cfg.sweep_c;
  const std::vector<Index> taus = cfg.sweep_tau.empty() ? std::vector<Index>{cfg.tau} : cfg.sweep_tau;
  const auto out = make_output_dir(cfg.output_dir);
  const auto path = out / "sweep.csv";

  std::set<std::pair<std::string, std::string>> done;
  bool have_header = false;
  bool needs_newline = false;  // a killed run can leave a partial last line
  if (std::ifstream f(path, std::ios::binary); f) {
    const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    needs_newline = !text.empty() && text.back() != '\n';
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      if (line == kMetricsCsvHeader) {
        have_header = true;
        continue;
      }
      std::vector<std::string> fields;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) fields.push_back(cell);
      if (fields.size() == 10) done.insert({fields[2], fields[3]});  // complete rows only
    }
  }

  std::ofstream f(path, std::ios::app);
  if (!f) throw IoError("cannot open '" + path.string() + "' for appending");
  if (needs_newline) f << '\n';
  if (!have_header) f << kMetricsCsvHeader << '\n' << std::flush;

  SweepResult res;
  std::optional<PreparedInput> in;
  for (double c : cs) {
    for (Index tau : taus) {
      if (cfg.max_window && tau >= *cfg.max_window) throw ParameterError("sweep: tau must be < max_window");
      const std::string key_c = format_number(cfg.penalty_c ? 0.0 : c);
      if (done.count({key_c, std::to_string(tau)})) {
        ++res.rows_skipped;
        continue;
      }
      if (!in) in = prepare_input(cfg);
      SegmentedRun run = run_segmented(*in, cfg, c, tau);
      const RealMatrix y = synthesize(*in, run.outputs);
      f << to_csv_row(segmented_report(*in, cfg, run, y, c, tau)) << '\n' << std::flush;
      if (!f) throw IoError("write failed for '" + path.string() + "'");
      done.insert({key_c, std::to_string(tau)});
      ++res.rows_written;
    }
  }
  return res;
}

}  // namespace segbeam
