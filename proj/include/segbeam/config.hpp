#pragma once

// Run configuration and its INI-style text form.
//
//   [scene]       duration_s, sample_rate, seed, noise_level_db (dB or "none"),
//                 reference_index
//   [array]       type = circular | linear | explicit
//                 circular: count, radius, center = x,y,z
//                 linear:   count, spacing, origin = x,y,z, axis = x,y,z
//                 explicit: positions = x,y,z; x,y,z; ...
//                 sound_speed
//   [target]      signal = speech|white|tone|file, level_db, position = x,y,z,
//                 tone_hz, file
//   [interferer.N] signal, level_db, tone_hz, file,
//                 segments = t0:x,y,z; t1:x,y,z; ...   (t in seconds, t0 = 0)
//   [input]       mixture = PATH.wav, reference = PATH.wav, changes = PATH.txt
//                 (file mode; mutually exclusive with [scene])
//   [stft]        frame_size, hop, window = sqrt-hann|hann|rect
//   [segmenter]   c_rel, penalty_c, tau, max_window (integer or "none"),
//                 delta, delta_rel
//   [run]         windows = 20,70,...; rtf = oracle|estimate|sidecar:PATH;
//                 rtf_frames, rtf_target_interval = a:b, rtf_noise_interval = a:b
//                 (seconds), out, threads, cp_tolerance, verbose_partitions,
//                 write_audio
//   [sweep]       c_values = 1,2,4; tau_values = 4,8
//
// Lines starting with '#' or ';' are comments.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "segbeam/scene.hpp"
#include "segbeam/stft.hpp"

namespace segbeam {

struct RtfSource {
  enum class Kind { Oracle, Estimate, Sidecar };
  Kind kind = Kind::Oracle;
  std::string path;
};

inline RtfSource parse_rtf_source(const std::string& s) {
  if (s == "oracle") return {RtfSource::Kind::Oracle, {}};
  if (s == "estimate") return {RtfSource::Kind::Estimate, {}};
  if (s.rfind("sidecar:", 0) == 0 && s.size() > 8) return {RtfSource::Kind::Sidecar, s.substr(8)};
  throw ParameterError("run.rtf: expected oracle | estimate | sidecar:PATH, got '" + s + "'");
}

struct TimeInterval {
  double begin_s = 0.0;
  double end_s = 0.0;
};

struct RunConfig {
  std::optional<SceneSpec> scene;  // synthetic mode
  std::string input_wav;           // file mode
  std::string reference_wav;       // optional clean target image for SI-SDR
  std::string changes_path;        // optional true change points (samples)

  StftConfig stft;

  double c_rel = 2.0;
  std::optional<double> penalty_c;
  Index tau = 8;
  std::optional<Index> max_window = 200;
  std::optional<double> delta;
  double delta_rel = 1.0;

  std::vector<Index> windows{20, 70, 120, 200, 400, 1200};
  RtfSource rtf;
  Index rtf_frames = 128;
  std::optional<TimeInterval> rtf_target_interval;
  std::optional<TimeInterval> rtf_noise_interval;

  std::string output_dir = "out";
  std::optional<std::uint64_t> seed;
  Index threads = 0;  // 0: SEGBEAM_THREADS or hardware concurrency
  std::optional<Index> cp_tolerance;  // frames; default tau + 10
  bool verbose_partitions = false;
  bool write_audio = true;

  std::vector<double> sweep_c;
  std::vector<Index> sweep_tau;

  bool synthetic() const { return scene.has_value(); }

  void validate() const {
    if (scene.has_value() == !input_wav.empty())
      throw ParameterError("config: select exactly one input mode ([scene] or input.mixture)");
    stft.validate();
    if (!(c_rel >= 0.0)) throw ParameterError("segmenter.c_rel must be >= 0");
    if (penalty_c && !(*penalty_c >= 0.0)) throw ParameterError("segmenter.penalty_c must be >= 0");
    if (tau < 0) throw ParameterError("segmenter.tau must be >= 0");
    if (max_window && (*max_window < 1 || *max_window <= tau))
      throw ParameterError("segmenter.max_window must be > tau");
    if (delta && !(*delta > 0.0)) throw ParameterError("segmenter.delta must be positive");
    if (!(delta_rel > 0.0)) throw ParameterError("segmenter.delta_rel must be positive");
    for (Index k : windows)
      if (k < 1) throw ParameterError("run.windows: every window must be >= 1");
    if (rtf_frames < 1) throw ParameterError("run.rtf_frames must be >= 1");
    if (!synthetic() && rtf.kind == RtfSource::Kind::Oracle)
      throw ParameterError(
          "run.rtf: no steering source for file input; use --rtf sidecar:PATH or --rtf estimate with "
          "run.rtf_target_interval and run.rtf_noise_interval");
    if (!synthetic() && rtf.kind == RtfSource::Kind::Estimate && (!rtf_target_interval || !rtf_noise_interval))
      throw ParameterError("run.rtf = estimate on file input needs rtf_target_interval and rtf_noise_interval");
    if (scene) scene->validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (trim(s.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw ParameterError(field + ": expected a number, got '" + s + "'");
}

inline Index parse_index(const std::string& s, const std::string& field) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (trim(s.substr(used)).empty()) return static_cast<Index>(v);
  } catch (const std::exception&) {
  }
  throw ParameterError(field + ": expected an integer, got '" + s + "'");
}

inline bool parse_bool(const std::string& s, const std::string& field) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ParameterError(field + ": expected true/false, got '" + s + "'");
}

inline Vec3 parse_vec3(const std::string& s, const std::string& field) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) throw ParameterError(field + ": expected x,y,z, got '" + s + "'");
  return {parse_double(parts[0], field), parse_double(parts[1], field), parse_double(parts[2], field)};
}

inline TimeInterval parse_interval(const std::string& s, const std::string& field) {
  const auto parts = split(s, ':');
  if (parts.size() != 2) throw ParameterError(field + ": expected begin:end seconds");
  TimeInterval t{parse_double(parts[0], field), parse_double(parts[1], field)};
  if (!(t.end_s > t.begin_s) || t.begin_s < 0.0) throw ParameterError(field + ": need 0 <= begin < end");
  return t;
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& s, const std::string& field, F&& one) {
  std::vector<T> out;
  for (const auto& part : split(s, ',')) out.push_back(one(part, field));
  if (out.empty()) throw ParameterError(field + ": empty list");
  return out;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_vec3(const Vec3& v) { return fmt(v.x()) + "," + fmt(v.y()) + "," + fmt(v.z()); }

using Section = boost::property_tree::ptree;

inline std::optional<std::string> get(const Section& sec, const std::string& key) {
  if (auto v = sec.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0')))
    return trim(*v);
  return std::nullopt;
}

inline SourceTrack parse_source(const Section& sec, const std::string& name, double fs, bool is_target) {
  SourceTrack src;
  if (auto v = get(sec, "signal")) src.signal = parse_signal_kind(*v, name + ".signal");
  if (auto v = get(sec, "level_db")) src.level_db = parse_double(*v, name + ".level_db");
  if (auto v = get(sec, "tone_hz")) src.tone_hz = parse_double(*v, name + ".tone_hz");
  if (auto v = get(sec, "file")) src.file_path = *v;
  if (is_target) {
    auto pos = get(sec, "position");
    if (!pos) throw ParameterError(name + ".position is required");
    src.segments.push_back({0, parse_vec3(*pos, name + ".position")});
  } else {
    auto segs = get(sec, "segments");
    if (!segs) {
      if (auto pos = get(sec, "position")) segs = "0:" + *pos;
    }
    if (!segs) throw ParameterError(name + ".segments is required");
    for (const auto& item : split(*segs, ';')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw ParameterError(name + ".segments: expected t:x,y,z items");
      const double t = parse_double(item.substr(0, colon), name + ".segments");
      src.segments.push_back(
          {static_cast<Index>(std::llround(t * fs)), parse_vec3(item.substr(colon + 1), name + ".segments")});
    }
  }
  return src;
}

inline ArrayGeometry parse_array(const Section& sec) {
  const std::string type = get(sec, "type").value_or("circular");
  ArrayGeometry g;
  if (type == "circular") {
    const Index count = parse_index(get(sec, "count").value_or("6"), "array.count");
    const double radius = parse_double(get(sec, "radius").value_or("0.1"), "array.radius");
    const Vec3 centre = parse_vec3(get(sec, "center").value_or("0,0,0"), "array.center");
    g = ArrayGeometry::circular(count, radius, centre);
  } else if (type == "linear") {
    const Index count = parse_index(get(sec, "count").value_or("4"), "array.count");
    const double spacing = parse_double(get(sec, "spacing").value_or("0.05"), "array.spacing");
    const Vec3 origin = parse_vec3(get(sec, "origin").value_or("0,0,0"), "array.origin");
    const Vec3 axis = parse_vec3(get(sec, "axis").value_or("1,0,0"), "array.axis");
    if (axis.norm() == 0.0) throw ParameterError("array.axis must be nonzero");
    g = ArrayGeometry::linear(count, spacing, origin, axis);
  } else if (type == "explicit") {
    auto pos = get(sec, "positions");
    if (!pos) throw ParameterError("array.positions is required for type = explicit");
    for (const auto& p : split(*pos, ';')) g.positions.push_back(parse_vec3(p, "array.positions"));
  } else {
    throw ParameterError("array.type: expected circular | linear | explicit, got '" + type + "'");
  }
  if (auto v = get(sec, "sound_speed")) g.sound_speed = parse_double(*v, "array.sound_speed");
  g.validate();
  return g;
}

}  // namespace detail

inline RunConfig parse_run_config(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  // The INI reader drops sections with no keys, but an empty [scene] still
  // selects synthetic mode with every default.
  std::vector<std::string> headers;
  {
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      const auto b = line.find_first_not_of(" \t\r");
      const auto e = line.find_last_not_of(" \t\r");
      if (b != std::string::npos && line[b] == '[' && line[e] == ']') headers.push_back(line.substr(b + 1, e - b - 1));
    }
  }
  boost::property_tree::ptree pt;
  try {
    std::istringstream body(text);
    boost::property_tree::ini_parser::read_ini(body, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  using detail::get;
  RunConfig cfg;
  const detail::Section empty;
  auto section = [&](const std::string& name) -> const detail::Section& {
    for (const auto& [key, child] : pt)
      if (key == name) return child;
    return empty;
  };
  auto has = [&](const std::string& name) { return std::find(headers.begin(), headers.end(), name) != headers.end(); };

  for (const auto& key : headers) {
    static const char* known[] = {"scene", "array", "target", "input", "stft", "segmenter", "run", "sweep"};
    bool ok = key.rfind("interferer.", 0) == 0;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ParameterError("config: unknown section [" + key + "]");
  }

  if (has("scene")) {
    const auto& sc = section("scene");
    SceneSpec spec;
    if (auto v = get(sc, "duration_s")) spec.duration_s = detail::parse_double(*v, "scene.duration_s");
    if (auto v = get(sc, "sample_rate")) spec.sample_rate = detail::parse_double(*v, "scene.sample_rate");
    if (auto v = get(sc, "seed")) spec.seed = static_cast<std::uint64_t>(detail::parse_index(*v, "scene.seed"));
    if (auto v = get(sc, "reference_index")) spec.reference_index = detail::parse_index(*v, "scene.reference_index");
    if (auto v = get(sc, "noise_level_db")) {
      if (*v == "none") {
        spec.noise_level_db.reset();
      } else {
        spec.noise_level_db = detail::parse_double(*v, "scene.noise_level_db");
      }
    }
    if (!has("array")) throw ParameterError("config: [scene] needs an [array] section");
    spec.geometry = detail::parse_array(section("array"));
    if (!has("target")) throw ParameterError("config: [scene] needs a [target] section");
    spec.target = detail::parse_source(section("target"), "target", spec.sample_rate, true);
    for (const auto& [key, child] : pt)
      if (key.rfind("interferer.", 0) == 0)
        spec.interferers.push_back(detail::parse_source(child, key, spec.sample_rate, false));
    cfg.scene = spec;
    cfg.stft.sample_rate = spec.sample_rate;
  }
  if (has("input")) {
    const auto& s = section("input");
    cfg.input_wav = get(s, "mixture").value_or("");
    cfg.reference_wav = get(s, "reference").value_or("");
    cfg.changes_path = get(s, "changes").value_or("");
  }
  if (has("stft")) {
    const auto& s = section("stft");
    if (auto v = get(s, "frame_size")) cfg.stft.frame_size = detail::parse_index(*v, "stft.frame_size");
    if (auto v = get(s, "hop")) cfg.stft.hop = detail::parse_index(*v, "stft.hop");
    if (auto v = get(s, "window")) cfg.stft.window = parse_window(*v);
  }
  if (has("segmenter")) {
    const auto& s = section("segmenter");
    if (auto v = get(s, "c_rel")) cfg.c_rel = detail::parse_double(*v, "segmenter.c_rel");
    if (auto v = get(s, "penalty_c")) cfg.penalty_c = detail::parse_double(*v, "segmenter.penalty_c");
    if (auto v = get(s, "tau")) cfg.tau = detail::parse_index(*v, "segmenter.tau");
    if (auto v = get(s, "max_window")) {
      if (*v == "none") {
        cfg.max_window.reset();
      } else {
        cfg.max_window = detail::parse_index(*v, "segmenter.max_window");
      }
    }
    if (auto v = get(s, "delta")) cfg.delta = detail::parse_double(*v, "segmenter.delta");
    if (auto v = get(s, "delta_rel")) cfg.delta_rel = detail::parse_double(*v, "segmenter.delta_rel");
  }
  if (has("run")) {
    const auto& s = section("run");
    if (auto v = get(s, "windows")) cfg.windows = detail::parse_list<Index>(*v, "run.windows", detail::parse_index);
    if (auto v = get(s, "rtf")) cfg.rtf = parse_rtf_source(*v);
    if (auto v = get(s, "rtf_frames")) cfg.rtf_frames = detail::parse_index(*v, "run.rtf_frames");
    if (auto v = get(s, "rtf_target_interval"))
      cfg.rtf_target_interval = detail::parse_interval(*v, "run.rtf_target_interval");
    if (auto v = get(s, "rtf_noise_interval"))
      cfg.rtf_noise_interval = detail::parse_interval(*v, "run.rtf_noise_interval");
    if (auto v = get(s, "out")) cfg.output_dir = *v;
    if (auto v = get(s, "threads")) cfg.threads = detail::parse_index(*v, "run.threads");
    if (auto v = get(s, "cp_tolerance")) cfg.cp_tolerance = detail::parse_index(*v, "run.cp_tolerance");
    if (auto v = get(s, "verbose_partitions"))
      cfg.verbose_partitions = detail::parse_bool(*v, "run.verbose_partitions");
    if (auto v = get(s, "write_audio")) cfg.write_audio = detail::parse_bool(*v, "run.write_audio");
    if (auto v = get(s, "seed")) cfg.seed = static_cast<std::uint64_t>(detail::parse_index(*v, "run.seed"));
  }
  if (has("sweep")) {
    const auto& s = section("sweep");
    if (auto v = get(s, "c_values")) cfg.sweep_c = detail::parse_list<double>(*v, "sweep.c_values", detail::parse_double);
    if (auto v = get(s, "tau_values"))
      cfg.sweep_tau = detail::parse_list<Index>(*v, "sweep.tau_values", detail::parse_index);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParameterError("config: cannot open '" + path + "'");
  return parse_run_config(f);
}

// Scene sections ([scene], [array], [target], [interferer.N]) with the array
// written as explicit positions.
inline std::string scene_config_text(const SceneSpec& spec) {
  using detail::fmt;
  std::ostringstream o;
  o << "[scene]\n";
  o << "duration_s = " << fmt(spec.duration_s) << '\n';
  o << "sample_rate = " << fmt(spec.sample_rate) << '\n';
  o << "seed = " << spec.seed << '\n';
  o << "reference_index = " << spec.reference_index << '\n';
  o << "noise_level_db = " << (spec.noise_level_db ? fmt(*spec.noise_level_db) : std::string("none")) << "\n\n";
  o << "[array]\ntype = explicit\nsound_speed = " << fmt(spec.geometry.sound_speed) << "\npositions = ";
  for (std::size_t i = 0; i < spec.geometry.positions.size(); ++i)
    o << (i ? "; " : "") << detail::fmt_vec3(spec.geometry.positions[i]);
  o << "\n\n";
  auto source = [&](const SourceTrack& s) {
    o << "signal = " << to_string(s.signal) << '\n';
    o << "level_db = " << fmt(s.level_db) << '\n';
    if (s.signal == SignalKind::Tone) o << "tone_hz = " << fmt(s.tone_hz) << '\n';
    if (s.signal == SignalKind::File) o << "file = " << s.file_path << '\n';
  };
  o << "[target]\n";
  source(spec.target);
  o << "position = " << detail::fmt_vec3(spec.target.segments.front().position) << "\n\n";
  for (std::size_t i = 0; i < spec.interferers.size(); ++i) {
    const auto& s = spec.interferers[i];
    o << "[interferer." << (i + 1) << "]\n";
    source(s);
    o << "segments = ";
    for (std::size_t j = 0; j < s.segments.size(); ++j)
      o << (j ? "; " : "") << fmt(static_cast<double>(s.segments[j].start_sample) / spec.sample_rate) << ':'
        << detail::fmt_vec3(s.segments[j].position);
    o << "\n\n";
  }
  return o.str();
}

}  // namespace segbeam
