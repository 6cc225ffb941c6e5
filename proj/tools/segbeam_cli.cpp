// segbeam: simulate scenes, run the segmented and fixed-window beamformers,
// sweep penalty / minimum-length settings.

#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "segbeam/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string windows;
  std::optional<double> penalty_c;
  std::optional<double> c_rel;
  std::optional<segbeam::Index> tau;
  std::string max_window;
  std::optional<double> delta;
  std::string rtf;
  bool verbose_partitions = false;
  std::optional<segbeam::Index> threads;
  std::string c_values;
  std::string tau_values;
  bool no_audio = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "INI config file (default: built-in demo scene)");
  cmd->add_option("--seed", f.seed, "scene RNG seed");
  cmd->add_option("--out", f.out, "output directory");
}

void add_beamform(CLI::App* cmd, Flags& f) {
  cmd->add_option("--windows", f.windows, "fixed-window baselines, comma separated (frames)");
  cmd->add_option("--penalty-c", f.penalty_c, "absolute segment penalty C (overrides --c-rel)");
  cmd->add_option("--c-rel", f.c_rel, "penalty relative to the pilot output power");
  cmd->add_option("--tau", f.tau, "minimum segment length (frames)");
  cmd->add_option("--max-window", f.max_window, "candidate bank cap (frames) or 'none'");
  cmd->add_option("--delta", f.delta, "absolute diagonal loading (default: relative to pilot input power)");
  cmd->add_option("--rtf", f.rtf, "steering source: oracle | estimate | sidecar:PATH");
  cmd->add_option("--threads", f.threads, "worker threads (default: SEGBEAM_THREADS or all cores)");
  cmd->add_flag("--no-audio", f.no_audio, "skip writing enhanced WAV files");
}

segbeam::RunConfig build_config(const Flags& f) {
  using namespace segbeam;
  RunConfig cfg = f.config.empty() ? demo_config() : load_run_config(f.config);
  if (f.seed) cfg.seed = f.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.windows.empty()) cfg.windows = detail::parse_list<Index>(f.windows, "--windows", detail::parse_index);
  if (f.penalty_c) cfg.penalty_c = f.penalty_c;
  if (f.c_rel) cfg.c_rel = *f.c_rel;
  if (f.tau) cfg.tau = *f.tau;
  if (!f.max_window.empty()) {
    if (f.max_window == "none") {
      cfg.max_window.reset();
    } else {
      cfg.max_window = detail::parse_index(f.max_window, "--max-window");
    }
  }
  if (f.delta) cfg.delta = f.delta;
  if (!f.rtf.empty()) cfg.rtf = parse_rtf_source(f.rtf);
  if (f.verbose_partitions) cfg.verbose_partitions = true;
  if (f.threads) cfg.threads = *f.threads;
  if (f.no_audio) cfg.write_audio = false;
  if (!f.c_values.empty()) cfg.sweep_c = detail::parse_list<double>(f.c_values, "--c-values", detail::parse_double);
  if (!f.tau_values.empty())
    cfg.sweep_tau = detail::parse_list<Index>(f.tau_values, "--tau-values", detail::parse_index);
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Online segmented MVDR beamformer: simulate, beamform, sweep"};
  app.require_subcommand(1);
  Flags f;

  auto* sim = app.add_subcommand("simulate", "render a scene to mixture.wav, target_image.wav, changes.txt, steering.rtf");
  add_common(sim, f);

  auto* bf = app.add_subcommand("beamform", "run segmented and fixed-window beamformers, write metrics.csv");
  add_common(bf, f);
  add_beamform(bf, f);
  bf->add_flag("--verbose-partitions", f.verbose_partitions, "also dump every bin's partition");

  auto* sw = app.add_subcommand("sweep", "segmented metrics over a c_rel x tau grid (resumable sweep.csv)");
  add_common(sw, f);
  add_beamform(sw, f);
  sw->add_option("--c-values", f.c_values, "c_rel values, comma separated");
  sw->add_option("--tau-values", f.tau_values, "tau values, comma separated");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const segbeam::RunConfig cfg = build_config(f);
    if (sim->parsed()) {
      const auto res = segbeam::cmd_simulate(cfg);
      for (const auto& p : res.files) std::cout << p.string() << '\n';
    } else if (bf->parsed()) {
      const auto res = segbeam::cmd_beamform(cfg);
      std::cout << segbeam::kMetricsCsvHeader << '\n';
      for (const auto& r : res.reports) std::cout << segbeam::to_csv_row(r) << '\n';
      std::cerr << "candidate updates " << res.candidate_updates << ", max |w^H nu - 1| " << res.max_constraint_error
                << '\n';
    } else {
      const auto res = segbeam::cmd_sweep(cfg);
      std::cout << "rows written " << res.rows_written << ", skipped " << res.rows_skipped << '\n';
    }
  } catch (const segbeam::ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const segbeam::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
