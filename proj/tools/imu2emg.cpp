// imu2emg command-line workbench.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "imu2emg/cli/commands.hpp"
#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/runtime.hpp"
#include "imu2emg/simd/kernels.hpp"

using namespace imu2emg;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string manifest;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string fold = "all";
};

void add_common(CLI::App* sub, Common& c, bool with_fold = true) {
  sub->add_option("--config", c.config, "Run config JSON (defaults apply when omitted)");
  sub->add_option("--out", c.out, "Run directory (overrides IMU2EMG_OUT and the config)");
  sub->add_option("--manifest", c.manifest, "Dataset manifest (overrides the config)");
  sub->add_option("--seed", c.seed, "Run seed (overrides the config)");
  sub->add_option("--jobs", c.jobs, "Folds processed in parallel")->check(CLI::PositiveNumber);
  if (with_fold) sub->add_option("--fold", c.fold, "all or a subject id");
}

// --out beats IMU2EMG_OUT beats the config file.
std::string resolve_out(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("IMU2EMG_OUT"); env && *env) return env;
  return from_config;
}

cli::RunConfig build_config(const Common& c) {
  cli::RunConfig cfg = c.config.empty() ? cli::RunConfig{} : cli::RunConfig::load(c.config);
  cfg.out_dir = resolve_out(c.out, cfg.out_dir);
  if (!c.manifest.empty()) cfg.manifest = c.manifest;
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  configure_process();
  CLI::App app{"IMU-to-EMG envelope estimation workbench"};
  app.require_subcommand(1);
  std::string kernels = "auto";
  app.add_option("--kernels", kernels, "SIMD backend: auto, scalar, avx2 or neon");

  Common common;
  std::size_t n_subjects = 6, cycles = 300;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic population as trial CSVs plus manifest");
  synth->add_option("--subjects", n_subjects, "Number of subjects (>= 2)");
  synth->add_option("--cycles", cycles, "Gait cycles per subject");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Dataset directory (or IMU2EMG_OUT)");

  auto* train = app.add_subcommand("train", "Leave-one-subject-out training");
  add_common(train, common);
  auto* sweep = app.add_subcommand("sweep", "Few-shot calibration sweep over trained folds");
  add_common(sweep, common);
  auto* ablate = app.add_subcommand("ablate", "Gated vs non-gated FFN ablation");
  add_common(ablate, common);
  auto* eval = app.add_subcommand("eval", "Zero-shot evaluation of trained folds");
  add_common(eval, common);
  std::string mode_name;
  eval->add_option("--mode", mode_name, "Restrict the report to one locomotion mode");
  std::string report_dir;
  auto* report = app.add_subcommand("report", "Aggregate a run directory into report JSON and plot TSVs");
  report->add_option("--out", report_dir, "Run directory (or IMU2EMG_OUT)");
  auto* config = app.add_subcommand("config", "Print the canonical default run config");
  add_common(config, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitConfig;
  }

  try {
    if (kernels != "auto") simd::set_backend(simd::parse_backend(kernels));
    cli::RunOptions opts;
    opts.fold = common.fold;
    opts.jobs = common.jobs;
    opts.log = &std::cerr;

    if (*synth) {
      const std::string out = resolve_out(synth_out, "");
      if (out.empty()) throw ConfigError("synth needs --out or IMU2EMG_OUT");
      const auto r = cli::cmd_synth(n_subjects, cycles, synth_seed, out);
      std::cout << "wrote " << r.trials << " trials, manifest " << r.manifest.string() << '\n';
    } else if (*train) {
      const auto folds = cli::cmd_train(build_config(common), opts);
      std::cout << "trained " << folds.size() << " fold(s)\n";
    } else if (*sweep) {
      const auto cfg = build_config(common);
      const auto rows = cli::cmd_sweep(cfg, opts);
      std::cout << "wrote " << rows << " sweep rows to " << (std::filesystem::path(cfg.out_dir) / "sweep.csv").string()
                << '\n';
    } else if (*ablate) {
      const auto rows = cli::cmd_ablate(build_config(common), opts);
      std::cout << cli::ablation_summary(rows);
    } else if (*eval) {
      std::optional<data::Mode> mode;
      if (!mode_name.empty()) {
        mode = data::parse_mode(mode_name);
        if (!mode) throw ConfigError("unknown mode '" + mode_name + "'");
      }
      cli::cmd_eval(build_config(common), opts, mode);
    } else if (*report) {
      const std::string dir = resolve_out(report_dir, "");
      if (dir.empty()) throw ConfigError("report needs --out or IMU2EMG_OUT");
      cli::cmd_report(dir);
      std::cout << "wrote " << (std::filesystem::path(dir) / "report").string() << '\n';
    } else if (*config) {
      std::cout << build_config(common).to_json();
    }
    return cli::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
}
