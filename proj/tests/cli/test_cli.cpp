#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "imu2emg/cli/commands.hpp"
#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/files.hpp"
#include "imu2emg/data/io.hpp"
#include "imu2emg/model/checkpoint.hpp"
#include "../support/temp_dir.hpp"

namespace fs = std::filesystem;
using namespace imu2emg;
using imu2emg::test::TempDir;

namespace {

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

struct Exec {
  int code;
  std::string out;
};

Exec run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + IMU2EMG_CLI_PATH + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof(buf), p)) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

cli::RunConfig tiny_run(const fs::path& manifest, const fs::path& out) {
  cli::RunConfig c;
  c.manifest = manifest.string();
  c.out_dir = out.string();
  c.seed = 3;
  c.model.d_model = 16;
  c.model.n_layers = 1;
  c.model.n_heads = 2;
  c.model.ffn_hidden = 32;
  c.model.groupnorm_groups = 4;
  c.train.max_epochs = 2;
  c.train.batch_size = 32;
  c.adapt.steps = 3;
  c.sweep_seeds = {0, 1};
  return c;
}

// One synthetic dataset and one trained run shared by the suite.
class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = std::make_unique<TempDir>();
    cli::cmd_synth(3, 30, 11, dir_->path() / "data");
    cfg_ = tiny_run(dir_->path() / "data" / "manifest.json", dir_->path() / "run");
    cli::cmd_train(cfg_, {});
  }
  static void TearDownTestSuite() { dir_.reset(); }

  static std::unique_ptr<TempDir> dir_;
  static cli::RunConfig cfg_;
};
std::unique_ptr<TempDir> CliRun::dir_;
cli::RunConfig CliRun::cfg_;

}  // namespace

TEST(RunConfig, RoundTripIsCanonical) {
  cli::RunConfig c;
  c.manifest = "m.json";
  c.seed = 42;
  c.precision = cli::Precision::float64;
  c.ratios = {0.0, 0.01};
  const auto text = c.to_json();
  EXPECT_EQ(cli::RunConfig::from_json(text).to_json(), text);
}

TEST(RunConfig, ReportsEveryProblemAtOnce) {
  const std::string text = R"({"seed": -1, "bogus": 1, "model": {"d_model": 30, "n_heads": 8},
                               "train": {"lr": 0}, "sweep": {"ratios": [0.3]}, "precision": "half"})";
  try {
    cli::RunConfig::from_json(text);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* needle : {"seed", "bogus: unknown key", "d_model", "train.lr", "sweep.ratios", "precision"})
      EXPECT_NE(msg.find(needle), std::string::npos) << needle << " missing from:\n" << msg;
  }
}

TEST(RunConfig, RejectsWrongSchemaVersionAndBadJson) {
  EXPECT_THROW(cli::RunConfig::from_json(R"({"schema_version": 2})"), ConfigError);
  EXPECT_THROW(cli::RunConfig::from_json("{"), ConfigError);
  EXPECT_THROW(cli::RunConfig::from_json(R"({"model": 3})"), ConfigError);
}

TEST(ExitCodes, MapFailureClasses) {
  EXPECT_EQ(cli::exit_code_for(ConfigError("x")), cli::kExitConfig);
  EXPECT_EQ(cli::exit_code_for(DataError("x")), cli::kExitData);
  EXPECT_EQ(cli::exit_code_for(LoadError("x")), cli::kExitData);
  EXPECT_EQ(cli::exit_code_for(ContractError("x")), cli::kExitRuntime);
  EXPECT_EQ(cli::exit_code_for(std::runtime_error("x")), cli::kExitRuntime);
}

TEST(Synth, RejectsSingleSubject) {
  TempDir d;
  EXPECT_THROW(cli::cmd_synth(1, 10, 0, d.path()), ConfigError);
  EXPECT_NO_THROW(cli::cmd_synth(2, 10, 0, d.path()));
}

TEST(Synth, SameSeedGivesIdenticalBytes) {
  TempDir a, b;
  cli::cmd_synth(2, 25, 5, a.path());
  cli::cmd_synth(2, 25, 5, b.path());
  const auto ta = tree(a.path());
  EXPECT_EQ(ta.size(), 2u * 3u + 1u);  // 3 trials per subject + manifest
  EXPECT_EQ(ta, tree(b.path()));
}

TEST(Synth, TrialsRoundTripThroughTheLoader) {
  TempDir d;
  const auto r = cli::cmd_synth(2, 25, 9, d.path());
  const auto subjects = data::load_manifest_raw(r.manifest);
  ASSERT_EQ(subjects.size(), 2u);
  for (const auto& s : subjects) {
    EXPECT_EQ(s.segments.size(), 25u);
    EXPECT_EQ(s.discarded_short, 0u);
  }
}

TEST_F(CliRun, TrainWritesOneDirectoryPerFold) {
  for (const char* s : {"S01", "S02", "S03"}) {
    const auto dir = cli::fold_dir(cfg_, s);
    for (const char* f : {"checkpoint.bin", "train_log.csv", "norm_stats.json", "run_config.json"})
      EXPECT_TRUE(fs::exists(dir / f)) << dir / f;
    EXPECT_EQ(read_file(dir / "run_config.json"), cfg_.to_json());
    EXPECT_FALSE(fs::exists(dir / "checkpoint.bin.tmp"));
    EXPECT_EQ(count_lines(read_file(dir / "train_log.csv")), 1u + cfg_.train.max_epochs);
  }
  EXPECT_EQ(read_file(fs::path(cfg_.out_dir) / "run_config.json"), cfg_.to_json());
}

TEST_F(CliRun, RetrainingIsByteIdenticalAcrossJobCounts) {
  TempDir other;
  auto cfg = cfg_;
  cfg.out_dir = other.path().string();
  cli::RunOptions opts;
  opts.jobs = 2;
  cli::cmd_train(cfg, opts);
  for (const char* s : {"S01", "S02", "S03"})
    for (const char* f : {"checkpoint.bin", "train_log.csv", "norm_stats.json"})
      EXPECT_EQ(read_file(cli::fold_dir(cfg_, s) / f), read_file(cli::fold_dir(cfg, s) / f)) << s << "/" << f;
}

TEST_F(CliRun, CheckpointSaveLoadSaveIsByteIdentical) {
  const auto path = cli::fold_dir(cfg_, "S02") / "checkpoint.bin";
  TempDir d;
  model::save_checkpoint(model::load_checkpoint(path), d.path() / "again.bin");
  EXPECT_EQ(read_file(path), read_file(d.path() / "again.bin"));
}

TEST_F(CliRun, UnknownFoldListsValidIds) {
  cli::RunOptions opts;
  opts.fold = "S99";
  try {
    cli::cmd_train(cfg_, opts);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("S01, S02, S03"), std::string::npos) << e.what();
  }
}

TEST_F(CliRun, TrainRefusesADifferentConfigInTheSameRun) {
  auto cfg = cfg_;
  cfg.seed = 4;
  EXPECT_THROW(cli::cmd_train(cfg, {}), ConfigError);
}

TEST_F(CliRun, SweepRowCountAndHeader) {
  TempDir d;
  auto cfg = cfg_;
  cfg.out_dir = d.path().string();
  fs::copy(fs::path(cfg_.out_dir) / "folds", d.path() / "folds", fs::copy_options::recursive);
  const auto rows = cli::cmd_sweep(cfg, {});
  EXPECT_EQ(rows, 3u * (5u + 1u) * 2u);
  const auto csv = read_file(d.path() / "sweep.csv");
  EXPECT_EQ(count_lines(csv), rows + 1);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), adapt::sweep_csv_header());

  // Zero-shot-only table.
  cfg.ratios = {0.0};
  EXPECT_EQ(cli::cmd_sweep(cfg, {}), 3u * 2u);
  std::istringstream in(read_file(d.path() / "sweep.csv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) EXPECT_EQ(line.substr(3, 3), ",0,") << line;
}

TEST_F(CliRun, SweepNamesTheFoldWithoutACheckpoint) {
  TempDir d;
  auto cfg = cfg_;
  cfg.out_dir = d.path().string();
  fs::copy(fs::path(cfg_.out_dir) / "folds", d.path() / "folds", fs::copy_options::recursive);
  fs::remove(d.path() / "folds" / "S02" / "checkpoint.bin");
  try {
    cli::cmd_sweep(cfg, {});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("fold S02"), std::string::npos) << e.what();
  }
}

TEST_F(CliRun, ReportIsPureAndHasOneCurveRowPerModeAndRatio) {
  TempDir d;
  auto cfg = cfg_;
  cfg.out_dir = d.path().string();
  fs::copy(fs::path(cfg_.out_dir) / "folds", d.path() / "folds", fs::copy_options::recursive);
  cli::cmd_sweep(cfg, {});
  cli::cmd_report(d.path());
  const auto first = tree(d.path() / "report");
  cli::cmd_report(d.path());
  EXPECT_EQ(first, tree(d.path() / "report"));
  // 30 cycles per subject rotate through 3 of the 4 synthetic modes.
  EXPECT_EQ(count_lines(first.at("ratio_curve.tsv")), 1u + 3u * 6u);
  EXPECT_EQ(count_lines(first.at("ratio_curve_overall.tsv")), 1u + 6u);
  EXPECT_EQ(count_lines(first.at("muscle_bars.tsv")), 1u + 6u * data::kMuscles);
}

TEST(Report, EmptyRunDirListsExpectedFiles) {
  TempDir d;
  try {
    cli::cmd_report(d.path());
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("sweep_cycles.csv"), std::string::npos);
    EXPECT_NE(msg.find("sweep_config.json"), std::string::npos);
  }
}

TEST_F(CliRun, EvalWritesReports) {
  TempDir d;
  auto cfg = cfg_;
  cfg.out_dir = d.path().string();
  fs::copy(fs::path(cfg_.out_dir) / "folds", d.path() / "folds", fs::copy_options::recursive);
  cli::cmd_eval(cfg, {}, data::Mode::treadmill);
  const auto dir = cli::fold_dir(cfg, "S01");
  EXPECT_EQ(count_lines(read_file(dir / "eval_cycles.csv")), 1u + 30u * data::kMuscles);
  EXPECT_NE(read_file(dir / "eval_report.json").find("\"mode_filter\": \"treadmill\""), std::string::npos);
}

TEST(Ablate, OneEpochRunEmitsWellFormedCsv) {
  TempDir d;
  cli::cmd_synth(2, 20, 4, d.path() / "data");
  auto cfg = tiny_run(d.path() / "data" / "manifest.json", d.path() / "run");
  cfg.train.max_epochs = 1;
  const auto rows = cli::cmd_ablate(cfg, {});
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.digest_gated, r.digest_nongated);
    const double diff = std::abs(static_cast<double>(r.params_gated) - static_cast<double>(r.params_nongated));
    EXPECT_LT(diff / static_cast<double>(r.params_nongated), 0.01);
  }
  const auto csv = read_file(d.path() / "run" / "ablation.csv");
  EXPECT_EQ(count_lines(csv), 3u);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line + "\n", cli::ablation_csv_header());
  const auto columns = std::count(line.begin(), line.end(), ',');
  while (std::getline(in, line)) EXPECT_EQ(std::count(line.begin(), line.end(), ','), columns);
  EXPECT_NE(cli::ablation_summary(rows).find("r: mean relative change"), std::string::npos);
}

TEST(Binary, ExitCodesByFailureClass) {
  TempDir d;
  EXPECT_EQ(run_cli("--no-such-flag").code, cli::kExitConfig);
  EXPECT_EQ(run_cli("synth --subjects 1 --out " + d.path().string()).code, cli::kExitConfig);
  EXPECT_EQ(run_cli("train --manifest " + (d.path() / "missing.json").string() + " --out " + d.path().string()).code,
            cli::kExitData);
  EXPECT_EQ(run_cli("report --out " + d.path().string()).code, cli::kExitData);
  EXPECT_EQ(run_cli("synth --subjects 2 --cycles 5 --out " + (d.path() / "ok").string()).code, cli::kExitOk);
}

TEST(Binary, OutDirectoryPrecedence) {
  const auto from_env = run_cli("config", "IMU2EMG_OUT=/tmp/from_env");
  ASSERT_EQ(from_env.code, 0);
  EXPECT_EQ(cli::RunConfig::from_json(from_env.out).out_dir, "/tmp/from_env");
  const auto from_flag = run_cli("config --out /tmp/from_flag", "IMU2EMG_OUT=/tmp/from_env");
  EXPECT_EQ(cli::RunConfig::from_json(from_flag.out).out_dir, "/tmp/from_flag");
}
