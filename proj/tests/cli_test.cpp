// End-to-end tests of the pcgain command-line binary: every subcommand is
// spawned as a real process and judged only by its exit code and the files
// it leaves behind.
#include <doctest.h>

#include <sys/wait.h>

#include <Eigen/Core>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "pcgain/csv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using pcgain::CsvTable;
using pcgain::format_double;
using pcgain::parse_csv;

namespace {

const char* kCli = PCGAIN_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

// Runs the CLI inside `dir`, capturing combined output. `env` may hold
// NAME=value assignments prefixed to the command.
RunResult run_cli(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const fs::path out_path = dir / ".run_output.txt";
  std::ostringstream cmd;
  cmd << "cd '" << dir.string() << "' && " << env << (env.empty() ? "" : " ") << "'" << kCli
      << "' " << args << " > '" << out_path.string() << "' 2>&1";
  const int status = std::system(cmd.str().c_str());
  RunResult r;
  if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  std::ifstream in(out_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file: " << p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pcgain_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small deterministic table: three smooth numeric columns plus a two-level
// category, enough structure for every method to run end to end.
std::string tiny_csv(int rows = 60) {
  std::ostringstream os;
  os << "x0,x1,x2,cat\n";
  for (int i = 0; i < rows; ++i) {
    const double t = static_cast<double>(i) / rows;
    os << format_double(0.2 + 0.6 * t) << "," << format_double(std::sin(3.0 * t)) << ","
       << format_double(1.0 + t * t) << "," << (i % 3 == 0 ? "u" : "v") << "\n";
  }
  return os.str();
}

}  // namespace

TEST_CASE("help requests exit zero") {
  const fs::path dir = scratch("help");
  CHECK(run_cli(dir, "--help").exit_code == 0);
  CHECK(run_cli(dir, "impute --help").exit_code == 0);
  CHECK(run_cli(dir, "benchmark --help").exit_code == 0);
}

TEST_CASE("mask at rate zero reproduces the input and an all-ones mask") {
  const fs::path dir = scratch("mask_zero");
  spit(dir / "input.csv", tiny_csv());
  const RunResult r = run_cli(dir, "mask input.csv out.csv --rate 0 --seed 3");
  CHECK(r.exit_code == 0);
  CHECK(slurp(dir / "out.csv") == slurp(dir / "input.csv"));
  const CsvTable mask = parse_csv(slurp(dir / "out.mask.csv"));
  CHECK(mask.header == parse_csv(tiny_csv()).header);
  for (const auto& row : mask.rows)
    for (const auto& cell : row) CHECK(cell == "1");
}

TEST_CASE("mask is deterministic in the seed and sensitive to it") {
  const fs::path dir = scratch("mask_seed");
  spit(dir / "input.csv", tiny_csv());
  REQUIRE(run_cli(dir, "mask input.csv a.csv --rate 0.5 --seed 7").exit_code == 0);
  REQUIRE(run_cli(dir, "mask input.csv b.csv --rate 0.5 --seed 7").exit_code == 0);
  REQUIRE(run_cli(dir, "mask input.csv c.csv --rate 0.5 --seed 8").exit_code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a.mask.csv") == slurp(dir / "b.mask.csv"));
  CHECK(slurp(dir / "a.csv") != slurp(dir / "c.csv"));
}

TEST_CASE("masked file and mask file agree cell by cell") {
  const fs::path dir = scratch("mask_roundtrip");
  spit(dir / "input.csv", tiny_csv());
  REQUIRE(run_cli(dir, "mask input.csv masked.csv --rate 0.5 --seed 7").exit_code == 0);
  const CsvTable original = parse_csv(tiny_csv());
  const CsvTable masked = parse_csv(slurp(dir / "masked.csv"));
  const CsvTable mask = parse_csv(slurp(dir / "masked.mask.csv"));
  REQUIRE(masked.n_rows() == original.n_rows());
  REQUIRE(mask.n_rows() == original.n_rows());
  int hidden = 0;
  for (std::size_t r = 0; r < original.n_rows(); ++r) {
    for (std::size_t c = 0; c < original.n_cols(); ++c) {
      if (mask.rows[r][c] == "0") {
        CHECK(masked.rows[r][c].empty());
        ++hidden;
      } else {
        REQUIRE(mask.rows[r][c] == "1");
        CHECK(masked.rows[r][c] == original.rows[r][c]);
      }
    }
  }
  CHECK(hidden > 0);  // rate 0.5 on 240 cells leaves holes with certainty
}

TEST_CASE("impute fills every hole and copies observed fields through untouched") {
  const fs::path dir = scratch("impute_fill");
  spit(dir / "input.csv", tiny_csv());
  REQUIRE(run_cli(dir, "mask input.csv masked.csv --rate 0.4 --seed 5").exit_code == 0);
  for (const std::string method : {"mean", "gain", "pcgain"}) {
    const std::string out = method + std::string("_done.csv");
    const RunResult r = run_cli(dir, "impute masked.csv " + out + " --method " + method +
                                         " --iterations 120 --classifier-iterations 60 "
                                         "--clusters-k 3 --batch-size 16 --hidden 8,8 --seed 11");
    REQUIRE_MESSAGE(r.exit_code == 0, method << " failed: " << r.output);
    const CsvTable masked = parse_csv(slurp(dir / "masked.csv"));
    const CsvTable done = parse_csv(slurp(dir / out));
    REQUIRE(done.n_rows() == masked.n_rows());
    REQUIRE(done.header == masked.header);
    for (std::size_t i = 0; i < masked.n_rows(); ++i) {
      for (std::size_t c = 0; c < masked.n_cols(); ++c) {
        if (masked.rows[i][c].empty())
          CHECK(!done.rows[i][c].empty());
        else
          CHECK(done.rows[i][c] == masked.rows[i][c]);
      }
    }
  }
}

TEST_CASE("impute reruns are byte-identical, artifacts included") {
  const fs::path dir = scratch("impute_determinism");
  spit(dir / "input.csv", tiny_csv());
  REQUIRE(run_cli(dir, "mask input.csv masked.csv --rate 0.4 --seed 5").exit_code == 0);
  const std::string cmd =
      "impute masked.csv done.csv --method gain --iterations 150 --batch-size 16 "
      "--hidden 12,12 --seed 11 --outdir art";
  REQUIRE(run_cli(dir, cmd).exit_code == 0);
  const std::string done_1 = slurp(dir / "done.csv");
  const std::string ckpt_1 = slurp(dir / "art" / "model.ckpt");
  const std::string manifest_1 = slurp(dir / "art" / "manifest.json");
  REQUIRE(run_cli(dir, cmd).exit_code == 0);
  CHECK(slurp(dir / "done.csv") == done_1);
  CHECK(slurp(dir / "art" / "model.ckpt") == ckpt_1);
  CHECK(slurp(dir / "art" / "manifest.json") == manifest_1);
}

TEST_CASE("pcgain impute leaves the full artifact trail") {
  const fs::path dir = scratch("pcgain_artifacts");
  spit(dir / "input.csv", tiny_csv());
  REQUIRE(run_cli(dir, "mask input.csv masked.csv --rate 0.4 --seed 5").exit_code == 0);
  const RunResult r = run_cli(dir,
                              "impute masked.csv done.csv --method pcgain --iterations 150 "
                              "--classifier-iterations 80 --clusters-k 3 --batch-size 16 "
                              "--hidden 12,12 --seed 11 --outdir art");
  REQUIRE_MESSAGE(r.exit_code == 0, r.output);
  for (const char* name : {"pretrain.ckpt", "classifier.ckpt", "final.ckpt", "pseudo_labels.csv",
                           "manifest.json"})
    CHECK_MESSAGE(fs::exists(dir / "art" / name), "missing artifact " << name);

  const CsvTable labels = parse_csv(slurp(dir / "art" / "pseudo_labels.csv"));
  CHECK(labels.header == std::vector<std::string>{"row", "pseudo_label"});
  CHECK(labels.n_rows() > 0);

  const json manifest = json::parse(slurp(dir / "art" / "manifest.json"));
  CHECK(manifest.at("command") == "impute");
  CHECK(manifest.at("method") == "pcgain");
  REQUIRE(manifest.at("stages").is_array());
  REQUIRE(manifest.at("stages").size() == 4);
  for (const auto& stage : manifest.at("stages")) {
    CHECK(!stage.at("stage").get<std::string>().empty());
    CHECK(!stage.at("input_hash").get<std::string>().empty());
    CHECK(!stage.at("output_hash").get<std::string>().empty());
  }
  CHECK(manifest.at("entropy_final").is_number());
  CHECK(manifest.at("entropy_initial").is_number());
}

TEST_CASE("config file drives the run and explicit flags take precedence") {
  const fs::path dir = scratch("config_precedence");
  spit(dir / "input.csv", tiny_csv());
  REQUIRE(run_cli(dir, "mask input.csv masked.csv --rate 0.4 --seed 5").exit_code == 0);
  spit(dir / "run.cfg", "iterations = 120\nbatch_size = 16\nseed = 11\n");
  REQUIRE(run_cli(dir, "impute masked.csv a.csv --method gain --config run.cfg --outdir art_a")
              .exit_code == 0);
  const json a = json::parse(slurp(dir / "art_a" / "manifest.json"));
  CHECK(a.at("config").at("iterations") == 120);
  CHECK(a.at("config").at("batch_size") == 16);
  REQUIRE(run_cli(dir,
                  "impute masked.csv b.csv --method gain --config run.cfg --iterations 80 "
                  "--outdir art_b")
              .exit_code == 0);
  const json b = json::parse(slurp(dir / "art_b" / "manifest.json"));
  CHECK(b.at("config").at("iterations") == 80);
  CHECK(b.at("config").at("batch_size") == 16);
}

TEST_CASE("unknown and duplicate config keys are rejected as config errors") {
  const fs::path dir = scratch("config_bad");
  spit(dir / "input.csv", tiny_csv());
  REQUIRE(run_cli(dir, "mask input.csv masked.csv --rate 0.4 --seed 5").exit_code == 0);
  spit(dir / "unknown.cfg", "alpha = 150\nbogus_key = 3\n");
  CHECK(run_cli(dir, "impute masked.csv x.csv --config unknown.cfg").exit_code == 2);
  spit(dir / "dup.cfg", "alpha = 150\nalpha = 151\n");
  CHECK(run_cli(dir, "impute masked.csv x.csv --config dup.cfg").exit_code == 2);
}

TEST_CASE("failures map to distinct exit codes") {
  const fs::path dir = scratch("exit_codes");
  spit(dir / "input.csv", tiny_csv());
  REQUIRE(run_cli(dir, "mask input.csv masked.csv --rate 0.4 --seed 5").exit_code == 0);

  // usage / configuration errors -> 2
  CHECK(run_cli(dir, "impute masked.csv x.csv --method nope").exit_code == 2);
  CHECK(run_cli(dir, "impute masked.csv x.csv --method gain --iterations -5").exit_code == 2);
  CHECK(run_cli(dir, "benchmark input.csv bench --rates 1.5").exit_code == 2);
  CHECK(run_cli(dir, "benchmark input.csv bench", "PCGAIN_WORKERS=abc").exit_code == 2);

  // data errors -> 3
  CHECK(run_cli(dir, "impute no_such_file.csv x.csv").exit_code == 3);
  const RunResult full = run_cli(dir, "impute input.csv x.csv --method mean");
  CHECK(full.exit_code == 3);  // fully observed: nothing to impute
}

TEST_CASE("benchmark artifacts are complete and rerun byte-identical") {
  const fs::path dir = scratch("benchmark_outputs");
  spit(dir / "input.csv", tiny_csv());
  const std::string cmd =
      "benchmark input.csv OUT --label-col cat --methods mean --rates 0.3,0.6 --folds 3 "
      "--repeats 2 --seed 9";
  std::string c1 = cmd, c2 = cmd, c3 = cmd;
  c1.replace(c1.find("OUT"), 3, "out1");
  c2.replace(c2.find("OUT"), 3, "out2");
  c3.replace(c3.find("OUT"), 3, "out3");
  REQUIRE(run_cli(dir, c1).exit_code == 0);
  REQUIRE(run_cli(dir, c2).exit_code == 0);
  // a worker-count override must not change any byte of the report
  REQUIRE(run_cli(dir, c3, "PCGAIN_WORKERS=3").exit_code == 0);

  const CsvTable cells = parse_csv(slurp(dir / "out1" / "cells.csv"));
  CHECK(cells.n_rows() == 2 * 2 * 3);  // rates x repeats x folds for one method
  const json manifest = json::parse(slurp(dir / "out1" / "manifest.json"));
  CHECK(manifest.at("command") == "benchmark");
  CHECK(manifest.at("dataset") == "input");
  CHECK(manifest.at("folds") == 3);

  for (const char* name : {"cells.csv", "summary.csv", "manifest.json"}) {
    CHECK(slurp(dir / "out1" / name) == slurp(dir / "out2" / name));
    CHECK(slurp(dir / "out1" / name) == slurp(dir / "out3" / name));
  }
}

TEST_CASE("benchmark records failing cells and exits five") {
  const fs::path dir = scratch("benchmark_failures");
  spit(dir / "input.csv", tiny_csv(40));
  // clusters-k far above the pretraining subset size: every pcgain cell fails,
  // the run itself still completes and reports.
  const RunResult r = run_cli(dir,
                              "benchmark input.csv out --methods pcgain --rates 0.5 --folds 3 "
                              "--repeats 1 --seed 4 --iterations 50 --clusters-k 40");
  CHECK(r.exit_code == 5);
  const std::string cells = slurp(dir / "out" / "cells.csv");
  CHECK(cells.find("failed") != std::string::npos);
}

TEST_CASE("timing output is opt-in") {
  const fs::path dir = scratch("timings");
  spit(dir / "input.csv", tiny_csv());
  REQUIRE(run_cli(dir, "mask input.csv masked.csv --rate 0.4 --seed 5").exit_code == 0);
  const std::string cmd = "impute masked.csv done.csv --method mean --outdir art";
  const RunResult quiet = run_cli(dir, cmd);
  REQUIRE(quiet.exit_code == 0);
  CHECK(quiet.output.find("wall_clock_seconds") == std::string::npos);
  CHECK(json::parse(slurp(dir / "art" / "manifest.json")).at("wall_clock_seconds").is_null());

  const RunResult timed = run_cli(dir, cmd, "PCGAIN_TIMINGS=1");
  REQUIRE(timed.exit_code == 0);
  CHECK(timed.output.find("wall_clock_seconds") != std::string::npos);
  CHECK(json::parse(slurp(dir / "art" / "manifest.json")).at("wall_clock_seconds").is_number());
}

TEST_CASE("gradcheck passes clean and the hidden fault hook trips it") {
  const fs::path dir = scratch("gradcheck");
  const RunResult ok = run_cli(dir, "gradcheck --seed 3");
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("PASS") != std::string::npos);
  CHECK(ok.output.find("FAIL") == std::string::npos);
  const RunResult bad = run_cli(dir, "gradcheck --seed 3 --inject-fault");
  CHECK(bad.exit_code == 1);
  CHECK(bad.output.find("FAIL") != std::string::npos);
}
