#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcgain/dataset.hpp"
#include "pcgain/errors.hpp"
#include "pcgain/metrics.hpp"
#include "pcgain/rng.hpp"

using namespace pcgain;

namespace {

// Fully observed mixed table for the benchmark protocol: two correlated
// numericals plus a color determined by the first one.
Dataset make_observed_mixed(int rows, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream os;
  os << "x,y,color\n";
  const char* colors[3] = {"red", "green", "blue"};
  for (int r = 0; r < rows; ++r) {
    const double x = rng.uniform();
    const double y = x + 0.05 * std::sin(10.0 * x) + 0.02 * rng.uniform(-1.0, 1.0);
    os << format_double(x) << "," << format_double(y) << ","
       << colors[x < 0.33 ? 0 : (x < 0.66 ? 1 : 2)] << "\n";
  }
  return dataset_from_table(parse_csv(os.str()));
}

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.iterations = 25;
  cfg.classifier_iterations = 25;
  cfg.batch_size = 16;
  cfg.hidden_widths = {6};
  cfg.clusters_k = 2;
  cfg.kmeans_restarts = 1;
  cfg.lambda = 0.5;
  return cfg;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("missing-coordinate rmse matches the closed form") {
  Eigen::MatrixXd imputed(2, 2), truth(2, 2), mask(2, 2);
  imputed << 0.5, 0.2, 0.9, 0.4;
  truth << 0.5, 0.5, 0.1, 0.4;
  mask << 1, 0, 0, 1;
  // errors at the two missing cells: -0.3 and 0.8
  CHECK(rmse_missing(imputed, truth, mask) ==
        doctest::Approx(std::sqrt((0.09 + 0.64) / 2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(rmse_missing(imputed, truth, Eigen::MatrixXd::Ones(2, 2)), DataError);
  CHECK_THROWS_AS(rmse_missing(imputed, Eigen::MatrixXd::Zero(3, 2), mask), ConfigError);
}

TEST_CASE("column fills are observed means and only touch missing cells") {
  EncodedMatrix enc;
  enc.data.resize(3, 2);
  enc.mask.resize(3, 2);
  enc.data << 0.2, 1.0, 0.6, 0.0, 0.0, 0.5;
  enc.mask << 1, 1, 1, 0, 0, 1;
  enc.categorical = {0, 0};

  Eigen::RowVectorXd fill = observed_column_fill(enc);
  CHECK(fill[0] == doctest::Approx((0.2 + 0.6) / 2.0).epsilon(1e-12));
  CHECK(fill[1] == doctest::Approx((1.0 + 0.5) / 2.0).epsilon(1e-12));

  Eigen::MatrixXd filled = mean_impute(enc);
  CHECK(filled(0, 0) == 0.2);  // observed cells are bitwise untouched
  CHECK(filled(0, 1) == 1.0);
  CHECK(filled(1, 0) == 0.6);
  CHECK(filled(2, 1) == 0.5);
  CHECK(filled(1, 1) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(filled(2, 0) == doctest::Approx(0.4).epsilon(1e-12));

  // a column with no observed cell cannot be filled
  enc.mask.col(0).setZero();
  CHECK_THROWS_AS(observed_column_fill(enc), DataError);

  Eigen::RowVectorXd wrong(3);
  CHECK_THROWS_AS(apply_column_fill(enc, wrong), ConfigError);
}

TEST_CASE("one-hot columns fill with observed category frequencies") {
  EncodedMatrix enc;
  enc.data.resize(4, 2);
  enc.mask.resize(4, 2);
  // three observed rows: categories 0, 0, 1 -> frequencies 2/3 and 1/3
  enc.data << 1, 0, 1, 0, 0, 1, 0, 0;
  enc.mask << 1, 1, 1, 1, 1, 1, 0, 0;
  enc.categorical = {1, 1};
  Eigen::MatrixXd filled = mean_impute(enc);
  CHECK(filled(3, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(filled(3, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("the downstream probe learns separable classes and stays at chance on noise") {
  Rng rng(8);
  const int n_train = 80, n_test = 40;
  Eigen::MatrixXd train_x(n_train, 3), test_x(n_test, 3);
  std::vector<int> train_y, test_y;
  for (int r = 0; r < n_train; ++r) {
    const int y = r % 2;
    train_y.push_back(y);
    for (int c = 0; c < 3; ++c) train_x(r, c) = (y ? 0.75 : 0.25) + 0.05 * rng.uniform(-1.0, 1.0);
  }
  for (int r = 0; r < n_test; ++r) {
    const int y = r % 2;
    test_y.push_back(y);
    for (int c = 0; c < 3; ++c) test_x(r, c) = (y ? 0.75 : 0.25) + 0.05 * rng.uniform(-1.0, 1.0);
  }

  const double acc = post_imputation_accuracy(train_x, train_y, test_x, test_y, 2, 7, 1000, 32);
  CHECK(acc >= 0.9);

  // same seed, same answer
  CHECK(post_imputation_accuracy(train_x, train_y, test_x, test_y, 2, 7, 1000, 32) == acc);

  // labels decoupled from the features: accuracy hovers at chance
  std::vector<int> noise_train, noise_test;
  for (int r = 0; r < n_train; ++r) noise_train.push_back(rng.bernoulli(0.5) ? 1 : 0);
  for (int r = 0; r < n_test; ++r) noise_test.push_back(rng.bernoulli(0.5) ? 1 : 0);
  const double chance =
      post_imputation_accuracy(train_x, noise_train, test_x, noise_test, 2, 7, 1000, 32);
  CHECK(chance > 0.2);
  CHECK(chance < 0.8);

  CHECK_THROWS_AS(post_imputation_accuracy(train_x, train_y, test_x, test_y, 1, 7), ConfigError);
  std::vector<int> bad = train_y;
  bad[0] = 5;
  CHECK_THROWS_AS(post_imputation_accuracy(train_x, bad, test_x, test_y, 2, 7), ConfigError);
  CHECK_THROWS_AS(
      post_imputation_accuracy(train_x, train_y, Eigen::MatrixXd::Zero(4, 2), {0, 1, 0, 1}, 2, 7),
      ConfigError);
}

TEST_CASE("labels extract from categorical vocabularies and sorted numeric values") {
  Dataset ds = make_observed_mixed(30, 3);
  int k = 0;
  std::vector<int> labels = extract_labels(ds, "color", &k);
  CHECK(k == 3);
  for (Eigen::Index r = 0; r < ds.rows(); ++r)
    CHECK(labels[static_cast<std::size_t>(r)] == static_cast<int>(ds.values(r, 2)));

  // numerical label column: distinct sorted values become class ids
  Dataset num = dataset_from_table(parse_csv("v,q\n1,7\n2,3\n3,7\n4,5\n"));
  std::vector<int> ql = extract_labels(num, "q", &k);
  CHECK(k == 3);
  CHECK(ql == std::vector<int>{2, 0, 2, 1});

  CHECK_THROWS_AS(extract_labels(ds, "nope", nullptr), ConfigError);
  Dataset masked = apply_mcar(ds, 0.4, 9);
  CHECK_THROWS_AS(extract_labels(masked, "color", nullptr), DataError);
}

TEST_CASE("dropping a column removes exactly that column") {
  Dataset ds = make_observed_mixed(10, 4);
  Dataset out = drop_column(ds, "y");
  CHECK(out.cols() == 2);
  CHECK(out.schema[0].name == "x");
  CHECK(out.schema[1].name == "color");
  CHECK((out.values.col(0).array() == ds.values.col(0).array()).all());
  CHECK((out.values.col(1).array() == ds.values.col(2).array()).all());

  CHECK_THROWS_AS(drop_column(ds, "nope"), ConfigError);
  Dataset single = dataset_from_table(parse_csv("a\n1\n2\n"));
  CHECK_THROWS_AS(drop_column(single, "a"), DataError);
}

TEST_CASE("the benchmark runs every cell in canonical order with shared masks") {
  Dataset full = make_observed_mixed(48, 77);
  BenchmarkSpec spec;
  spec.methods = {"mean", "gain", "pcgain"};
  spec.missing_rates = {0.3};
  spec.folds = 2;
  spec.repeats = 2;
  spec.base_seed = 11;
  spec.dataset_name = "mixed-toy";
  spec.label_column = "color";
  spec.train = tiny_train();

  BenchmarkResult result = run_benchmark(full, spec);

  REQUIRE(result.cells.size() == 12);  // 3 methods x 1 rate x 2 repeats x 2 folds
  std::size_t idx = 0;
  for (const std::string& method : spec.methods)
    for (int t = 0; t < spec.repeats; ++t)
      for (int f = 0; f < spec.folds; ++f) {
        const CellResult& cell = result.cells[idx++];
        CHECK(cell.method == method);
        CHECK(cell.rate == 0.3);
        CHECK(cell.repeat_index == t);
        CHECK(cell.fold == f);
        CHECK(cell.status == "ok");
        CHECK(std::isfinite(cell.rmse));
        CHECK(cell.rmse > 0.0);
        CHECK(cell.accuracy >= 0.0);
        CHECK(cell.accuracy <= 1.0);
        if (method == "pcgain") {
          CHECK(std::isfinite(cell.entropy_initial));
          CHECK(std::isfinite(cell.entropy_final));
        } else {
          CHECK(std::isnan(cell.entropy_initial));
        }
      }

  // the same (rate, repeat, fold) slice sees the same mask and fold split no
  // matter the method: the clamp counts, which depend only on those, agree
  for (int t = 0; t < spec.repeats; ++t)
    for (int f = 0; f < spec.folds; ++f) {
      const long mean_clamps = result.cells[
          static_cast<std::size_t>(t * spec.folds + f)].clamped_cells;
      for (std::size_t mi = 1; mi < spec.methods.size(); ++mi)
        CHECK(result.cells[mi * 4 + static_cast<std::size_t>(t * spec.folds + f)]
                  .clamped_cells == mean_clamps);
    }

  REQUIRE(result.summaries.size() == 3);
  for (const MethodRateSummary& s : result.summaries) {
    CHECK(s.cells_total == 4);
    CHECK(s.cells_failed == 0);
    CHECK(s.rmse_values.size() == 4);
    const double expected_mean =
        (s.rmse_values[0] + s.rmse_values[1] + s.rmse_values[2] + s.rmse_values[3]) / 4.0;
    CHECK(s.rmse_mean == doctest::Approx(expected_mean).epsilon(1e-12));
    CHECK(s.rmse_std.has_value());
  }

  // byte-level reproducibility: a worker pool must not change any result
  BenchmarkSpec parallel = spec;
  parallel.workers = 3;
  BenchmarkResult threaded = run_benchmark(full, parallel);
  REQUIRE(threaded.cells.size() == result.cells.size());
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    CHECK(threaded.cells[i].status == result.cells[i].status);
    CHECK(threaded.cells[i].rmse == result.cells[i].rmse);
    CHECK(threaded.cells[i].accuracy == result.cells[i].accuracy);
    CHECK(threaded.cells[i].clamped_cells == result.cells[i].clamped_cells);
  }
}

TEST_CASE("benchmark failures are contained in their cells") {
  Dataset full = make_observed_mixed(48, 78);
  BenchmarkSpec spec;
  spec.methods = {"mean", "pcgain"};
  spec.missing_rates = {0.3};
  spec.folds = 2;
  spec.repeats = 1;
  spec.train = tiny_train();
  spec.train.clusters_k = 25;  // more clusters than the pretrain subset has rows

  BenchmarkResult result = run_benchmark(full, spec);
  REQUIRE(result.cells.size() == 4);
  CHECK(result.cells[0].status == "ok");
  CHECK(result.cells[1].status == "ok");
  CHECK(result.cells[2].status.substr(0, 8) == "failed: ");
  CHECK(result.cells[3].status.substr(0, 8) == "failed: ");
  CHECK(std::isnan(result.cells[2].rmse));

  REQUIRE(result.summaries.size() == 2);
  CHECK(result.summaries[0].cells_failed == 0);
  CHECK(result.summaries[1].cells_failed == 2);
  CHECK(result.summaries[1].rmse_values.empty());
  CHECK(std::isnan(result.summaries[1].rmse_mean));
  CHECK(!result.summaries[1].rmse_std.has_value());
}

TEST_CASE("benchmark specs are validated up front") {
  Dataset full = make_observed_mixed(20, 79);
  BenchmarkSpec spec;
  spec.methods = {"mean"};
  spec.missing_rates = {0.3};
  spec.train = tiny_train();

  BenchmarkSpec bad = spec;
  bad.folds = 1;
  CHECK_THROWS_AS(run_benchmark(full, bad), ConfigError);
  bad = spec;
  bad.repeats = 0;
  CHECK_THROWS_AS(run_benchmark(full, bad), ConfigError);
  bad = spec;
  bad.methods = {"knn"};
  CHECK_THROWS_AS(run_benchmark(full, bad), ConfigError);
  bad = spec;
  bad.methods.clear();
  CHECK_THROWS_AS(run_benchmark(full, bad), ConfigError);
  bad = spec;
  bad.missing_rates = {1.0};
  CHECK_THROWS_AS(run_benchmark(full, bad), ConfigError);
  bad = spec;
  bad.missing_rates.clear();
  CHECK_THROWS_AS(run_benchmark(full, bad), ConfigError);
  bad = spec;
  bad.train.lambda = 2.0;
  CHECK_THROWS_AS(run_benchmark(full, bad), ConfigError);

  Dataset masked = apply_mcar(full, 0.2, 5);
  CHECK_THROWS_AS(run_benchmark(masked, spec), DataError);
}

TEST_CASE("benchmark csv and summary writers are byte-deterministic") {
  Dataset full = make_observed_mixed(40, 80);
  BenchmarkSpec spec;
  spec.methods = {"mean"};
  spec.missing_rates = {0.25, 0.5};
  spec.folds = 2;
  spec.repeats = 1;
  spec.dataset_name = "bytes";
  spec.train = tiny_train();
  BenchmarkResult result = run_benchmark(full, spec);

  const auto csv_a = temp_file("pcgain_test_cells_a.csv");
  const auto csv_b = temp_file("pcgain_test_cells_b.csv");
  write_benchmark_csv(result, csv_a.string(), false);
  write_benchmark_csv(result, csv_b.string(), false);
  const std::string a = slurp(csv_a), b = slurp(csv_b);
  CHECK(a == b);
  CHECK(!a.empty());

  CsvTable table = parse_csv(a);
  CHECK(table.header == std::vector<std::string>{"method", "dataset", "rate", "fold", "repeat",
                                                 "rmse", "accuracy", "seconds", "status"});
  REQUIRE(table.rows.size() == result.cells.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    CHECK(table.rows[i][1] == "bytes");
    CHECK(table.rows[i][6] == "");   // no label column -> accuracy empty
    CHECK(table.rows[i][7] == "0");  // timings suppressed
    CHECK(table.rows[i][8] == "ok");
    double rmse = 0.0;
    CHECK(parse_double(table.rows[i][5], rmse));
    CHECK(rmse == result.cells[i].rmse);
  }

  // with timings on, the seconds column carries real durations
  const auto csv_t = temp_file("pcgain_test_cells_t.csv");
  write_benchmark_csv(result, csv_t.string(), true);
  CsvTable timed = parse_csv(slurp(csv_t));
  bool any_positive = false;
  for (const auto& row : timed.rows) {
    double seconds = 0.0;
    if (parse_double(row[7], seconds) && seconds > 0.0) any_positive = true;
  }
  CHECK(any_positive);

  const auto sum_a = temp_file("pcgain_test_summary_a.json");
  const auto sum_b = temp_file("pcgain_test_summary_b.json");
  write_benchmark_summary(result, sum_a.string());
  write_benchmark_summary(result, sum_b.string());
  const std::string ja = slurp(sum_a);
  CHECK(ja == slurp(sum_b));

  const nlohmann::json j = nlohmann::json::parse(ja);
  CHECK(j["dataset"] == "bytes");
  CHECK(j["summaries"].size() == 2);
  CHECK(j["summaries"][0]["cells_total"] == 2);
  CHECK(j["config"]["folds"] == 2);

  for (const auto& p : {csv_a, csv_b, csv_t, sum_a, sum_b}) std::filesystem::remove(p);
}

TEST_CASE("the sweep pairs repeats across values and aggregates a grid") {
  Dataset full = make_observed_mixed(40, 81);
  SweepSpec spec;
  spec.param = "lambda";
  spec.values = {0.5, 1.0};
  spec.missing_rate = 0.3;
  spec.repeats = 2;
  spec.base_seed = 4;
  spec.train = tiny_train();

  SweepResult result = run_sweep(full, spec);
  REQUIRE(result.cells.size() == 4);
  REQUIRE(result.grid.size() == 2);
  std::size_t idx = 0;
  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    double sum = 0.0;
    for (int t = 0; t < spec.repeats; ++t, ++idx) {
      const SweepCell& cell = result.cells[idx];
      CHECK(cell.value == spec.values[vi]);
      CHECK(cell.repeat_index == t);
      CHECK(cell.status == "ok");
      CHECK(std::isfinite(cell.rmse));
      sum += cell.rmse;
    }
    CHECK(result.grid[vi].first == spec.values[vi]);
    CHECK(result.grid[vi].second == doctest::Approx(sum / 2.0).epsilon(1e-12));
  }

  // deterministic, and identical when a worker pool is used
  SweepSpec parallel = spec;
  parallel.workers = 4;
  SweepResult again = run_sweep(full, parallel);
  for (std::size_t i = 0; i < result.cells.size(); ++i)
    CHECK(again.cells[i].rmse == result.cells[i].rmse);

  const auto path = temp_file("pcgain_test_sweep.csv");
  write_sweep_csv(result, path.string());
  CsvTable table = parse_csv(slurp(path));
  CHECK(table.header == std::vector<std::string>{"param", "value", "repeat", "rmse", "status"});
  CHECK(table.rows.size() == 4);
  CHECK(table.rows[0][0] == "lambda");
  std::filesystem::remove(path);
}

TEST_CASE("sweep specs are validated up front") {
  Dataset full = make_observed_mixed(20, 82);
  SweepSpec spec;
  spec.param = "alpha";
  spec.values = {10.0};
  spec.train = tiny_train();

  SweepSpec bad = spec;
  bad.param = "gamma";
  CHECK_THROWS_AS(run_sweep(full, bad), ConfigError);
  bad = spec;
  bad.values.clear();
  CHECK_THROWS_AS(run_sweep(full, bad), ConfigError);
  bad = spec;
  bad.repeats = 0;
  CHECK_THROWS_AS(run_sweep(full, bad), ConfigError);
  bad = spec;
  bad.missing_rate = 0.0;
  CHECK_THROWS_AS(run_sweep(full, bad), ConfigError);

  Dataset masked = apply_mcar(full, 0.2, 5);
  CHECK_THROWS_AS(run_sweep(masked, spec), DataError);

  // an invalid swept value fails softly in its own cells
  SweepSpec soft = spec;
  soft.param = "lambda";
  soft.values = {2.0};
  SweepResult res = run_sweep(full, soft);
  CHECK(res.cells[0].status.substr(0, 8) == "failed: ");
  CHECK(std::isnan(res.grid[0].second));
}
