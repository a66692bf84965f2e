#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pcgain/dataset.hpp"
#include "pcgain/gain.hpp"

namespace pcgain {

// Root mean squared error over coordinates with mask = 0, in encoded space.
double rmse_missing(const Eigen::MatrixXd& imputed, const Eigen::MatrixXd& truth,
                    const Eigen::MatrixXd& mask);

// Per-column fill values from observed cells: the mean for scaled numerical
// columns, the observed category frequency for one-hot coordinates.
Eigen::RowVectorXd observed_column_fill(const EncodedMatrix& enc);

// Missing coordinates replaced by the fill row (defaults to the matrix's own
// observed statistics).
Eigen::MatrixXd mean_impute(const EncodedMatrix& enc);
Eigen::MatrixXd apply_column_fill(const EncodedMatrix& enc, const Eigen::RowVectorXd& fill);

// Fixed downstream classifier (one Sigmoid hidden layer of the input width,
// Softmax out, Adam, fixed budget): trains on the imputed training rows and
// returns test accuracy. Deterministic given the seed.
double post_imputation_accuracy(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                                const Eigen::MatrixXd& test_x, const std::vector<int>& test_y,
                                int num_classes, std::uint64_t seed, long iterations = 2000,
                                int batch_size = 128, double learning_rate = 1e-3);

struct BenchmarkSpec {
  std::vector<std::string> methods;  // subset of {"mean","gain","pcgain"}
  std::vector<double> missing_rates;
  int folds = 5;
  int repeats = 10;
  std::uint64_t base_seed = 0;
  int workers = 1;
  std::string dataset_name = "dataset";
  std::string label_column;  // optional: enables post-imputation accuracy
  TrainConfig train;
};

struct CellResult {
  std::string method;
  double rate = 0.0;
  int repeat_index = 0;
  int fold = 0;
  std::string status = "ok";  // or "failed: <reason>"
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
  long clamped_cells = 0;  // held-out observed values outside the train-fold bounds
  // pcgain only: classifier entropy over imputed training rows at the stage-3
  // start and end.
  double entropy_initial = std::numeric_limits<double>::quiet_NaN();
  double entropy_final = std::numeric_limits<double>::quiet_NaN();
};

struct MethodRateSummary {
  std::string method;
  double rate = 0.0;
  int cells_total = 0;
  int cells_failed = 0;
  std::vector<double> rmse_values;  // successful cells, canonical order
  std::vector<double> accuracy_values;
  double rmse_mean = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> rmse_std;  // absent below 2 values
  double accuracy_mean = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> accuracy_std;
};

struct BenchmarkResult {
  std::string dataset_name;
  std::vector<CellResult> cells;  // canonical order: method, rate, repeat, fold
  std::vector<MethodRateSummary> summaries;
  std::string config_json;
};

// The cross-validated protocol: per (rate, repeat) the fully observed dataset
// is masked with a shared seed and rows are partitioned into folds; per cell
// the training fold rows fit the scaling and the models, and RMSE is taken
// over the missing coordinates of the held-out rows. Failures are recorded in
// the cell status. Deterministic given base_seed, independent of workers.
BenchmarkResult run_benchmark(const Dataset& full, const BenchmarkSpec& spec);

void write_benchmark_csv(const BenchmarkResult& result, const std::string& path,
                         bool with_timings);
void write_benchmark_summary(const BenchmarkResult& result, const std::string& path);

struct SweepSpec {
  std::string param;  // one of alpha, beta, lambda, clusters_k
  std::vector<double> values;
  double missing_rate = 0.5;
  int repeats = 3;
  std::uint64_t base_seed = 0;
  int workers = 1;
  std::string dataset_name = "dataset";
  TrainConfig train;
};

struct SweepCell {
  double value = 0.0;
  int repeat_index = 0;
  std::string status = "ok";
  double rmse = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  std::string param;
  std::vector<SweepCell> cells;
  // per value: mean rmse over successful repeats (NaN if none)
  std::vector<std::pair<double, double>> grid;
};

// One whole-dataset pipeline run per (value, repeat): mask with a
// repeat-specific seed shared across values, fit on the masked data, impute
// everything, report RMSE over all missing coordinates.
SweepResult run_sweep(const Dataset& full, const SweepSpec& spec);

void write_sweep_csv(const SweepResult& result, const std::string& path);

// Maps a label column to dense class ids (vocabulary order for categorical
// columns, sorted distinct values for numerical ones).
std::vector<int> extract_labels(const Dataset& dataset, const std::string& label_column,
                                int* num_classes);

// Copy of the dataset without the named column.
Dataset drop_column(const Dataset& dataset, const std::string& column);

}  // namespace pcgain
