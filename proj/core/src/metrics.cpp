#include "pcgain/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "pcgain/csv.hpp"
#include "pcgain/errors.hpp"
#include "pcgain/pipeline.hpp"

namespace pcgain {

double rmse_missing(const Eigen::MatrixXd& imputed, const Eigen::MatrixXd& truth,
                    const Eigen::MatrixXd& mask) {
  if (imputed.rows() != truth.rows() || imputed.cols() != truth.cols() ||
      imputed.rows() != mask.rows() || imputed.cols() != mask.cols())
    throw ConfigError("rmse_missing: shape mismatch");
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      if (mask(r, c) == 0.0) {
        const double d = imputed(r, c) - truth(r, c);
        sum += d * d;
        ++count;
      }
  if (count == 0) throw DataError("rmse_missing: no missing coordinates");
  return std::sqrt(sum / static_cast<double>(count));
}

Eigen::RowVectorXd observed_column_fill(const EncodedMatrix& enc) {
  Eigen::RowVectorXd fill(enc.cols());
  for (Eigen::Index c = 0; c < enc.cols(); ++c) {
    const double observed = enc.mask.col(c).sum();
    if (observed == 0.0)
      throw DataError("column " + std::to_string(c) + " has no observed cells");
    fill[c] = (enc.data.col(c).array() * enc.mask.col(c).array()).sum() / observed;
  }
  return fill;
}

Eigen::MatrixXd apply_column_fill(const EncodedMatrix& enc, const Eigen::RowVectorXd& fill) {
  if (fill.size() != enc.cols()) throw ConfigError("apply_column_fill: width mismatch");
  Eigen::MatrixXd out = enc.data;
  for (Eigen::Index r = 0; r < enc.rows(); ++r)
    for (Eigen::Index c = 0; c < enc.cols(); ++c)
      if (enc.mask(r, c) == 0.0) out(r, c) = fill[c];
  return out;
}

Eigen::MatrixXd mean_impute(const EncodedMatrix& enc) {
  return apply_column_fill(enc, observed_column_fill(enc));
}

double post_imputation_accuracy(const Eigen::MatrixXd& train_x, const std::vector<int>& train_y,
                                const Eigen::MatrixXd& test_x, const std::vector<int>& test_y,
                                int num_classes, std::uint64_t seed, long iterations,
                                int batch_size, double learning_rate) {
  const Eigen::Index n = train_x.rows();
  const Eigen::Index dp = train_x.cols();
  if (static_cast<Eigen::Index>(train_y.size()) != n ||
      static_cast<Eigen::Index>(test_y.size()) != test_x.rows())
    throw ConfigError("post_imputation_accuracy: labels do not align with rows");
  if (test_x.cols() != dp) throw ConfigError("post_imputation_accuracy: width mismatch");
  if (num_classes < 2) throw ConfigError("post_imputation_accuracy: need >= 2 classes");
  for (int y : train_y)
    if (y < 0 || y >= num_classes)
      throw ConfigError("post_imputation_accuracy: train label out of range");
  for (int y : test_y)
    if (y < 0 || y >= num_classes)
      throw ConfigError("post_imputation_accuracy: test label out of range");

  Rng rng(seed);
  nn::Net net = nn::make_net({dp, dp, num_classes},
                             {nn::Activation::Sigmoid, nn::Activation::Softmax}, rng);
  nn::AdamState adam = nn::make_adam(net);

  const int batch = std::min<int>(batch_size, static_cast<int>(n));
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Eigen::MatrixXd x(batch, dp);
  std::vector<int> ybatch(static_cast<std::size_t>(batch));
  const double invB = 1.0 / static_cast<double>(batch);

  for (long iter = 0; iter < iterations; ++iter) {
    for (int k = 0; k < batch; ++k) {
      const auto j =
          static_cast<std::size_t>(k) +
          static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - k)));
      std::swap(perm[static_cast<std::size_t>(k)], perm[j]);
      x.row(k) = train_x.row(perm[static_cast<std::size_t>(k)]);
      ybatch[static_cast<std::size_t>(k)] = train_y[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
    }
    nn::ForwardCache cache;
    Eigen::MatrixXd p = nn::forward(net, x, &cache);
    Eigen::MatrixXd dp_grad = Eigen::MatrixXd::Zero(batch, num_classes);
    for (int r = 0; r < batch; ++r) {
      const double pr = p(r, ybatch[static_cast<std::size_t>(r)]);
      dp_grad(r, ybatch[static_cast<std::size_t>(r)]) = -invB / (pr + kLogEps);
    }
    nn::Grads grads = nn::backward(net, cache, dp_grad);
    nn::adam_step(adam, net, grads, learning_rate);
  }

  Eigen::MatrixXd p = nn::forward(net, test_x);
  long correct = 0;
  for (Eigen::Index r = 0; r < test_x.rows(); ++r) {
    int best = 0;
    for (int k = 1; k < num_classes; ++k)
      if (p(r, k) > p(r, best)) best = k;
    if (best == test_y[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_x.rows());
}

std::vector<int> extract_labels(const Dataset& dataset, const std::string& label_column,
                                int* num_classes) {
  Eigen::Index col = -1;
  for (Eigen::Index c = 0; c < dataset.cols(); ++c)
    if (dataset.schema[static_cast<std::size_t>(c)].name == label_column) col = c;
  if (col < 0) throw ConfigError("label column '" + label_column + "' not found");
  if ((dataset.mask.col(col).array() != 1.0).any())
    throw DataError("label column '" + label_column + "' has missing cells");

  const ColumnSpec& spec = dataset.schema[static_cast<std::size_t>(col)];
  std::vector<int> labels(static_cast<std::size_t>(dataset.rows()));
  int classes = 0;
  if (spec.kind == ColumnKind::Categorical) {
    classes = static_cast<int>(spec.vocabulary.size());
    for (Eigen::Index r = 0; r < dataset.rows(); ++r)
      labels[static_cast<std::size_t>(r)] = static_cast<int>(dataset.values(r, col));
  } else {
    std::vector<double> distinct;
    for (Eigen::Index r = 0; r < dataset.rows(); ++r) distinct.push_back(dataset.values(r, col));
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    classes = static_cast<int>(distinct.size());
    for (Eigen::Index r = 0; r < dataset.rows(); ++r) {
      const auto it =
          std::lower_bound(distinct.begin(), distinct.end(), dataset.values(r, col));
      labels[static_cast<std::size_t>(r)] = static_cast<int>(it - distinct.begin());
    }
  }
  if (num_classes) *num_classes = classes;
  return labels;
}

Dataset drop_column(const Dataset& dataset, const std::string& column) {
  Eigen::Index col = -1;
  for (Eigen::Index c = 0; c < dataset.cols(); ++c)
    if (dataset.schema[static_cast<std::size_t>(c)].name == column) col = c;
  if (col < 0) throw ConfigError("column '" + column + "' not found");
  Dataset out;
  const Eigen::Index d = dataset.cols() - 1;
  if (d < 1) throw DataError("dropping '" + column + "' would leave no feature columns");
  out.values.resize(dataset.rows(), d);
  out.mask.resize(dataset.rows(), d);
  if (dataset.ground_truth) out.ground_truth.emplace(dataset.rows(), d);
  Eigen::Index o = 0;
  for (Eigen::Index c = 0; c < dataset.cols(); ++c) {
    if (c == col) continue;
    out.values.col(o) = dataset.values.col(c);
    out.mask.col(o) = dataset.mask.col(c);
    if (dataset.ground_truth) out.ground_truth->col(o) = dataset.ground_truth->col(c);
    out.schema.push_back(dataset.schema[static_cast<std::size_t>(c)]);
    ++o;
  }
  return out;
}

namespace {

struct FoldSplit {
  std::vector<int> train_rows;
  std::vector<int> test_rows;
};

FoldSplit split_fold(Eigen::Index n, int folds, int fold, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t k = 0; k + 1 < perm.size(); ++k) {
    const auto j = k + static_cast<std::size_t>(rng.below(perm.size() - k));
    std::swap(perm[k], perm[j]);
  }
  FoldSplit out;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (static_cast<int>(i % static_cast<std::size_t>(folds)) == fold)
      out.test_rows.push_back(perm[i]);
    else
      out.train_rows.push_back(perm[i]);
  }
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> std_of(const std::vector<double>& v) {
  if (v.size() < 2) return std::nullopt;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// Runs jobs 0..count-1 over `workers` threads; each job writes only its own
// result slot, so assembly order is deterministic regardless of scheduling.
void run_jobs(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      job(i);
    }
  };
  std::vector<std::thread> threads;
  const int t = std::min<int>(workers, static_cast<int>(count));
  threads.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
}

std::string failure_status(const std::exception& e) {
  return std::string("failed: ") + e.what();
}

}  // namespace

BenchmarkResult run_benchmark(const Dataset& full, const BenchmarkSpec& spec) {
  if (spec.folds < 2) throw ConfigError("benchmark: folds must be >= 2");
  if (spec.repeats < 1) throw ConfigError("benchmark: repeats must be >= 1");
  if (spec.methods.empty()) throw ConfigError("benchmark: no methods given");
  for (const auto& m : spec.methods)
    if (m != "mean" && m != "gain" && m != "pcgain")
      throw ConfigError("benchmark: unknown method '" + m + "'");
  if (spec.missing_rates.empty()) throw ConfigError("benchmark: no missing rates given");
  for (double r : spec.missing_rates)
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("benchmark: rates must lie in (0,1)");
  if ((full.mask.array() != 1.0).any())
    throw DataError("benchmark: the input dataset must be fully observed");
  spec.train.validate();

  const bool with_labels = !spec.label_column.empty();
  Dataset feats = with_labels ? drop_column(full, spec.label_column) : full;
  int num_classes = 0;
  std::vector<int> labels;
  if (with_labels) labels = extract_labels(full, spec.label_column, &num_classes);

  BenchmarkResult result;
  result.dataset_name = spec.dataset_name;
  {
    nlohmann::json j;
    j["dataset"] = spec.dataset_name;
    j["methods"] = spec.methods;
    j["missing_rates"] = spec.missing_rates;
    j["folds"] = spec.folds;
    j["repeats"] = spec.repeats;
    j["base_seed"] = spec.base_seed;
    j["label_column"] = spec.label_column;
    j["train"] = nlohmann::json::parse(spec.train.to_json());
    result.config_json = j.dump();
  }

  struct CellKey {
    std::size_t method_index, rate_index;
    int repeat_index, fold;
  };
  std::vector<CellKey> keys;
  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi)
    for (std::size_t ri = 0; ri < spec.missing_rates.size(); ++ri)
      for (int t = 0; t < spec.repeats; ++t)
        for (int f = 0; f < spec.folds; ++f) keys.push_back({mi, ri, t, f});

  result.cells.resize(keys.size());

  auto job = [&](std::size_t idx) {
    const CellKey key = keys[idx];
    const std::string& method = spec.methods[key.method_index];
    const double rate = spec.missing_rates[key.rate_index];
    CellResult cell;
    cell.method = method;
    cell.rate = rate;
    cell.repeat_index = key.repeat_index;
    cell.fold = key.fold;
    const auto started = std::chrono::steady_clock::now();
    try {
      const std::uint64_t rate_seed = derive_seed(spec.base_seed, "rate", key.rate_index);
      const std::uint64_t mask_seed =
          derive_seed(rate_seed, "mask", static_cast<std::uint64_t>(key.repeat_index));
      const std::uint64_t fold_seed =
          derive_seed(rate_seed, "folds", static_cast<std::uint64_t>(key.repeat_index));
      const std::uint64_t cell_seed = derive_seed(
          derive_seed(rate_seed, "method-" + method,
                      static_cast<std::uint64_t>(key.repeat_index)),
          "fold", static_cast<std::uint64_t>(key.fold));

      Dataset masked = apply_mcar(feats, rate, mask_seed);
      FoldSplit split = split_fold(masked.rows(), spec.folds, key.fold, fold_seed);

      Dataset train_ds = take_rows(masked, split.train_rows);
      fit_scaling(train_ds);

      // Encode everything in the train fold's scale; held-out observed values
      // outside the fitted bounds clamp (and are counted).
      Dataset masked_scaled = masked;
      masked_scaled.schema = train_ds.schema;
      EncodedMatrix enc_all = encode(masked_scaled);
      cell.clamped_cells = enc_all.clamped_cells;
      EncodedMatrix enc_train = take_rows(enc_all, split.train_rows);
      EncodedMatrix enc_test = take_rows(enc_all, split.test_rows);

      Dataset truth_scaled = feats;
      truth_scaled.schema = train_ds.schema;
      EncodedMatrix enc_truth = encode(truth_scaled);
      EncodedMatrix truth_test = take_rows(enc_truth, split.test_rows);

      TrainConfig cfg = spec.train;
      cfg.seed = cell_seed;
      cfg.batch_size =
          std::min<int>(cfg.batch_size, static_cast<int>(enc_train.rows()));

      Eigen::MatrixXd imputed_test, imputed_train;
      if (method == "mean") {
        const Eigen::RowVectorXd fill = observed_column_fill(enc_train);
        imputed_test = apply_column_fill(enc_test, fill);
        if (with_labels) imputed_train = apply_column_fill(enc_train, fill);
      } else if (method == "gain") {
        GainTrainResult trained = train_gain(enc_train, cfg);
        imputed_test = impute(trained.model, enc_test, derive_seed(cell_seed, "impute"),
                              cfg.noise_scale);
        if (with_labels)
          imputed_train = impute(trained.model, enc_train,
                                 derive_seed(cell_seed, "impute-train"), cfg.noise_scale);
      } else {
        PcgainModels models = fit_pcgain(train_ds, cfg);
        cell.entropy_initial = models.entropy_initial;
        cell.entropy_final = models.entropy_final;
        imputed_test = impute(models.final_model, enc_test, derive_seed(cell_seed, "impute"),
                              cfg.noise_scale);
        if (with_labels)
          imputed_train = impute(models.final_model, enc_train,
                                 derive_seed(cell_seed, "impute-train"), cfg.noise_scale);
      }

      cell.rmse = rmse_missing(imputed_test, truth_test.data, enc_test.mask);

      if (with_labels) {
        std::vector<int> y_train, y_test;
        y_train.reserve(split.train_rows.size());
        y_test.reserve(split.test_rows.size());
        for (int r : split.train_rows) y_train.push_back(labels[static_cast<std::size_t>(r)]);
        for (int r : split.test_rows) y_test.push_back(labels[static_cast<std::size_t>(r)]);
        cell.accuracy =
            post_imputation_accuracy(imputed_train, y_train, imputed_test, y_test, num_classes,
                                     derive_seed(cell_seed, "downstream"));
      }
    } catch (const std::exception& e) {
      cell.status = failure_status(e);
    }
    cell.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.cells[idx] = std::move(cell);
  };

  run_jobs(keys.size(), spec.workers, job);

  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    for (std::size_t ri = 0; ri < spec.missing_rates.size(); ++ri) {
      MethodRateSummary s;
      s.method = spec.methods[mi];
      s.rate = spec.missing_rates[ri];
      for (std::size_t idx = 0; idx < keys.size(); ++idx) {
        if (keys[idx].method_index != mi || keys[idx].rate_index != ri) continue;
        const CellResult& cell = result.cells[idx];
        ++s.cells_total;
        if (cell.status != "ok") {
          ++s.cells_failed;
          continue;
        }
        s.rmse_values.push_back(cell.rmse);
        if (!std::isnan(cell.accuracy)) s.accuracy_values.push_back(cell.accuracy);
      }
      s.rmse_mean = mean_of(s.rmse_values);
      s.rmse_std = std_of(s.rmse_values);
      s.accuracy_mean = mean_of(s.accuracy_values);
      s.accuracy_std = std_of(s.accuracy_values);
      result.summaries.push_back(std::move(s));
    }
  }
  return result;
}

namespace {

std::string field_or_empty(double v) {
  return std::isnan(v) ? std::string() : format_double(v);
}

}  // namespace

void write_benchmark_csv(const BenchmarkResult& result, const std::string& path,
                         bool with_timings) {
  CsvTable table;
  table.header = {"method", "dataset", "rate",    "fold",  "repeat",
                  "rmse",   "accuracy", "seconds", "status"};
  for (const CellResult& c : result.cells) {
    table.rows.push_back({c.method, result.dataset_name, format_double(c.rate),
                          std::to_string(c.fold), std::to_string(c.repeat_index),
                          field_or_empty(c.rmse), field_or_empty(c.accuracy),
                          with_timings ? format_double(c.seconds) : "0", c.status});
  }
  write_csv(table, path);
}

void write_benchmark_summary(const BenchmarkResult& result, const std::string& path) {
  nlohmann::json j;
  j["dataset"] = result.dataset_name;
  j["config"] = nlohmann::json::parse(result.config_json);
  nlohmann::json rows = nlohmann::json::array();
  for (const MethodRateSummary& s : result.summaries) {
    nlohmann::json r;
    r["method"] = s.method;
    r["rate"] = s.rate;
    r["cells_total"] = s.cells_total;
    r["cells_failed"] = s.cells_failed;
    r["rmse_mean"] = s.rmse_mean;
    r["rmse_std"] = s.rmse_std ? nlohmann::json(*s.rmse_std) : nlohmann::json();
    r["rmse_values"] = s.rmse_values;
    r["accuracy_mean"] = s.accuracy_mean;
    r["accuracy_std"] = s.accuracy_std ? nlohmann::json(*s.accuracy_std) : nlohmann::json();
    r["accuracy_values"] = s.accuracy_values;
    rows.push_back(std::move(r));
  }
  j["summaries"] = std::move(rows);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failure on '" + path + "'");
}

SweepResult run_sweep(const Dataset& full, const SweepSpec& spec) {
  if (spec.param != "alpha" && spec.param != "beta" && spec.param != "lambda" &&
      spec.param != "clusters_k")
    throw ConfigError("sweep: param must be one of alpha, beta, lambda, clusters_k");
  if (spec.values.empty()) throw ConfigError("sweep: no values given");
  if (spec.repeats < 1) throw ConfigError("sweep: repeats must be >= 1");
  if (!(spec.missing_rate > 0.0 && spec.missing_rate < 1.0))
    throw ConfigError("sweep: missing_rate must lie in (0,1)");
  if ((full.mask.array() != 1.0).any())
    throw DataError("sweep: the input dataset must be fully observed");
  spec.train.validate();

  SweepResult result;
  result.param = spec.param;
  result.cells.resize(spec.values.size() * static_cast<std::size_t>(spec.repeats));

  auto job = [&](std::size_t idx) {
    const std::size_t vi = idx / static_cast<std::size_t>(spec.repeats);
    const int t = static_cast<int>(idx % static_cast<std::size_t>(spec.repeats));
    SweepCell cell;
    cell.value = spec.values[vi];
    cell.repeat_index = t;
    try {
      TrainConfig cfg = spec.train;
      if (spec.param == "alpha") cfg.alpha = cell.value;
      if (spec.param == "beta") cfg.beta = cell.value;
      if (spec.param == "lambda") cfg.lambda = cell.value;
      if (spec.param == "clusters_k") cfg.clusters_k = static_cast<int>(std::lround(cell.value));
      cfg.validate();
      // The mask and training seeds depend only on the repeat, so the runs are
      // paired across values.
      Dataset masked = apply_mcar(full, spec.missing_rate,
                                  derive_seed(spec.base_seed, "sweep-mask",
                                              static_cast<std::uint64_t>(t)));
      fit_scaling(masked);
      cfg.seed = derive_seed(spec.base_seed, "sweep-train", static_cast<std::uint64_t>(t));
      cfg.batch_size = std::min<int>(cfg.batch_size, static_cast<int>(masked.rows()));

      PcgainModels models = fit_pcgain(masked, cfg);
      EncodedMatrix enc = encode(masked);
      Eigen::MatrixXd imputed = impute(models.final_model, enc,
                                       derive_seed(cfg.seed, "impute"), cfg.noise_scale);
      Dataset truth_scaled = full;
      truth_scaled.schema = masked.schema;
      EncodedMatrix enc_truth = encode(truth_scaled);
      cell.rmse = rmse_missing(imputed, enc_truth.data, enc.mask);
    } catch (const std::exception& e) {
      cell.status = failure_status(e);
    }
    result.cells[idx] = std::move(cell);
  };
  run_jobs(result.cells.size(), spec.workers, job);

  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    std::vector<double> ok;
    for (int t = 0; t < spec.repeats; ++t) {
      const SweepCell& c = result.cells[vi * static_cast<std::size_t>(spec.repeats) +
                                        static_cast<std::size_t>(t)];
      if (c.status == "ok") ok.push_back(c.rmse);
    }
    result.grid.emplace_back(spec.values[vi], mean_of(ok));
  }
  return result;
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
  CsvTable table;
  table.header = {"param", "value", "repeat", "rmse", "status"};
  for (const SweepCell& c : result.cells)
    table.rows.push_back({result.param, format_double(c.value), std::to_string(c.repeat_index),
                          field_or_empty(c.rmse), c.status});
  write_csv(table, path);
}

}  // namespace pcgain
