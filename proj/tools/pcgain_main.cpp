// pcgain: mask generation, imputation, benchmarking, and gradient self-check
// over CSV datasets.
//
// Exit codes:
//   0  success
//   1  generic failure (including gradcheck above tolerance)
//   2  configuration error (bad flags, bad config file, invalid bounds)
//   3  data error (unreadable/ragged CSV, nothing to impute, ...)
//   4  training divergence (non-finite loss or gradient)
//   5  benchmark completed but at least one cell failed
//
// Environment:
//   PCGAIN_WORKERS  default worker count for `benchmark` (flag overrides)
//   PCGAIN_TIMINGS  when set to 1, timing columns/fields are emitted; left
//                   out by default so repeated runs are byte-identical

#include <CLI11.hpp>

#include <Eigen/Core>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcgain/checkpoint.hpp"
#include "pcgain/csv.hpp"
#include "pcgain/dataset.hpp"
#include "pcgain/errors.hpp"
#include "pcgain/gain.hpp"
#include "pcgain/hash.hpp"
#include "pcgain/metrics.hpp"
#include "pcgain/net.hpp"
#include "pcgain/pipeline.hpp"
#include "pcgain/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pcgain;

namespace {

// ---------------------------------------------------------------------------
// Environment helpers

bool timings_enabled() {
  const char* v = std::getenv("PCGAIN_TIMINGS");
  return v != nullptr && std::string(v) == "1";
}

std::optional<int> env_workers() {
  const char* v = std::getenv("PCGAIN_WORKERS");
  if (v == nullptr) return std::nullopt;
  const std::string s(v);
  int out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size() || out <= 0)
    throw ConfigError("PCGAIN_WORKERS must be a positive integer, got '" + s + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Flat key=value run configuration (mirrors TrainConfig plus run-level keys).

struct RunConfig {
  TrainConfig train;
  std::string input;
  std::string label_column;
  std::string output_dir;
  std::optional<int> workers;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long parse_long_field(const std::string& key, const std::string& value) {
  long out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
  return out;
}

double parse_double_field(const std::string& key, const std::string& value) {
  double out = 0.0;
  if (!parse_double(value, out))
    throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
  return out;
}

bool parse_bool_field(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + value + "'");
}

std::vector<Eigen::Index> parse_width_list(const std::string& key, const std::string& value) {
  std::vector<Eigen::Index> widths;
  if (trim(value).empty()) return widths;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    widths.push_back(static_cast<Eigen::Index>(parse_long_field(key, trim(item))));
  return widths;
}

std::uint64_t parse_seed_field(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size())
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + value +
                      "'");
  return out;
}

// `#` starts a comment; blank lines are skipped; unknown and duplicate keys
// are rejected so typos cannot silently fall back to defaults.
RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");

  RunConfig cfg;
  std::vector<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) + " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config: line " + std::to_string(line_no) + " has an empty key");
    for (const auto& s : seen)
      if (s == key) throw ConfigError("config: duplicate key '" + key + "'");
    seen.push_back(key);

    if (key == "alpha") cfg.train.alpha = parse_double_field(key, value);
    else if (key == "beta") cfg.train.beta = parse_double_field(key, value);
    else if (key == "lambda") cfg.train.lambda = parse_double_field(key, value);
    else if (key == "clusters_k")
      cfg.train.clusters_k = static_cast<int>(parse_long_field(key, value));
    else if (key == "hint_rate") cfg.train.hint_rate = parse_double_field(key, value);
    else if (key == "noise_scale") cfg.train.noise_scale = parse_double_field(key, value);
    else if (key == "batch_size")
      cfg.train.batch_size = static_cast<int>(parse_long_field(key, value));
    else if (key == "iterations") cfg.train.iterations = parse_long_field(key, value);
    else if (key == "learning_rate") cfg.train.learning_rate = parse_double_field(key, value);
    else if (key == "seed") cfg.train.seed = parse_seed_field(key, value);
    else if (key == "hidden_widths") cfg.train.hidden_widths = parse_width_list(key, value);
    else if (key == "classifier_iterations")
      cfg.train.classifier_iterations = parse_long_field(key, value);
    else if (key == "kmeans_max_iters") cfg.train.kmeans_max_iters = parse_long_field(key, value);
    else if (key == "kmeans_restarts")
      cfg.train.kmeans_restarts = static_cast<int>(parse_long_field(key, value));
    else if (key == "warm_start_stage3")
      cfg.train.warm_start_stage3 = parse_bool_field(key, value);
    else if (key == "input") cfg.input = value;
    else if (key == "label_column") cfg.label_column = value;
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "workers") {
      const int w = static_cast<int>(parse_long_field(key, value));
      if (w <= 0) throw ConfigError("config: workers must be positive");
      cfg.workers = w;
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Training flags shared by `impute` and `benchmark`; flags override the
// config file, the config file overrides built-in defaults.

struct TrainFlags {
  double alpha = 0, beta = 0, lambda = 0, hint_rate = 0, noise_scale = 0, learning_rate = 0;
  long iterations = 0, classifier_iterations = 0, kmeans_max_iters = 0;
  int clusters_k = 0, batch_size = 0, kmeans_restarts = 0;
  std::string hidden;
  bool warm_start_stage3 = false;

  CLI::Option* alpha_o = nullptr;
  CLI::Option* beta_o = nullptr;
  CLI::Option* lambda_o = nullptr;
  CLI::Option* clusters_o = nullptr;
  CLI::Option* hint_o = nullptr;
  CLI::Option* noise_o = nullptr;
  CLI::Option* batch_o = nullptr;
  CLI::Option* iters_o = nullptr;
  CLI::Option* lr_o = nullptr;
  CLI::Option* hidden_o = nullptr;
  CLI::Option* cls_iters_o = nullptr;
  CLI::Option* km_iters_o = nullptr;
  CLI::Option* km_restarts_o = nullptr;
  CLI::Option* warm_o = nullptr;

  void add_to(CLI::App* cmd) {
    alpha_o = cmd->add_option("--alpha", alpha, "Reconstruction loss weight");
    beta_o = cmd->add_option("--beta", beta, "Classifier entropy weight (pcgain stage 3)");
    lambda_o = cmd->add_option("--lambda", lambda, "Pretraining subset fraction (pcgain)");
    clusters_o = cmd->add_option("--clusters-k", clusters_k, "Pseudo-label cluster count");
    hint_o = cmd->add_option("--hint-rate", hint_rate, "Mask reveal probability for hints");
    noise_o = cmd->add_option("--noise-scale", noise_scale, "Input noise upper bound");
    batch_o = cmd->add_option("--batch-size", batch_size, "Minibatch size");
    iters_o = cmd->add_option("--iterations", iterations, "Adversarial training iterations");
    lr_o = cmd->add_option("--learning-rate", learning_rate, "Adam learning rate");
    hidden_o = cmd->add_option("--hidden", hidden,
                               "Comma-separated hidden layer widths (empty: two layers "
                               "of the encoded width)");
    cls_iters_o = cmd->add_option("--classifier-iterations", classifier_iterations,
                                  "Classifier training iterations (pcgain)");
    km_iters_o = cmd->add_option("--kmeans-max-iters", kmeans_max_iters,
                                 "Lloyd iteration cap (pcgain)");
    km_restarts_o = cmd->add_option("--kmeans-restarts", kmeans_restarts,
                                    "Clustering restarts, best inertia wins (pcgain)");
    warm_o = cmd->add_flag("--warm-start-stage3", warm_start_stage3,
                           "Reuse pretrained weights in stage 3 instead of a fresh init");
  }

  void apply(TrainConfig& t) const {
    if (alpha_o->count()) t.alpha = alpha;
    if (beta_o->count()) t.beta = beta;
    if (lambda_o->count()) t.lambda = lambda;
    if (clusters_o->count()) t.clusters_k = clusters_k;
    if (hint_o->count()) t.hint_rate = hint_rate;
    if (noise_o->count()) t.noise_scale = noise_scale;
    if (batch_o->count()) t.batch_size = batch_size;
    if (iters_o->count()) t.iterations = iterations;
    if (lr_o->count()) t.learning_rate = learning_rate;
    if (hidden_o->count()) t.hidden_widths = parse_width_list("--hidden", hidden);
    if (cls_iters_o->count()) t.classifier_iterations = classifier_iterations;
    if (km_iters_o->count()) t.kmeans_max_iters = kmeans_max_iters;
    if (km_restarts_o->count()) t.kmeans_restarts = kmeans_restarts;
    if (warm_o->count()) t.warm_start_stage3 = warm_start_stage3;
  }
};

SchemaHint hint_from(const std::vector<std::string>& categorical) {
  SchemaHint hint;
  for (const auto& name : categorical) hint[name] = ColumnKind::Categorical;
  return hint;
}

// ---------------------------------------------------------------------------
// Shared output helpers

std::string field_for_value(const ColumnSpec& col, double value) {
  if (col.kind == ColumnKind::Categorical) {
    const auto idx = static_cast<std::size_t>(value);
    if (idx >= col.vocabulary.size())
      throw DataError("decode produced an out-of-vocabulary index for column '" + col.name + "'");
    return col.vocabulary[idx];
  }
  return format_double(value);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

json config_to_json(const TrainConfig& t) { return json::parse(t.to_json()); }

void write_manifest(const fs::path& path, json manifest, double wall_seconds) {
  // Wall-clock time varies between runs, so it is only recorded when timings
  // are explicitly requested; the default manifest is byte-stable.
  manifest["wall_clock_seconds"] = timings_enabled() ? json(wall_seconds) : json(nullptr);
  write_text_file(path.string(), manifest.dump(2) + "\n");
}

long count_missing(const Dataset& ds) {
  return static_cast<long>((ds.mask.array() == 0.0).count());
}

// ---------------------------------------------------------------------------
// mask: hide cells at a fixed rate, writing the masked CSV and the 0/1 mask.

int cmd_mask(const std::string& input, const std::string& output, std::string mask_output,
             double rate, std::uint64_t seed, const std::vector<std::string>& categorical) {
  const CsvTable table = read_csv(input);
  const Dataset ds = dataset_from_table(table, hint_from(categorical));
  const Dataset masked = apply_mcar(ds, rate, seed);

  if (mask_output.empty()) {
    fs::path p(output);
    p.replace_extension(".mask.csv");
    mask_output = p.string();
  }

  CsvTable out = table;
  CsvTable mask_table;
  mask_table.header = table.header;
  mask_table.rows.assign(table.n_rows(), std::vector<std::string>(table.n_cols()));
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    for (std::size_t c = 0; c < table.n_cols(); ++c) {
      const bool observed = masked.mask(static_cast<Eigen::Index>(r),
                                        static_cast<Eigen::Index>(c)) == 1.0;
      if (!observed) out.rows[r][c].clear();
      mask_table.rows[r][c] = observed ? "1" : "0";
    }
  }
  write_csv(out, output);
  write_csv(mask_table, mask_output);

  std::cout << "masked " << count_missing(masked) << " of " << ds.rows() * ds.cols()
            << " cells -> " << output << " (mask: " << mask_output << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// impute: complete a CSV with missing fields; observed fields are copied
// through textually untouched.

struct ImputeArtifacts {
  std::vector<StageAudit> stages;
  json artifacts = json::object();
  json extra = json::object();
};

ImputeArtifacts run_mean(Eigen::MatrixXd& completed_encoded, const EncodedMatrix& enc) {
  const Eigen::RowVectorXd fill = observed_column_fill(enc);
  completed_encoded = apply_column_fill(enc, fill);
  ImputeArtifacts a;
  a.stages.push_back({"fill", hash_matrix(enc.data), hash_matrix(completed_encoded)});
  return a;
}

ImputeArtifacts run_gain(const TrainConfig& train, const fs::path& outdir,
                         Eigen::MatrixXd& completed_encoded, const EncodedMatrix& enc) {
  GainTrainResult r = train_gain(enc, train);
  completed_encoded = impute(r.model, enc, derive_seed(train.seed, "impute"), train.noise_scale);

  Checkpoint ckpt;
  ckpt.kind = "gain";
  ckpt.config_json = train.to_json();
  ckpt.nets.emplace_back("generator", r.model.generator);
  ckpt.nets.emplace_back("discriminator", r.model.discriminator);
  const fs::path path = outdir / "model.ckpt";
  save_checkpoint(ckpt, path.string());

  ImputeArtifacts a;
  a.stages.push_back({"train", hash_matrix(enc.data), checkpoint_hash(ckpt)});
  a.artifacts["checkpoints"] = {{"model", {{"path", path.string()}, {"hash", checkpoint_hash(ckpt)}}}};
  return a;
}

ImputeArtifacts run_pcgain_cmd(const Dataset& ds, const TrainConfig& train, const fs::path& outdir,
                               Eigen::MatrixXd& completed_encoded) {
  PipelineResult pr = run_pipeline(ds, train);
  completed_encoded = pr.imputed_encoded;

  auto save = [&](const char* name, const char* kind,
                  std::vector<std::pair<std::string, nn::Net>> nets) {
    Checkpoint ckpt;
    ckpt.kind = kind;
    ckpt.config_json = train.to_json();
    ckpt.nets = std::move(nets);
    const fs::path path = outdir / (std::string(name) + ".ckpt");
    save_checkpoint(ckpt, path.string());
    return json{{"path", path.string()}, {"hash", checkpoint_hash(ckpt)}};
  };

  ImputeArtifacts a;
  a.stages = pr.models.audits;
  json ckpts;
  ckpts["pretrain"] = save("pretrain", "gain",
                           {{"generator", pr.models.pretrain_model.generator},
                            {"discriminator", pr.models.pretrain_model.discriminator}});
  ckpts["classifier"] = save("classifier", "classifier",
                             {{"classifier", pr.models.classifier.model.net}});
  ckpts["final"] = save("final", "gain",
                        {{"generator", pr.models.final_model.generator},
                         {"discriminator", pr.models.final_model.discriminator}});
  a.artifacts["checkpoints"] = ckpts;

  CsvTable labels;
  labels.header = {"row", "pseudo_label"};
  for (std::size_t i = 0; i < pr.models.pseudo.labels.size(); ++i)
    labels.rows.push_back({std::to_string(pr.models.pseudo.source_rows[i]),
                           std::to_string(pr.models.pseudo.labels[i])});
  const fs::path labels_path = outdir / "pseudo_labels.csv";
  write_csv(labels, labels_path.string());
  a.artifacts["pseudo_labels"] = labels_path.string();

  a.extra["entropy_initial"] = pr.models.entropy_initial;
  a.extra["entropy_final"] = pr.models.entropy_final;
  a.extra["pretrain_rows"] = pr.models.subset_rows.size();
  return a;
}

int cmd_impute(const std::string& input, const std::string& output, const std::string& method,
               const TrainConfig& train, const std::string& outdir_flag,
               const std::vector<std::string>& categorical) {
  const auto t0 = std::chrono::steady_clock::now();

  const CsvTable table = read_csv(input);
  Dataset ds = dataset_from_table(table, hint_from(categorical));
  const long missing = count_missing(ds);
  if (missing == 0) throw DataError("impute: input is fully observed, nothing to impute");
  fit_scaling(ds);

  const fs::path out_path(output);
  const fs::path outdir =
      outdir_flag.empty() ? (out_path.has_parent_path() ? out_path.parent_path() : fs::path("."))
                          : fs::path(outdir_flag);
  fs::create_directories(outdir);

  EncodedMatrix enc = encode(ds);
  Eigen::MatrixXd completed;
  ImputeArtifacts art;
  if (method == "mean") art = run_mean(completed, enc);
  else if (method == "gain") art = run_gain(train, outdir, completed, enc);
  else if (method == "pcgain") art = run_pcgain_cmd(ds, train, outdir, completed);
  else throw ConfigError("impute: unknown method '" + method + "'");

  EncodedMatrix done = enc;
  done.data = completed;
  done.mask.setOnes();
  const Dataset decoded = decode(done, ds.schema);

  // Only fields of missing cells are rewritten; observed fields keep their
  // original text exactly.
  CsvTable out = table;
  for (Eigen::Index r = 0; r < ds.rows(); ++r)
    for (Eigen::Index c = 0; c < ds.cols(); ++c)
      if (ds.mask(r, c) == 0.0)
        out.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
            field_for_value(ds.schema[static_cast<std::size_t>(c)], decoded.values(r, c));
  write_csv(out, output);

  json manifest;
  manifest["command"] = "impute";
  manifest["method"] = method;
  manifest["input"] = input;
  manifest["output"] = output;
  manifest["rows"] = ds.rows();
  manifest["columns"] = ds.cols();
  manifest["missing_cells"] = missing;
  manifest["config"] = config_to_json(train);
  json stages = json::array();
  for (const auto& s : art.stages)
    stages.push_back({{"stage", s.stage}, {"input_hash", s.input_hash},
                      {"output_hash", s.output_hash}});
  manifest["stages"] = stages;
  manifest["artifacts"] = art.artifacts;
  for (auto& [k, v] : art.extra.items()) manifest[k] = v;

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(outdir / "manifest.json", std::move(manifest), secs);

  std::cout << "imputed " << missing << " cells with " << method << " -> " << output << "\n";
  if (timings_enabled()) std::cout << "wall_clock_seconds " << secs << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// benchmark: cross-validated RMSE (and optional downstream accuracy) over a
// methods x rates grid on a fully observed dataset.

std::vector<double> parse_rate_list(const std::string& value) {
  std::vector<double> rates;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    rates.push_back(parse_double_field("--rates", trim(item)));
  return rates;
}

std::vector<std::string> parse_name_list(const std::string& value) {
  std::vector<std::string> names;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) names.push_back(trim(item));
  return names;
}

int cmd_benchmark(const std::string& input, const std::string& outdir_flag,
                  const std::string& label_col, const std::string& methods,
                  const std::string& rates, int folds, int repeats, std::uint64_t base_seed,
                  std::optional<int> workers_flag, const RunConfig& run,
                  const std::vector<std::string>& categorical) {
  const auto t0 = std::chrono::steady_clock::now();

  const Dataset ds = load_csv(input, hint_from(categorical));

  BenchmarkSpec spec;
  spec.methods = parse_name_list(methods);
  spec.missing_rates = parse_rate_list(rates);
  spec.folds = folds;
  spec.repeats = repeats;
  spec.base_seed = base_seed;
  spec.dataset_name = fs::path(input).stem().string();
  spec.label_column = label_col;
  spec.train = run.train;
  if (workers_flag) spec.workers = *workers_flag;
  else if (run.workers) spec.workers = *run.workers;
  else if (auto env = env_workers()) spec.workers = *env;
  else spec.workers = 1;

  const BenchmarkResult result = run_benchmark(ds, spec);

  const fs::path outdir(outdir_flag);
  fs::create_directories(outdir);
  write_benchmark_csv(result, (outdir / "cells.csv").string(), timings_enabled());
  write_benchmark_summary(result, (outdir / "summary.csv").string());

  json manifest;
  manifest["command"] = "benchmark";
  manifest["input"] = input;
  manifest["dataset"] = result.dataset_name;
  manifest["methods"] = spec.methods;
  manifest["rates"] = spec.missing_rates;
  manifest["folds"] = spec.folds;
  manifest["repeats"] = spec.repeats;
  manifest["seed"] = spec.base_seed;
  manifest["label_column"] = spec.label_column;
  manifest["config"] = config_to_json(spec.train);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(outdir / "manifest.json", std::move(manifest), secs);

  int failed = 0;
  for (const auto& cell : result.cells)
    if (cell.status != "ok") ++failed;

  std::ostringstream os;
  os << "dataset " << result.dataset_name << ": " << result.cells.size() << " cells, " << failed
     << " failed\n";
  for (const auto& s : result.summaries) {
    os << "  " << s.method << " rate=" << format_double(s.rate) << " rmse_mean=";
    os << (std::isnan(s.rmse_mean) ? "nan" : format_double(s.rmse_mean));
    if (s.rmse_std) os << " rmse_std=" << format_double(*s.rmse_std);
    if (!spec.label_column.empty() && !std::isnan(s.accuracy_mean))
      os << " accuracy_mean=" << format_double(s.accuracy_mean);
    if (s.cells_failed > 0) os << " failed=" << s.cells_failed;
    os << "\n";
  }
  std::cout << os.str();
  if (timings_enabled()) std::cout << "wall_clock_seconds " << secs << "\n";
  return failed > 0 ? 5 : 0;
}

// ---------------------------------------------------------------------------
// gradcheck: finite-difference validation of every production architecture
// against its training objective.

Eigen::MatrixXd concat_cols(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// A small mixed-schema dataset built through the production CSV path, so the
// checked shapes match what training actually sees.
EncodedMatrix gradcheck_data(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "data"));
  std::ostringstream csv;
  csv << "n0,n1,n2,c0,c1\n";
  const char* c0[] = {"a", "b", "c"};
  const char* c1[] = {"p", "q", "r", "s"};
  for (int r = 0; r < 16; ++r) {
    csv << format_double(rng.uniform(-2.0, 2.0)) << "," << format_double(rng.uniform(0.0, 10.0))
        << "," << format_double(rng.uniform(-1.0, 1.0)) << "," << c0[rng.below(3)] << ","
        << c1[rng.below(4)] << "\n";
  }
  Dataset ds = dataset_from_table(parse_csv(csv.str()), {});
  Dataset masked = apply_mcar(ds, 0.3, derive_seed(seed, "mask"));
  fit_scaling(masked);
  return encode(masked);
}

int cmd_gradcheck(std::uint64_t seed, bool inject_fault) {
  const EncodedMatrix enc = gradcheck_data(seed);
  const Eigen::Index dp = enc.cols();
  // Balanced objective weights, not the production defaults: the gradient is
  // linear in alpha and beta, so these exercise the identical code, while
  // production-scale weights would let the reconstruction term outweigh the
  // adversarial term ~200:1 and numerically hide a bug in the smaller one.
  const double alpha = 10.0, beta = 2.0;
  const int kk = 5;

  Rng rng(derive_seed(seed, "init"));
  GainModel model = make_gain_model(dp, {}, rng);
  nn::Net classifier = nn::make_net({dp, dp, dp, kk},
                                    {nn::Activation::ReLU, nn::Activation::ReLU,
                                     nn::Activation::Softmax},
                                    rng);
  // Freshly initialized biases are all zero, so a row whose first-layer ReLU
  // outputs all die lands exactly on every downstream kink, where the
  // objective is not differentiable and finite differences are meaningless.
  // Gradients are checked at a generic nearby point instead.
  auto jitter_biases = [&rng](nn::Net& n) {
    for (auto& layer : n.layers)
      for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b(i) += rng.uniform(-0.05, 0.05);
  };
  jitter_biases(model.generator);
  jitter_biases(model.discriminator);
  jitter_biases(classifier);

  Rng noise_rng(derive_seed(seed, "noise"));
  const Eigen::MatrixXd x = enc.data, m = enc.mask;
  const Eigen::MatrixXd z = sample_noise(x.rows(), dp, 0.01, noise_rng);
  const Eigen::MatrixXd h = sample_hint(m, 0.9, noise_rng);
  const Eigen::MatrixXd gen_in =
      concat_cols((m.array() * x.array() + (1.0 - m.array()) * z.array()).matrix(), m);
  const auto& cat = enc.categorical;
  auto* D = &model.discriminator;
  auto* C = &classifier;

  // d(loss_g_adv)/d(x_g) chained through the frozen discriminator, plus the
  // direct reconstruction term; with_entropy adds the frozen classifier's
  // entropy pressure. Mirrors the generator update exactly.
  auto generator_probe = [&](bool with_entropy) {
    nn::LossProbe probe;
    probe.value = [=](const Eigen::MatrixXd& x_g) {
      Eigen::MatrixXd x_r = reconstruct(x, m, x_g);
      double v = loss_g_adv(m, forward(*D, concat_cols(x_r, h))) + alpha * loss_r(x, x_g, m, cat);
      if (with_entropy) v += beta * entropy_loss(forward(*C, x_r));
      return v;
    };
    probe.grad = [=](const Eigen::MatrixXd& x_g) {
      const double invB = 1.0 / static_cast<double>(x_g.rows());
      Eigen::MatrixXd x_r = reconstruct(x, m, x_g);

      nn::ForwardCache cache_d;
      Eigen::MatrixXd m_d = forward(*D, concat_cols(x_r, h), &cache_d);
      Eigen::MatrixXd d_out = (invB * (-(1.0 - m.array()) / (m_d.array() + kLogEps))).matrix();
      Eigen::MatrixXd dxr = nn::input_gradient(*D, cache_d, d_out).leftCols(x_g.cols()).eval();

      if (with_entropy) {
        nn::ForwardCache cache_c;
        Eigen::MatrixXd p = forward(*C, x_r, &cache_c);
        Eigen::ArrayXXd pe = p.array() + kLogEps;
        Eigen::MatrixXd e_out = (invB * (-pe.log() - p.array() / pe)).matrix();
        dxr.noalias() += beta * nn::input_gradient(*C, cache_c, e_out);
      }

      Eigen::MatrixXd r_grad(x_g.rows(), x_g.cols());
      for (Eigen::Index c = 0; c < x_g.cols(); ++c) {
        if (cat[static_cast<std::size_t>(c)])
          r_grad.col(c) = (invB * m.col(c).array() *
                           (-x.col(c).array() / (x_g.col(c).array() + kLogEps)))
                              .matrix();
        else
          r_grad.col(c) =
              (invB * 2.0 * m.col(c).array() * (x_g.col(c) - x.col(c)).array()).matrix();
      }
      return Eigen::MatrixXd(((1.0 - m.array()) * dxr.array()).matrix() + alpha * r_grad);
    };
    return probe;
  };

  nn::LossProbe disc_probe;
  disc_probe.value = [&](const Eigen::MatrixXd& m_d) { return loss_d(m, m_d); };
  disc_probe.grad = [&](const Eigen::MatrixXd& m_d) {
    const double invB = 1.0 / static_cast<double>(m.rows());
    return Eigen::MatrixXd((invB * (-m.array() / (m_d.array() + kLogEps) +
                                    (1.0 - m.array()) / (1.0 - m_d.array() + kLogEps)))
                               .matrix());
  };

  Rng label_rng(derive_seed(seed, "labels"));
  std::vector<int> labels;
  for (Eigen::Index r = 0; r < x.rows(); ++r) labels.push_back(static_cast<int>(label_rng.below(kk)));
  nn::LossProbe ce_probe;
  ce_probe.value = [&](const Eigen::MatrixXd& p) {
    const double invB = 1.0 / static_cast<double>(p.rows());
    double v = 0.0;
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      v -= std::log(p(r, labels[static_cast<std::size_t>(r)]) + kLogEps);
    return invB * v;
  };
  ce_probe.grad = [&](const Eigen::MatrixXd& p) {
    const double invB = 1.0 / static_cast<double>(p.rows());
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const int y = labels[static_cast<std::size_t>(r)];
      g(r, y) = -invB / (p(r, y) + kLogEps);
    }
    return g;
  };

  const Eigen::MatrixXd x_g0 = generator_output(model, x, m, z);
  // The classifier is probed on a completed matrix, matching production: it
  // only ever sees imputed rows. Raw encoded data can contain all-zero rows
  // (fully missing), which park every ReLU exactly on its kink and make
  // finite differences meaningless there.
  const Eigen::MatrixXd x_r0 = reconstruct(x, m, x_g0);
  const Eigen::MatrixXd disc_in = concat_cols(x_r0, h);

  struct Pair {
    const char* name;
    nn::Net* net;
    const Eigen::MatrixXd* input;
    nn::LossProbe probe;
  };
  nn::LossProbe gen_pretrain = generator_probe(false);
  nn::LossProbe gen_entropy = generator_probe(true);
  if (inject_fault) {
    // Deliberately corrupt one analytic gradient (doubling it) to prove the
    // checker flags wrong gradients instead of passing everything.
    auto inner = gen_pretrain.grad;
    gen_pretrain.grad = [inner](const Eigen::MatrixXd& x_g) {
      return Eigen::MatrixXd(2.0 * inner(x_g));
    };
  }
  std::vector<Pair> pairs;
  pairs.push_back({"generator/pretraining-objective", &model.generator, &gen_in, gen_pretrain});
  pairs.push_back({"generator/entropy-augmented-objective", &model.generator, &gen_in,
                   gen_entropy});
  pairs.push_back({"discriminator/adversarial-objective", &model.discriminator, &disc_in,
                   disc_probe});
  pairs.push_back({"classifier/cross-entropy", &classifier, &x_r0, ce_probe});

  const double tolerance = 1e-4;
  bool all_ok = true;
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(3);
  // Step 1e-4 keeps both truncation error and 64-bit cancellation noise on
  // near-zero gradient coordinates well below the tolerance.
  for (auto& pair : pairs) {
    Rng pick(derive_seed(seed, pair.name));
    const double err = nn::grad_check(*pair.net, *pair.input, pair.probe, 1e-4, 200, pick);
    const bool ok = err < tolerance;
    all_ok = all_ok && ok;
    os << pair.name << " max_rel_err=" << err << (ok ? " PASS" : " FAIL") << "\n";
  }
  os << (all_ok ? "gradcheck: all gradients within 1e-4" : "gradcheck: FAILURES above 1e-4")
     << "\n";
  std::cout << os.str();
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pcgain: adversarial imputation of missing tabular data"};
  app.require_subcommand(1);

  // --- mask ---
  auto* mask = app.add_subcommand("mask", "Hide cells of a fully observed CSV at a fixed rate");
  std::string mask_input, mask_output_csv, mask_mask_csv;
  double mask_rate = 0.0;
  std::uint64_t mask_seed = 0;
  std::vector<std::string> mask_categorical;
  mask->add_option("input", mask_input, "Fully observed CSV")->required();
  mask->add_option("output", mask_output_csv, "Masked CSV (missing fields left empty)")
      ->required();
  mask->add_option("--rate", mask_rate, "Per-cell missing probability")->required();
  mask->add_option("--seed", mask_seed, "Mask seed");
  mask->add_option("--mask-output", mask_mask_csv,
                   "0/1 mask CSV path (default: output with .mask.csv extension)");
  mask->add_option("--categorical", mask_categorical,
                   "Treat this column as categorical (repeatable)");

  // --- impute ---
  auto* impute_cmd = app.add_subcommand("impute", "Complete the missing fields of a CSV");
  std::string imp_input, imp_output, imp_method = "pcgain", imp_config, imp_outdir;
  std::vector<std::string> imp_categorical;
  TrainFlags imp_flags;
  impute_cmd->add_option("input", imp_input, "CSV with missing fields (empty or NA)")
      ->required();
  impute_cmd->add_option("output", imp_output, "Completed CSV path")->required();
  impute_cmd->add_option("--method", imp_method, "mean, gain, or pcgain")
      ->check(CLI::IsMember({"mean", "gain", "pcgain"}));
  impute_cmd->add_option("--config", imp_config, "key = value run configuration file");
  impute_cmd->add_option("--outdir", imp_outdir,
                         "Artifact directory for checkpoints and the manifest "
                         "(default: the output file's directory)");
  std::uint64_t imp_seed = 0;
  auto* imp_seed_opt = impute_cmd->add_option("--seed", imp_seed, "Root seed for all randomness");
  impute_cmd->add_option("--categorical", imp_categorical,
                         "Treat this column as categorical (repeatable)");
  imp_flags.add_to(impute_cmd);

  // --- benchmark ---
  auto* bench = app.add_subcommand("benchmark",
                                   "Cross-validated imputation benchmark on an observed CSV");
  std::string b_input, b_outdir, b_label, b_methods = "mean,gain,pcgain", b_rates = "0.5",
              b_config;
  int b_folds = 5, b_repeats = 10;
  std::uint64_t b_seed = 0;
  int b_workers_val = 0;
  std::vector<std::string> b_categorical;
  TrainFlags b_flags;
  bench->add_option("input", b_input, "Fully observed CSV")->required();
  bench->add_option("outdir", b_outdir, "Report directory")->required();
  bench->add_option("--label-col", b_label,
                    "Label column: excluded from imputation, enables downstream accuracy");
  bench->add_option("--methods", b_methods, "Comma-separated subset of mean,gain,pcgain");
  bench->add_option("--rates", b_rates, "Comma-separated missing rates");
  bench->add_option("--folds", b_folds, "Cross-validation folds");
  bench->add_option("--repeats", b_repeats, "Mask repetitions per rate");
  bench->add_option("--seed", b_seed, "Root benchmark seed");
  auto* b_workers_opt = bench->add_option("--workers", b_workers_val,
                                          "Parallel cell workers (default: PCGAIN_WORKERS or 1)");
  bench->add_option("--config", b_config, "key = value run configuration file");
  bench->add_option("--categorical", b_categorical,
                    "Treat this column as categorical (repeatable)");
  b_flags.add_to(bench);

  // --- gradcheck ---
  auto* grad = app.add_subcommand("gradcheck",
                                  "Finite-difference check of every training gradient");
  std::uint64_t g_seed = 0;
  bool g_fault = false;
  grad->add_option("--seed", g_seed, "Probe seed");
  grad->add_flag("--inject-fault", g_fault)->group("");  // test hook, hidden from --help

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // flag/usage problems are configuration errors
  }

  try {
    if (mask->parsed())
      return cmd_mask(mask_input, mask_output_csv, mask_mask_csv, mask_rate, mask_seed,
                      mask_categorical);

    if (impute_cmd->parsed()) {
      RunConfig run;
      if (!imp_config.empty()) run = load_run_config(imp_config);
      imp_flags.apply(run.train);
      if (imp_seed_opt->count()) run.train.seed = imp_seed;
      run.train.validate();
      const std::string outdir = !imp_outdir.empty() ? imp_outdir : run.output_dir;
      return cmd_impute(imp_input, imp_output, imp_method, run.train, outdir, imp_categorical);
    }

    if (bench->parsed()) {
      RunConfig run;
      if (!b_config.empty()) run = load_run_config(b_config);
      b_flags.apply(run.train);
      run.train.validate();
      std::optional<int> workers_flag;
      if (b_workers_opt->count()) workers_flag = b_workers_val;
      const std::string label = !b_label.empty() ? b_label : run.label_column;
      return cmd_benchmark(b_input, b_outdir, label, b_methods, b_rates, b_folds, b_repeats,
                           b_seed, workers_flag, run, b_categorical);
    }

    if (grad->parsed()) return cmd_gradcheck(g_seed, g_fault);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence at iteration " << e.iteration() << ": " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
