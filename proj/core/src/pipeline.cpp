#include "pcgain/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcgain/errors.hpp"
#include "pcgain/hash.hpp"

namespace pcgain {

namespace {

template <class F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const DivergenceError& e) {
    throw DivergenceError(e.iteration(), std::string(name) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string(name) + ": " + e.what());
  }
}

std::string hash_net(const nn::Net& net) {
  Fnv64 h;
  for (const auto& layer : net.layers) {
    h.update(layer.W);
    Eigen::MatrixXd b = layer.b;
    h.update(b);
  }
  return h.hex();
}

std::string hash_encoded(const EncodedMatrix& enc) {
  Fnv64 h;
  h.update(enc.data);
  h.update(enc.mask);
  return h.hex();
}

}  // namespace

PretrainResult pretrain(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  PretrainResult out;
  out.subset_rows = select_pretrain_subset(dataset, config.lambda);
  if (static_cast<int>(out.subset_rows.size()) < config.clusters_k)
    throw DataError("pretraining subset has " + std::to_string(out.subset_rows.size()) +
                    " rows, fewer than the " + std::to_string(config.clusters_k) +
                    " clusters requested");

  Dataset subset = take_rows(dataset, out.subset_rows);
  out.subset_encoded = encode(subset);

  TrainConfig cfg = config;
  cfg.seed = derive_seed(config.seed, "stage1");
  cfg.batch_size = std::min<int>(config.batch_size,
                                 static_cast<int>(out.subset_encoded.rows()));
  GainTrainResult trained = train_gain(out.subset_encoded, cfg);
  out.model = std::move(trained.model);
  out.trace = std::move(trained.trace);
  out.imputed = impute(out.model, out.subset_encoded, derive_seed(config.seed, "stage1-impute"),
                       config.noise_scale);
  return out;
}

ClassifierResult train_classifier(const PseudoLabeledSet& set, const TrainConfig& config) {
  config.validate();
  const Eigen::Index n = set.rows.rows();
  const Eigen::Index dp = set.rows.cols();
  const int K = config.clusters_k;
  if (static_cast<Eigen::Index>(set.labels.size()) != n)
    throw ConfigError("train_classifier: labels do not align with rows");
  for (int label : set.labels)
    if (label < 0 || label >= K) throw ConfigError("train_classifier: label out of range");
  if (n < 1) throw DataError("train_classifier: empty pseudo-labeled set");

  ClassifierResult out;
  out.degenerate_labels =
      std::all_of(set.labels.begin(), set.labels.end(),
                  [&](int l) { return l == set.labels.front(); });

  Rng rng(derive_seed(config.seed, "classifier"));
  out.model.net = nn::make_net({dp, dp, dp, K},
                               {nn::Activation::ReLU, nn::Activation::ReLU,
                                nn::Activation::Softmax},
                               rng);
  nn::AdamState adam = nn::make_adam(out.model.net);

  const int batch = std::min<int>(config.batch_size, static_cast<int>(n));
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Eigen::MatrixXd x(batch, dp);
  std::vector<int> ybatch(static_cast<std::size_t>(batch));

  for (long iter = 0; iter < config.classifier_iterations; ++iter) {
    for (int k = 0; k < batch; ++k) {
      const auto j = static_cast<std::size_t>(k) +
                     static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(
                         static_cast<std::size_t>(n) - static_cast<std::size_t>(k))));
      std::swap(perm[static_cast<std::size_t>(k)], perm[j]);
      x.row(k) = set.rows.row(perm[static_cast<std::size_t>(k)]);
      ybatch[static_cast<std::size_t>(k)] =
          set.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
    }

    nn::ForwardCache cache;
    Eigen::MatrixXd p = nn::forward(out.model.net, x, &cache);

    // Mean cross-entropy against the pseudo-labels, log-smoothed.
    const double invB = 1.0 / static_cast<double>(batch);
    double value = 0.0;
    Eigen::MatrixXd dp_grad = Eigen::MatrixXd::Zero(batch, K);
    for (int r = 0; r < batch; ++r) {
      const int label = ybatch[static_cast<std::size_t>(r)];
      const double pr = p(r, label);
      value -= std::log(pr + kLogEps);
      dp_grad(r, label) = -invB / (pr + kLogEps);
    }
    value *= invB;
    out.loss_trace.push_back(value);
    if (!std::isfinite(value))
      throw DivergenceError(iter, "classifier loss non-finite at iteration " +
                                      std::to_string(iter));

    nn::Grads grads = nn::backward(out.model.net, cache, dp_grad);
    try {
      nn::adam_step(adam, out.model.net, grads, config.learning_rate);
    } catch (const DivergenceError& e) {
      throw DivergenceError(iter, "classifier diverged at iteration " + std::to_string(iter) +
                                      ": " + e.what());
    }
  }

  Eigen::MatrixXd p_all = nn::forward(out.model.net, set.rows);
  long correct = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (p_all(r, k) > p_all(r, best)) best = k;
    if (best == set.labels[static_cast<std::size_t>(r)]) ++correct;
  }
  out.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

double classifier_entropy(const ClassifierModel& classifier, const Eigen::MatrixXd& rows) {
  return entropy_loss(nn::forward(classifier.net, rows));
}

GainTrainResult train_pcgain(const EncodedMatrix& encoded, const ClassifierModel& classifier,
                             const TrainConfig& config) {
  return train_adversarial(encoded, config, &classifier.net);
}

PcgainModels fit_pcgain(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  PcgainModels out;

  // Stage 1: pretrain on the low-missing-rate subset.
  PretrainResult pre = run_stage("stage1", [&] { return pretrain(dataset, config); });
  out.subset_rows = pre.subset_rows;
  out.pretrain_model = std::move(pre.model);
  out.pretrain_trace = std::move(pre.trace);
  out.audits.push_back({"stage1", hash_encoded(pre.subset_encoded), hash_matrix(pre.imputed)});

  // Stage 2a: pseudo-labels by clustering the imputed subset.
  out.clusters = run_stage("kmeans", [&] {
    return kmeans_best(pre.imputed, config.clusters_k, derive_seed(config.seed, "kmeans"),
                       config.kmeans_max_iters, config.kmeans_restarts);
  });
  out.pseudo.rows = pre.imputed;
  out.pseudo.labels = out.clusters.assignments;
  out.pseudo.source_rows = pre.subset_rows;
  {
    Fnv64 h;
    h.update(out.clusters.centroids);
    h.update(out.clusters.assignments);
    out.audits.push_back({"kmeans", hash_matrix(pre.imputed), h.hex()});
  }

  // Stage 2b: auxiliary classifier on the pseudo-labels, then frozen.
  out.classifier = run_stage("classifier", [&] {
    return train_classifier(out.pseudo, config);
  });
  {
    Fnv64 h;
    h.update(out.pseudo.rows);
    h.update(out.pseudo.labels);
    out.audits.push_back({"classifier", h.hex(), hash_net(out.classifier.model.net)});
  }

  // Stage 3: adversarial retraining on the whole dataset with the entropy term.
  EncodedMatrix enc = encode(dataset);
  TrainConfig cfg3 = config;
  cfg3.seed = derive_seed(config.seed, "stage3");
  cfg3.batch_size = std::min<int>(config.batch_size, static_cast<int>(enc.rows()));

  // Entropy pressure probes: one shared noise draw, applied to the stage-3
  // starting weights and to the trained weights.
  Rng probe_rng(derive_seed(config.seed, "entropy-probe"));
  Eigen::MatrixXd z_probe =
      sample_noise(enc.rows(), enc.cols(), config.noise_scale, probe_rng);
  GainModel start_model;
  if (config.warm_start_stage3) {
    start_model = out.pretrain_model;
  } else {
    Rng init_rng(cfg3.seed);  // same consumption order as the training loop
    start_model = make_gain_model(enc.cols(), cfg3.hidden_widths, init_rng);
  }
  {
    Eigen::MatrixXd x_r0 = reconstruct(
        enc.data, enc.mask, generator_output(start_model, enc.data, enc.mask, z_probe));
    out.entropy_initial = classifier_entropy(out.classifier.model, x_r0);
  }

  const std::string classifier_hash_before = hash_net(out.classifier.model.net);
  GainTrainResult res3 = run_stage("stage3", [&] {
    return train_adversarial(enc, cfg3, &out.classifier.model.net,
                             config.warm_start_stage3 ? &out.pretrain_model : nullptr);
  });
  out.final_model = std::move(res3.model);
  out.final_trace = std::move(res3.trace);
  if (hash_net(out.classifier.model.net) != classifier_hash_before)
    throw DataError("stage3: frozen classifier parameters changed");

  {
    Eigen::MatrixXd x_rf = reconstruct(
        enc.data, enc.mask, generator_output(out.final_model, enc.data, enc.mask, z_probe));
    out.entropy_final = classifier_entropy(out.classifier.model, x_rf);
  }
  out.audits.push_back({"stage3", hash_encoded(enc), hash_net(out.final_model.generator)});
  return out;
}

PipelineResult run_pipeline(const Dataset& dataset, const TrainConfig& config) {
  if ((dataset.mask.array() == 1.0).all())
    throw DataError("pipeline: dataset is fully observed, nothing to impute");

  PipelineResult out;
  out.models = fit_pcgain(dataset, config);

  EncodedMatrix enc = encode(dataset);
  out.imputed_encoded = impute(out.models.final_model, enc,
                               derive_seed(config.seed, "impute"), config.noise_scale);

  EncodedMatrix completed = enc;
  completed.data = out.imputed_encoded;
  completed.mask.setOnes();
  out.imputed = decode(completed, dataset.schema);
  out.imputed.ground_truth = dataset.ground_truth;
  return out;
}

}  // namespace pcgain
