#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "pcgain/dataset.hpp"
#include "pcgain/gain.hpp"
#include "pcgain/kmeans.hpp"
#include "pcgain/net.hpp"

namespace pcgain {

struct PseudoLabeledSet {
  Eigen::MatrixXd rows;          // imputed pretraining subset, subset x d'
  std::vector<int> labels;       // cluster ids in [0, K)
  std::vector<int> source_rows;  // original dataset row indices of the subset
};

struct ClassifierModel {
  nn::Net net;  // d' -> d' -> d' -> K, ReLU hidden, Softmax out
};

struct PretrainResult {
  std::vector<int> subset_rows;
  EncodedMatrix subset_encoded;
  Eigen::MatrixXd imputed;  // the completed subset matrix
  GainModel model;
  LossTrace trace;
};

// Stage 1: select the lowest-missing-rate ceil(lambda*N) rows, train a fresh
// adversarial model on them, and impute them. The batch size shrinks to the
// subset size when needed; a subset smaller than clusters_k is rejected.
PretrainResult pretrain(const Dataset& dataset, const TrainConfig& config);

struct ClassifierResult {
  ClassifierModel model;
  std::vector<double> loss_trace;
  double train_accuracy = 0.0;
  bool degenerate_labels = false;  // all pseudo-labels identical
};

// Stage 2b: softmax classifier trained with cross-entropy on the
// pseudo-labeled rows, then frozen.
ClassifierResult train_classifier(const PseudoLabeledSet& set, const TrainConfig& config);

// Mean entropy of the frozen classifier's output on a batch of rows.
double classifier_entropy(const ClassifierModel& classifier, const Eigen::MatrixXd& rows);

// Stage 3: the adversarial loop with the extra beta-weighted entropy term.
GainTrainResult train_pcgain(const EncodedMatrix& encoded, const ClassifierModel& classifier,
                             const TrainConfig& config);

struct StageAudit {
  std::string stage;
  std::string input_hash;
  std::string output_hash;
};

// Stages 1-3 fitted on one dataset; imputation of other rows (e.g. held-out
// folds) is applied separately via impute().
struct PcgainModels {
  std::vector<int> subset_rows;
  GainModel pretrain_model;
  LossTrace pretrain_trace;
  KMeansModel clusters;
  PseudoLabeledSet pseudo;
  ClassifierResult classifier;
  GainModel final_model;
  LossTrace final_trace;
  // Classifier entropy over the full imputed training data, probed with one
  // shared noise draw before the first and after the last stage-3 update.
  double entropy_initial = 0.0;
  double entropy_final = 0.0;
  std::vector<StageAudit> audits;
};

PcgainModels fit_pcgain(const Dataset& dataset, const TrainConfig& config);

struct PipelineResult {
  PcgainModels models;
  Eigen::MatrixXd imputed_encoded;  // N x d', fully observed
  Dataset imputed;                  // decoded back to the raw schema
};

// Algorithm: pretrain -> cluster -> classifier -> adversarial retraining ->
// impute everything -> decode. ground_truth is passed through untouched.
PipelineResult run_pipeline(const Dataset& dataset, const TrainConfig& config);

}  // namespace pcgain
