#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "pcgain/dataset.hpp"
#include "pcgain/net.hpp"
#include "pcgain/rng.hpp"

namespace pcgain {

// Every log of a probability is taken as log(p + kLogEps), which bounds the
// loss while keeping a nonzero slope however confident the network gets.
inline constexpr double kLogEps = 1e-8;

struct TrainConfig {
  double alpha = 200.0;        // reconstruction weight
  double beta = 20.0;          // classifier-entropy weight (stage 3 only)
  double lambda = 0.4;         // pretraining subset fraction
  int clusters_k = 5;          // pseudo-label cluster count
  double hint_rate = 0.9;
  double noise_scale = 0.01;
  int batch_size = 128;
  long iterations = 10000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::vector<Eigen::Index> hidden_widths;  // empty: two hidden layers of the data width

  long classifier_iterations = 2000;
  long kmeans_max_iters = 100;
  int kmeans_restarts = 1;
  bool warm_start_stage3 = false;  // reuse stage-1 weights instead of fresh init

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct GainModel {
  nn::Net generator;      // input 2d' (data ++ mask), output d', Sigmoid
  nn::Net discriminator;  // input 2d' (reconstruction ++ hint), output d', Sigmoid
};

struct LossTrace {
  std::vector<double> loss_d;
  std::vector<double> loss_g_adv;
  std::vector<double> loss_r;
  std::vector<double> loss_c;  // empty when no classifier term is active
};

struct GainTrainResult {
  GainModel model;
  LossTrace trace;
};

// I.i.d. Uniform(0, noise_scale) entries.
Eigen::MatrixXd sample_noise(Eigen::Index batch, Eigen::Index width, double noise_scale,
                             Rng& rng);

// Reveal flags b ~ Bernoulli(hint_rate) per entry; hint = b*mask + 0.5*(1-b).
Eigen::MatrixXd sample_hint(const Eigen::MatrixXd& mask, double hint_rate, Rng& rng);

// Feeds (m*x + (1-m)*z) ++ m through the generator.
Eigen::MatrixXd generator_output(const GainModel& model, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& m, const Eigen::MatrixXd& z);

// Observed coordinates copied from x (bitwise), missing ones from x_g.
Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& x, const Eigen::MatrixXd& m,
                            const Eigen::MatrixXd& x_g);

// Batch means of the adversarial cross-entropies. m_d entries are clipped
// before the logs.
double loss_d(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_d);
double loss_g_adv(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_d);

// Masked reconstruction distance between x and y at observed coordinates:
// squared error where `categorical` is 0, -x*log(y) where it is 1.
double loss_r(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Eigen::MatrixXd& m,
              const std::vector<std::uint8_t>& categorical);

// Mean row entropy of softmax outputs p: sum_k -p_k log p_k, batch-averaged.
double entropy_loss(const Eigen::MatrixXd& p);

// The adversarial loop: per iteration one discriminator step (minimizing
// loss_d) then one generator step (minimizing loss_g_adv + alpha*loss_r,
// plus beta * classifier entropy when a frozen classifier is supplied and
// beta != 0). Fresh minibatch, noise, and hints for each sub-step. When
// warm_start is given its weights are copied instead of drawing a fresh
// initialization.
GainTrainResult train_adversarial(const EncodedMatrix& encoded, const TrainConfig& config,
                                  const nn::Net* frozen_classifier,
                                  const GainModel* warm_start = nullptr);

GainTrainResult train_gain(const EncodedMatrix& encoded, const TrainConfig& config);

// One generator pass with fresh seeded noise, then reconstruct.
Eigen::MatrixXd impute(const GainModel& model, const EncodedMatrix& encoded,
                       std::uint64_t seed, double noise_scale = 0.01);

// Builds the generator/discriminator pair for data width dp.
GainModel make_gain_model(Eigen::Index dp, const std::vector<Eigen::Index>& hidden_widths,
                          Rng& rng);

}  // namespace pcgain
