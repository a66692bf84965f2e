#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "pcgain/rng.hpp"

namespace pcgain::nn {

enum class Activation { ReLU, Sigmoid, Tanh, Softmax, Identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Layer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;  // out
  Activation act = Activation::Identity;
};

struct Net {
  std::vector<Layer> layers;

  Eigen::Index input_width() const { return layers.front().W.cols(); }
  Eigen::Index output_width() const { return layers.back().W.rows(); }
  long parameter_count() const;
};

// Xavier-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases. The rng
// is consumed row-major per weight matrix, layer by layer.
Net make_net(const std::vector<Eigen::Index>& widths, const std::vector<Activation>& acts,
             Rng& rng);

// Per-layer inputs and pre-activations retained for backward.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // B x in, per layer
  std::vector<Eigen::MatrixXd> pre;     // B x out, per layer (pre-activation)
  Eigen::MatrixXd output;               // B x out of the final layer
};

// Rows are samples: each layer computes act(X * W^T + 1 b^T).
Eigen::MatrixXd forward(const Net& net, const Eigen::MatrixXd& input,
                        ForwardCache* cache = nullptr);

struct Grads {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;

  void add_scaled(const Grads& other, double scale);
};

// output_grad is dLoss/dOutput for the exact scalar being differentiated
// (any 1/batch factor must already be inside it). Optionally also returns
// dLoss/dInput for losses that chain through another network.
Grads backward(const Net& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad,
               Eigen::MatrixXd* input_grad = nullptr);

// dLoss/dInput only, skipping parameter gradients — for chaining a loss
// through a frozen network.
Eigen::MatrixXd input_gradient(const Net& net, const ForwardCache& cache,
                               const Eigen::MatrixXd& output_grad);

struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam(const Net& net, double beta1 = 0.9, double beta2 = 0.999,
                    double epsilon = 1e-8);

// Standard bias-corrected Adam. Rejects non-finite gradients.
void adam_step(AdamState& state, Net& net, const Grads& grads, double learning_rate);

// A scalar loss of the network output, with its exact output-gradient.
struct LossProbe {
  std::function<double(const Eigen::MatrixXd&)> value;
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> grad;
};

// Central finite differences on `sample_params` randomly chosen parameters
// (all of them when the net is smaller). Returns the max relative error
// |analytic - numeric| / max(|analytic| + |numeric|, 1e-8). A coordinate whose
// first probe disagrees is re-probed at step/8 and the smaller error kept,
// which filters out ReLU-kink artifacts without masking genuinely wrong
// gradients (those stay wrong at every step size).
double grad_check(Net& net, const Eigen::MatrixXd& input, const LossProbe& probe, double step,
                  int sample_params, Rng& rng);

}  // namespace pcgain::nn
