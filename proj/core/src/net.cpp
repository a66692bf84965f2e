#include "pcgain/net.hpp"

#include <algorithm>
#include <cmath>

#include "pcgain/errors.hpp"

namespace pcgain::nn {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    case Activation::Softmax: return "softmax";
    case Activation::Identity: return "identity";
  }
  throw ConfigError("unknown activation tag");
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::Tanh;
  if (name == "softmax") return Activation::Softmax;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation name '" + name + "'");
}

long Net::parameter_count() const {
  long n = 0;
  for (const auto& l : layers) n += static_cast<long>(l.W.size() + l.b.size());
  return n;
}

Net make_net(const std::vector<Eigen::Index>& widths, const std::vector<Activation>& acts,
             Rng& rng) {
  if (widths.size() < 2 || acts.size() != widths.size() - 1)
    throw ConfigError("make_net: need >=2 widths and one activation per layer");
  Net net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Eigen::Index in = widths[l], out = widths[l + 1];
    if (in < 1 || out < 1) throw ConfigError("make_net: layer widths must be positive");
    if (acts[l] == Activation::Softmax && l + 2 != widths.size())
      throw ConfigError("make_net: softmax is only allowed on the final layer");
    Layer layer;
    layer.W.resize(out, in);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.W(r, c) = rng.uniform(-bound, bound);
    layer.b = Eigen::VectorXd::Zero(out);
    layer.act = acts[l];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Identity:
      break;
    case Activation::ReLU:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Sigmoid:
      z = (1.0 + (-z.array()).exp()).inverse().matrix();
      break;
    case Activation::Tanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::Softmax: {
      Eigen::VectorXd row_max = z.rowwise().maxCoeff();
      z = (z.colwise() - row_max).array().exp().matrix();
      Eigen::VectorXd row_sum = z.rowwise().sum();
      z.array().colwise() /= row_sum.array();
      break;
    }
  }
}

Eigen::MatrixXd activation_backward(const Layer& layer, const Eigen::MatrixXd& z,
                                    Eigen::MatrixXd&& da) {
  switch (layer.act) {
    case Activation::Identity:
      return std::move(da);
    case Activation::ReLU:
      return (z.array() > 0.0).select(da, 0.0);
    case Activation::Sigmoid: {
      Eigen::ArrayXXd a = (1.0 + (-z.array()).exp()).inverse();
      return (da.array() * a * (1.0 - a)).matrix();
    }
    case Activation::Tanh: {
      Eigen::ArrayXXd a = z.array().tanh();
      return (da.array() * (1.0 - a.square())).matrix();
    }
    case Activation::Softmax: {
      Eigen::MatrixXd zc = z;
      apply_activation(Activation::Softmax, zc);
      Eigen::VectorXd dot = (da.array() * zc.array()).rowwise().sum();
      return (zc.array() * (da.colwise() - dot).array()).matrix();
    }
  }
  throw ConfigError("unknown activation tag");
}

}  // namespace

Eigen::MatrixXd forward(const Net& net, const Eigen::MatrixXd& input, ForwardCache* cache) {
  if (net.layers.empty()) throw ConfigError("forward: empty network");
  if (input.cols() != net.input_width())
    throw ConfigError("forward: input width " + std::to_string(input.cols()) +
                      " does not match network input " + std::to_string(net.input_width()));
  if (!input.allFinite()) throw DataError("forward: non-finite input");

  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd a = input;
  for (const auto& layer : net.layers) {
    if (cache) cache->inputs.push_back(a);
    Eigen::MatrixXd z = (a * layer.W.transpose()).rowwise() + layer.b.transpose();
    if (cache) cache->pre.push_back(z);
    apply_activation(layer.act, z);
    a = std::move(z);
  }
  if (cache) cache->output = a;
  return a;
}

void Grads::add_scaled(const Grads& other, double scale) {
  for (std::size_t l = 0; l < dW.size(); ++l) {
    dW[l].noalias() += scale * other.dW[l];
    db[l].noalias() += scale * other.db[l];
  }
}

Grads backward(const Net& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad,
               Eigen::MatrixXd* input_grad) {
  const auto L = net.layers.size();
  if (cache.inputs.size() != L || cache.pre.size() != L)
    throw ConfigError("backward: cache does not match the network");

  Grads g;
  g.dW.resize(L);
  g.db.resize(L);

  Eigen::MatrixXd da = output_grad;  // dLoss/d(activation of current layer)
  for (std::size_t li = L; li-- > 0;) {
    const Layer& layer = net.layers[li];
    Eigen::MatrixXd dz = activation_backward(layer, cache.pre[li], std::move(da));
    g.dW[li].noalias() = dz.transpose() * cache.inputs[li];
    g.db[li] = dz.colwise().sum();
    if (li > 0) {
      da.noalias() = dz * layer.W;
    } else if (input_grad) {
      input_grad->noalias() = dz * layer.W;
    }
  }
  return g;
}

Eigen::MatrixXd input_gradient(const Net& net, const ForwardCache& cache,
                               const Eigen::MatrixXd& output_grad) {
  const auto L = net.layers.size();
  if (cache.pre.size() != L) throw ConfigError("input_gradient: cache does not match the network");
  Eigen::MatrixXd da = output_grad;
  for (std::size_t li = L; li-- > 0;) {
    Eigen::MatrixXd dz = activation_backward(net.layers[li], cache.pre[li], std::move(da));
    da = dz * net.layers[li].W;
  }
  return da;
}

AdamState make_adam(const Net& net, double beta1, double beta2, double epsilon) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  for (const auto& l : net.layers) {
    s.mW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
    s.vW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
    s.mb.push_back(Eigen::VectorXd::Zero(l.b.size()));
    s.vb.push_back(Eigen::VectorXd::Zero(l.b.size()));
  }
  return s;
}

void adam_step(AdamState& state, Net& net, const Grads& grads, double learning_rate) {
  if (learning_rate <= 0.0) throw ConfigError("adam_step: learning_rate must be positive");
  if (state.mW.size() != net.layers.size() || grads.dW.size() != net.layers.size() ||
      grads.db.size() != net.layers.size())
    throw ConfigError("adam_step: state/gradient shapes do not match the network");
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    if (!grads.dW[l].allFinite() || !grads.db[l].allFinite())
      throw DivergenceError(state.step_count, "non-finite gradient in layer " + std::to_string(l));

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto update = [&](auto& m, auto& v, const auto& g, auto& p) {
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = (state.beta2 * v.array() + (1.0 - state.beta2) * g.array().square()).matrix();
      p.array() -=
          learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
    };
    update(state.mW[l], state.vW[l], grads.dW[l], net.layers[l].W);
    update(state.mb[l], state.vb[l], grads.db[l], net.layers[l].b);
  }
}

namespace {

struct ParamRef {
  std::size_t layer;
  bool is_bias;
  Eigen::Index i, j;
};

double* param_ptr(Net& net, const ParamRef& p) {
  return p.is_bias ? &net.layers[p.layer].b[p.i] : &net.layers[p.layer].W(p.i, p.j);
}

double grad_entry(const Grads& g, const ParamRef& p) {
  return p.is_bias ? g.db[p.layer][p.i] : g.dW[p.layer](p.i, p.j);
}

double central_diff(Net& net, const Eigen::MatrixXd& input, const LossProbe& probe,
                    const ParamRef& p, double step) {
  double* slot = param_ptr(net, p);
  const double saved = *slot;
  *slot = saved + step;
  const double up = probe.value(forward(net, input));
  *slot = saved - step;
  const double down = probe.value(forward(net, input));
  *slot = saved;
  return (up - down) / (2.0 * step);
}

}  // namespace

double grad_check(Net& net, const Eigen::MatrixXd& input, const LossProbe& probe, double step,
                  int sample_params, Rng& rng) {
  if (step <= 0.0) throw ConfigError("grad_check: step must be positive");

  ForwardCache cache;
  Eigen::MatrixXd out = forward(net, input, &cache);
  Grads analytic = backward(net, cache, probe.grad(out));

  std::vector<ParamRef> all;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    for (Eigen::Index i = 0; i < layer.W.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.W.cols(); ++j) all.push_back({l, false, i, j});
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) all.push_back({l, true, i, 0});
  }

  std::vector<ParamRef> chosen;
  if (sample_params <= 0 || static_cast<std::size_t>(sample_params) >= all.size()) {
    chosen = all;
  } else {
    // Partial Fisher-Yates over the first sample_params slots.
    for (int k = 0; k < sample_params; ++k) {
      std::size_t pick = k + static_cast<std::size_t>(rng.below(all.size() - k));
      std::swap(all[k], all[pick]);
      chosen.push_back(all[k]);
    }
  }

  auto rel_err = [](double a, double n) {
    return std::abs(a - n) / std::max(std::abs(a) + std::abs(n), 1e-8);
  };

  double worst = 0.0;
  for (const auto& p : chosen) {
    const double a = grad_entry(analytic, p);
    double err = rel_err(a, central_diff(net, input, probe, p, step));
    if (err > 1e-5) err = std::min(err, rel_err(a, central_diff(net, input, probe, p, step / 8.0)));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace pcgain::nn
