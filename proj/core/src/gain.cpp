#include "pcgain/gain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pcgain/errors.hpp"

namespace pcgain {

void TrainConfig::validate() const {
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (beta < 0.0) throw ConfigError("beta must be >= 0");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0,1]");
  if (clusters_k < 1) throw ConfigError("clusters_k must be >= 1");
  if (hint_rate < 0.0 || hint_rate > 1.0) throw ConfigError("hint_rate must lie in [0,1]");
  if (noise_scale <= 0.0) throw ConfigError("noise_scale must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (classifier_iterations < 0) throw ConfigError("classifier_iterations must be >= 0");
  if (kmeans_max_iters < 1) throw ConfigError("kmeans_max_iters must be >= 1");
  if (kmeans_restarts < 1) throw ConfigError("kmeans_restarts must be >= 1");
  for (auto w : hidden_widths)
    if (w < 1) throw ConfigError("hidden widths must be positive");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["lambda"] = lambda;
  j["clusters_k"] = clusters_k;
  j["hint_rate"] = hint_rate;
  j["noise_scale"] = noise_scale;
  j["batch_size"] = batch_size;
  j["iterations"] = iterations;
  j["learning_rate"] = learning_rate;
  j["seed"] = seed;
  j["hidden_widths"] = hidden_widths;
  j["classifier_iterations"] = classifier_iterations;
  j["kmeans_max_iters"] = kmeans_max_iters;
  j["kmeans_restarts"] = kmeans_restarts;
  j["warm_start_stage3"] = warm_start_stage3;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config json: ") + e.what());
  }
  TrainConfig c;
  c.alpha = j.value("alpha", c.alpha);
  c.beta = j.value("beta", c.beta);
  c.lambda = j.value("lambda", c.lambda);
  c.clusters_k = j.value("clusters_k", c.clusters_k);
  c.hint_rate = j.value("hint_rate", c.hint_rate);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.iterations = j.value("iterations", c.iterations);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  if (j.contains("hidden_widths"))
    c.hidden_widths = j["hidden_widths"].get<std::vector<Eigen::Index>>();
  c.classifier_iterations = j.value("classifier_iterations", c.classifier_iterations);
  c.kmeans_max_iters = j.value("kmeans_max_iters", c.kmeans_max_iters);
  c.kmeans_restarts = j.value("kmeans_restarts", c.kmeans_restarts);
  c.warm_start_stage3 = j.value("warm_start_stage3", c.warm_start_stage3);
  c.validate();
  return c;
}

Eigen::MatrixXd sample_noise(Eigen::Index batch, Eigen::Index width, double noise_scale,
                             Rng& rng) {
  if (noise_scale <= 0.0) throw ConfigError("noise_scale must be > 0");
  Eigen::MatrixXd z(batch, width);
  for (Eigen::Index r = 0; r < batch; ++r)
    for (Eigen::Index c = 0; c < width; ++c) z(r, c) = rng.uniform(0.0, noise_scale);
  return z;
}

Eigen::MatrixXd sample_hint(const Eigen::MatrixXd& mask, double hint_rate, Rng& rng) {
  if (hint_rate < 0.0 || hint_rate > 1.0) throw ConfigError("hint_rate must lie in [0,1]");
  Eigen::MatrixXd h(mask.rows(), mask.cols());
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      h(r, c) = rng.bernoulli(hint_rate) ? mask(r, c) : 0.5;
  return h;
}

namespace {

Eigen::MatrixXd concat_cols(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

Eigen::MatrixXd generator_input(const Eigen::MatrixXd& x, const Eigen::MatrixXd& m,
                                const Eigen::MatrixXd& z) {
  Eigen::MatrixXd data = (m.array() * x.array() + (1.0 - m.array()) * z.array()).matrix();
  return concat_cols(data, m);
}

}  // namespace

Eigen::MatrixXd generator_output(const GainModel& model, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& m, const Eigen::MatrixXd& z) {
  if (x.rows() != m.rows() || x.cols() != m.cols() || x.rows() != z.rows() ||
      x.cols() != z.cols())
    throw ConfigError("generator_output: x, m, z shapes differ");
  return forward(model.generator, generator_input(x, m, z));
}

Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& x, const Eigen::MatrixXd& m,
                            const Eigen::MatrixXd& x_g) {
  // select() copies observed entries verbatim; an arithmetic blend could
  // perturb signed zeros and NaN payloads.
  return (m.array() == 1.0).select(x, x_g);
}

double loss_d(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_d) {
  Eigen::ArrayXXd p = m_d.array();
  const double total = -(m.array() * (p + kLogEps).log() +
                         (1.0 - m.array()) * (1.0 - p + kLogEps).log())
                            .sum();
  return total / static_cast<double>(m.rows());
}

double loss_g_adv(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_d) {
  const double total =
      -((1.0 - m.array()) * (m_d.array() + kLogEps).log()).sum();
  return total / static_cast<double>(m.rows());
}

double loss_r(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Eigen::MatrixXd& m,
              const std::vector<std::uint8_t>& categorical) {
  if (static_cast<Eigen::Index>(categorical.size()) != x.cols())
    throw ConfigError("loss_r: branch flags do not match the data width");
  double total = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (categorical[static_cast<std::size_t>(c)]) {
      total -= (m.col(c).array() * x.col(c).array() *
                (y.col(c).array() + kLogEps).log())
                   .sum();
    } else {
      total += (m.col(c).array() * (x.col(c) - y.col(c)).array().square()).sum();
    }
  }
  return total / static_cast<double>(x.rows());
}

double entropy_loss(const Eigen::MatrixXd& p) {
  const double total = -(p.array() * (p.array() + kLogEps).log()).sum();
  return total / static_cast<double>(p.rows());
}

GainModel make_gain_model(Eigen::Index dp, const std::vector<Eigen::Index>& hidden_widths,
                          Rng& rng) {
  std::vector<Eigen::Index> hidden = hidden_widths;
  if (hidden.empty()) hidden = {dp, dp};
  std::vector<Eigen::Index> widths;
  widths.push_back(2 * dp);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(dp);
  std::vector<nn::Activation> acts(hidden.size(), nn::Activation::ReLU);
  acts.push_back(nn::Activation::Sigmoid);
  GainModel model;
  model.generator = nn::make_net(widths, acts, rng);
  model.discriminator = nn::make_net(widths, acts, rng);
  return model;
}

namespace {

// Exact derivatives of the smoothed losses above; log(p + eps) keeps every
// slope finite and nonzero, so confident discriminators still pass gradient
// back to the generator.

Eigen::MatrixXd loss_d_grad(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_d) {
  const double invB = 1.0 / static_cast<double>(m.rows());
  Eigen::ArrayXXd p = m_d.array();
  return (invB * (-m.array() / (p + kLogEps) +
                  (1.0 - m.array()) / (1.0 - p + kLogEps)))
      .matrix();
}

Eigen::MatrixXd loss_g_adv_grad(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_d) {
  const double invB = 1.0 / static_cast<double>(m.rows());
  return (invB * (-(1.0 - m.array()) / (m_d.array() + kLogEps))).matrix();
}

Eigen::MatrixXd loss_r_grad(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                            const Eigen::MatrixXd& m,
                            const std::vector<std::uint8_t>& categorical) {
  const double invB = 1.0 / static_cast<double>(x.rows());
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (categorical[static_cast<std::size_t>(c)]) {
      g.col(c) = (invB * m.col(c).array() *
                  (-x.col(c).array() / (y.col(c).array() + kLogEps)))
                     .matrix();
    } else {
      g.col(c) = (invB * 2.0 * m.col(c).array() * (y.col(c) - x.col(c)).array()).matrix();
    }
  }
  return g;
}

Eigen::MatrixXd entropy_loss_grad(const Eigen::MatrixXd& p) {
  const double invB = 1.0 / static_cast<double>(p.rows());
  Eigen::ArrayXXd pe = p.array() + kLogEps;
  // d/dp of -p*log(p + eps) = -log(p + eps) - p/(p + eps)
  return (invB * (-pe.log() - p.array() / pe)).matrix();
}

class BatchSampler {
 public:
  BatchSampler(Eigen::Index n, int batch) : perm_(static_cast<std::size_t>(n)), batch_(batch) {
    std::iota(perm_.begin(), perm_.end(), 0);
  }

  // Uniform batch of distinct rows via partial Fisher-Yates; reusing the
  // permuted state keeps it O(batch) per draw.
  const std::vector<int>& draw(Rng& rng) {
    const auto n = perm_.size();
    for (int k = 0; k < batch_; ++k) {
      const auto j = static_cast<std::size_t>(k) +
                     static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(
                         n - static_cast<std::size_t>(k))));
      std::swap(perm_[static_cast<std::size_t>(k)], perm_[j]);
    }
    batch_view_.assign(perm_.begin(), perm_.begin() + batch_);
    return batch_view_;
  }

 private:
  std::vector<int> perm_;
  std::vector<int> batch_view_;
  int batch_;
};

void gather_rows(const Eigen::MatrixXd& src, const std::vector<int>& rows,
                 Eigen::MatrixXd& dst) {
  dst.resize(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    dst.row(static_cast<Eigen::Index>(i)) = src.row(rows[i]);
}

std::string trace_tail(const LossTrace& trace) {
  std::ostringstream os;
  os << " recent losses:";
  const auto n = trace.loss_d.size();
  for (std::size_t i = n > 5 ? n - 5 : 0; i < n; ++i) {
    os << " [d=" << trace.loss_d[i] << " g=" << trace.loss_g_adv[i]
       << " r=" << trace.loss_r[i];
    if (!trace.loss_c.empty()) os << " c=" << trace.loss_c[i];
    os << "]";
  }
  return os.str();
}

}  // namespace

GainTrainResult train_adversarial(const EncodedMatrix& encoded, const TrainConfig& config,
                                  const nn::Net* frozen_classifier,
                                  const GainModel* warm_start) {
  config.validate();
  const Eigen::Index N = encoded.rows();
  const Eigen::Index dp = encoded.cols();
  if (N < 1) throw DataError("train: empty dataset");
  if (config.batch_size > N)
    throw ConfigError("batch_size " + std::to_string(config.batch_size) + " exceeds the " +
                      std::to_string(N) + " available rows");
  const bool use_classifier = frozen_classifier != nullptr && config.beta != 0.0;
  if (use_classifier && frozen_classifier->input_width() != dp)
    throw ConfigError("classifier input width does not match the data width");
  if (warm_start && warm_start->generator.input_width() != 2 * dp)
    throw ConfigError("warm-start model width does not match the data width");

  Rng rng(config.seed);
  GainModel model = warm_start ? *warm_start : make_gain_model(dp, config.hidden_widths, rng);
  nn::AdamState adam_g = nn::make_adam(model.generator);
  nn::AdamState adam_d = nn::make_adam(model.discriminator);

  GainTrainResult result;
  LossTrace& trace = result.trace;
  trace.loss_d.reserve(static_cast<std::size_t>(config.iterations));
  trace.loss_g_adv.reserve(static_cast<std::size_t>(config.iterations));
  trace.loss_r.reserve(static_cast<std::size_t>(config.iterations));
  if (use_classifier) trace.loss_c.reserve(static_cast<std::size_t>(config.iterations));

  BatchSampler sampler(N, config.batch_size);
  Eigen::MatrixXd x, m;

  for (long iter = 0; iter < config.iterations; ++iter) {
    try {
      // --- discriminator step ---
      {
        const auto& rows = sampler.draw(rng);
        gather_rows(encoded.data, rows, x);
        gather_rows(encoded.mask, rows, m);
        Eigen::MatrixXd z = sample_noise(x.rows(), dp, config.noise_scale, rng);
        Eigen::MatrixXd h = sample_hint(m, config.hint_rate, rng);

        Eigen::MatrixXd x_g = forward(model.generator, generator_input(x, m, z));
        Eigen::MatrixXd x_r = reconstruct(x, m, x_g);

        nn::ForwardCache cache_d;
        Eigen::MatrixXd m_d = forward(model.discriminator, concat_cols(x_r, h), &cache_d);
        trace.loss_d.push_back(loss_d(m, m_d));
        nn::Grads grads = nn::backward(model.discriminator, cache_d, loss_d_grad(m, m_d));
        nn::adam_step(adam_d, model.discriminator, grads, config.learning_rate);
      }

      // --- generator step ---
      {
        const auto& rows = sampler.draw(rng);
        gather_rows(encoded.data, rows, x);
        gather_rows(encoded.mask, rows, m);
        Eigen::MatrixXd z = sample_noise(x.rows(), dp, config.noise_scale, rng);
        Eigen::MatrixXd h = sample_hint(m, config.hint_rate, rng);

        nn::ForwardCache cache_g;
        Eigen::MatrixXd x_g =
            forward(model.generator, generator_input(x, m, z), &cache_g);
        Eigen::MatrixXd x_r = reconstruct(x, m, x_g);

        nn::ForwardCache cache_d;
        Eigen::MatrixXd m_d = forward(model.discriminator, concat_cols(x_r, h), &cache_d);

        trace.loss_g_adv.push_back(loss_g_adv(m, m_d));
        trace.loss_r.push_back(loss_r(x, x_g, m, encoded.categorical));

        // dL/dx_r arriving through the frozen discriminator (data half only).
        Eigen::MatrixXd d_in =
            nn::input_gradient(model.discriminator, cache_d, loss_g_adv_grad(m, m_d));
        Eigen::MatrixXd dxr = d_in.leftCols(dp);

        if (use_classifier) {
          nn::ForwardCache cache_c;
          Eigen::MatrixXd p = forward(*frozen_classifier, x_r, &cache_c);
          trace.loss_c.push_back(entropy_loss(p));
          Eigen::MatrixXd c_in =
              nn::input_gradient(*frozen_classifier, cache_c, entropy_loss_grad(p));
          dxr.noalias() += config.beta * c_in;
        }

        // x_r depends on x_g only at missing coordinates; the reconstruction
        // term reads x_g directly at observed ones.
        Eigen::MatrixXd dxg =
            ((1.0 - m.array()) * dxr.array() +
             config.alpha * loss_r_grad(x, x_g, m, encoded.categorical).array())
                .matrix();
        nn::Grads grads = nn::backward(model.generator, cache_g, dxg);
        nn::adam_step(adam_g, model.generator, grads, config.learning_rate);
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError(iter, "training diverged at iteration " + std::to_string(iter) +
                                      ": " + e.what() + trace_tail(trace));
    }

    if (!std::isfinite(trace.loss_d.back()) || !std::isfinite(trace.loss_g_adv.back()) ||
        !std::isfinite(trace.loss_r.back()) ||
        (use_classifier && !std::isfinite(trace.loss_c.back()))) {
      throw DivergenceError(iter, "non-finite loss at iteration " + std::to_string(iter) +
                                      trace_tail(trace));
    }
  }

  result.model = std::move(model);
  return result;
}

GainTrainResult train_gain(const EncodedMatrix& encoded, const TrainConfig& config) {
  return train_adversarial(encoded, config, nullptr);
}

Eigen::MatrixXd impute(const GainModel& model, const EncodedMatrix& encoded,
                       std::uint64_t seed, double noise_scale) {
  if (model.generator.input_width() != 2 * encoded.cols())
    throw ConfigError("impute: model width does not match the data width");
  Rng rng(seed);
  Eigen::MatrixXd z = sample_noise(encoded.rows(), encoded.cols(), noise_scale, rng);
  Eigen::MatrixXd x_g = forward(
      model.generator, generator_input(encoded.data, encoded.mask, z));
  return reconstruct(encoded.data, encoded.mask, x_g);
}

}  // namespace pcgain
