#include <benchmark/benchmark.h>

#include <sstream>

#include "pcgain/csv.hpp"
#include "pcgain/gain.hpp"
#include "pcgain/kmeans.hpp"
#include "pcgain/net.hpp"
#include "pcgain/rng.hpp"

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, pcgain::Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform();
  return m;
}

pcgain::EncodedMatrix random_encoded(Eigen::Index rows, Eigen::Index cols, pcgain::Rng& rng) {
  pcgain::EncodedMatrix enc;
  enc.data = random_matrix(rows, cols, rng);
  enc.mask.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      enc.mask(r, c) = rng.bernoulli(0.8) ? 1.0 : 0.0;
      if (enc.mask(r, c) == 0.0) enc.data(r, c) = 0.0;
    }
  enc.group_of.resize(static_cast<std::size_t>(cols));
  enc.group_span.resize(static_cast<std::size_t>(cols));
  enc.categorical.assign(static_cast<std::size_t>(cols), 0);
  for (Eigen::Index c = 0; c < cols; ++c) {
    enc.group_of[static_cast<std::size_t>(c)] = static_cast<int>(c);
    enc.group_span[static_cast<std::size_t>(c)] = {static_cast<int>(c), 1};
  }
  return enc;
}

void bm_forward_backward(benchmark::State& state) {
  const auto width = static_cast<Eigen::Index>(state.range(0));
  pcgain::Rng rng(1);
  pcgain::nn::Net net = pcgain::nn::make_net(
      {2 * width, width, width, width},
      {pcgain::nn::Activation::ReLU, pcgain::nn::Activation::ReLU,
       pcgain::nn::Activation::Sigmoid},
      rng);
  Eigen::MatrixXd x = random_matrix(128, 2 * width, rng);
  for (auto _ : state) {
    pcgain::nn::ForwardCache cache;
    Eigen::MatrixXd y = pcgain::nn::forward(net, x, &cache);
    pcgain::nn::Grads grads = pcgain::nn::backward(net, cache, y);
    benchmark::DoNotOptimize(grads.dW[0](0, 0));
  }
}
BENCHMARK(bm_forward_backward)->Arg(16)->Arg(57);

void bm_train_iteration(benchmark::State& state) {
  const auto width = static_cast<Eigen::Index>(state.range(0));
  pcgain::Rng rng(2);
  pcgain::EncodedMatrix enc = random_encoded(512, width, rng);
  pcgain::TrainConfig cfg;
  cfg.iterations = 1;
  cfg.seed = 7;
  for (auto _ : state) {
    pcgain::GainTrainResult r = pcgain::train_gain(enc, cfg);
    benchmark::DoNotOptimize(r.trace.loss_d.back());
  }
}
BENCHMARK(bm_train_iteration)->Arg(16)->Arg(57)->Unit(benchmark::kMillisecond);

void bm_kmeans(benchmark::State& state) {
  pcgain::Rng rng(3);
  Eigen::MatrixXd points = random_matrix(state.range(0), 16, rng);
  for (auto _ : state) {
    pcgain::KMeansModel model = pcgain::kmeans(points, 5, 11);
    benchmark::DoNotOptimize(model.inertia);
  }
}
BENCHMARK(bm_kmeans)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

void bm_csv_parse(benchmark::State& state) {
  std::ostringstream os;
  os << "a,b,c,d\n";
  pcgain::Rng rng(4);
  for (int r = 0; r < 4096; ++r)
    os << rng.uniform() << "," << rng.uniform() << ",\"x,y\"," << rng.uniform() << "\n";
  const std::string text = os.str();
  for (auto _ : state) {
    pcgain::CsvTable t = pcgain::parse_csv(text);
    benchmark::DoNotOptimize(t.rows.size());
  }
}
BENCHMARK(bm_csv_parse)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
