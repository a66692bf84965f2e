#include "pcgain/kmeans.hpp"

#include <limits>

#include "pcgain/errors.hpp"
#include "pcgain/rng.hpp"

namespace pcgain {

Eigen::MatrixXd pairwise_sqdist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::VectorXd a2 = a.rowwise().squaredNorm();
  Eigen::VectorXd b2 = b.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * a * b.transpose());
  d2.colwise() += a2;
  d2.rowwise() += b2.transpose();
  return d2.cwiseMax(0.0);
}

namespace {

Eigen::MatrixXd seed_centroids(const Eigen::MatrixXd& points, int K, Rng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(K, points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd dist2 =
      (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = dist2.sum();
    Eigen::Index pick;
    if (total > 0.0) {
      // D^2-weighted draw: walk the cumulative mass.
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      // Every point coincides with an existing centroid.
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centroids.row(k) = points.row(pick);
    dist2 = dist2.cwiseMin(
        (points.rowwise() - centroids.row(k)).rowwise().squaredNorm());
  }
  return centroids;
}

void assign_nearest(const Eigen::MatrixXd& d2, std::vector<int>& assign) {
  const Eigen::Index n = d2.rows();
  const Eigen::Index K = d2.cols();
  assign.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < K; ++k)
      if (d2(i, k) < d2(i, best)) best = static_cast<int>(k);
    assign[static_cast<std::size_t>(i)] = best;
  }
}

double total_inertia(const Eigen::MatrixXd& d2, const std::vector<int>& assign) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < d2.rows(); ++i) e += d2(i, assign[static_cast<std::size_t>(i)]);
  return e;
}

// Moves the centroid of each empty cluster onto the point currently farthest
// from its assigned centroid (only points whose cluster keeps >= 1 member are
// eligible). Each move removes that point's distance from the objective, so
// repair never increases inertia. Updates d2 rows lazily via recompute.
void repair_empty(const Eigen::MatrixXd& points, Eigen::MatrixXd& centroids,
                  Eigen::MatrixXd& d2, std::vector<int>& assign) {
  const Eigen::Index n = points.rows();
  const int K = static_cast<int>(centroids.rows());
  std::vector<long> counts(static_cast<std::size_t>(K), 0);
  for (int a : assign) ++counts[static_cast<std::size_t>(a)];

  for (int k = 0; k < K; ++k) {
    if (counts[static_cast<std::size_t>(k)] > 0) continue;
    Eigen::Index donor = -1;
    double worst = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = assign[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(a)] < 2) continue;
      const double di = d2(i, a);
      if (di > worst) {
        worst = di;
        donor = i;
      }
    }
    if (donor < 0) continue;  // all occupied clusters are singletons
    const int old = assign[static_cast<std::size_t>(donor)];
    centroids.row(k) = points.row(donor);
    assign[static_cast<std::size_t>(donor)] = k;
    --counts[static_cast<std::size_t>(old)];
    ++counts[static_cast<std::size_t>(k)];
    d2.col(k) = pairwise_sqdist(points, centroids.row(k)).col(0);
  }
}

}  // namespace

KMeansModel kmeans(const Eigen::MatrixXd& points, int K, std::uint64_t seed, long max_iters) {
  const Eigen::Index n = points.rows();
  if (K < 1) throw ConfigError("kmeans: K must be >= 1");
  if (n < K) throw ConfigError("kmeans: fewer points (" + std::to_string(n) +
                               ") than clusters (" + std::to_string(K) + ")");
  if (max_iters < 1) throw ConfigError("kmeans: max_iters must be >= 1");

  Rng rng(seed);
  KMeansModel model;
  model.centroids = seed_centroids(points, K, rng);

  Eigen::MatrixXd d2 = pairwise_sqdist(points, model.centroids);
  assign_nearest(d2, model.assignments);
  repair_empty(points, model.centroids, d2, model.assignments);
  model.inertia_trace.push_back(total_inertia(d2, model.assignments));

  std::vector<int> prev = model.assignments;
  for (long it = 0; it < max_iters; ++it) {
    // Update step: centroids become the means of their members.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, points.cols());
    std::vector<long> counts(static_cast<std::size_t>(K), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = model.assignments[static_cast<std::size_t>(i)];
      sums.row(a) += points.row(i);
      ++counts[static_cast<std::size_t>(a)];
    }
    for (int k = 0; k < K; ++k)
      if (counts[static_cast<std::size_t>(k)] > 0)
        model.centroids.row(k) = sums.row(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);

    // Assignment step plus repair.
    d2 = pairwise_sqdist(points, model.centroids);
    assign_nearest(d2, model.assignments);
    repair_empty(points, model.centroids, d2, model.assignments);
    model.inertia_trace.push_back(total_inertia(d2, model.assignments));

    if (model.assignments == prev) break;
    prev = model.assignments;
  }

  // The loop can exit right after a repair; one last pure assignment pass
  // guarantees Voronoi-consistent output (it can only lower the objective).
  d2 = pairwise_sqdist(points, model.centroids);
  assign_nearest(d2, model.assignments);
  model.inertia = total_inertia(d2, model.assignments);
  return model;
}

KMeansModel kmeans_best(const Eigen::MatrixXd& points, int K, std::uint64_t seed,
                        long max_iters, int restarts) {
  if (restarts < 1) throw ConfigError("kmeans: restarts must be >= 1");
  KMeansModel best;
  bool have = false;
  for (int r = 0; r < restarts; ++r) {
    KMeansModel m = kmeans(points, K, derive_seed(seed, "kmeans-restart", r), max_iters);
    if (!have || m.inertia < best.inertia) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

}  // namespace pcgain
