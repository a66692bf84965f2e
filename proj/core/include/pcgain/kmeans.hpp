#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace pcgain {

struct KMeansModel {
  Eigen::MatrixXd centroids;     // K x d
  std::vector<int> assignments;  // nearest centroid per row, ties to lowest index
  double inertia = 0.0;          // sum of squared distances to assigned centroids
  std::vector<double> inertia_trace;  // recorded once per Lloyd iteration, non-increasing
};

// Squared Euclidean distances between the rows of a (n x d) and b (m x d),
// returned as n x m. Computed via the expansion |a|^2 - 2ab^T + |b|^2 (clamped
// at 0); every nearest-centroid decision in this module uses this same
// arithmetic so tie-breaking is consistent.
Eigen::MatrixXd pairwise_sqdist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// k-means++ seeding followed by Lloyd iterations until the assignment vector
// stabilizes or max_iters is reached. A cluster emptied by an assignment step
// is repaired by teleporting its centroid onto the point farthest from its
// assigned centroid (donor clusters keep >= 1 member; ties to lowest row
// index), which strictly reduces the objective, so the recorded inertia trace
// is non-increasing. Final assignments are always nearest-centroid.
KMeansModel kmeans(const Eigen::MatrixXd& points, int K, std::uint64_t seed,
                   long max_iters = 100);

// Independent restarts with derived seeds; keeps the lowest final inertia
// (ties to the earliest restart).
KMeansModel kmeans_best(const Eigen::MatrixXd& points, int K, std::uint64_t seed,
                        long max_iters, int restarts);

}  // namespace pcgain
