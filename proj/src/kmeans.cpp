#include "cloudseg/kmeans.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace cloudseg {

namespace {

double distortion_of(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids,
                     const std::vector<int>& assignment) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    total += (X.row(i) - centroids.row(assignment[i])).squaredNorm();
  }
  return total;
}

}  // namespace

std::vector<int> kmeans_assign(const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& centroids) {
  if (X.cols() != centroids.cols()) {
    throw std::runtime_error("kmeans dimension mismatch");
  }
  std::vector<int> assignment(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    int best = 0;
    double best_d = (X.row(i) - centroids.row(0)).squaredNorm();
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
      const double d = (X.row(i) - centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    assignment[i] = best;
  }
  return assignment;
}

KMeansResult kmeans_fit(const Eigen::MatrixXd& X, int k, int max_iter,
                        std::uint64_t seed) {
  if (X.rows() < k) throw std::runtime_error("fewer samples than clusters");
  if (k < 1 || max_iter < 1) throw std::runtime_error("invalid kmeans configuration");
  // Caller standardizes; a grossly off-center matrix indicates a missed step.
  const double scale = std::max(1.0, X.cwiseAbs().maxCoeff());
  if (X.colwise().mean().cwiseAbs().maxCoeff() > 1e-6 * scale) {
    throw std::runtime_error("kmeans input is not standardized (column means non-zero)");
  }

  // Same seeded init policy as EM: K distinct samples.
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> dist(0, X.rows() - 1);
  std::vector<Eigen::Index> picks;
  while (static_cast<int>(picks.size()) < k) {
    const Eigen::Index i = dist(rng);
    if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
  }
  Eigen::MatrixXd centroids(k, X.cols());
  for (int c = 0; c < k; ++c) centroids.row(c) = X.row(picks[c]);

  KMeansResult result;
  std::vector<int> assignment = kmeans_assign(X, centroids);
  for (int it = 0; it < max_iter; ++it) {
    result.iterations = it + 1;
    // Centroid update: one hard-responsibility M-step, row-order sums.
    for (int c = 0; c < k; ++c) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(X.cols());
      Eigen::Index count = 0;
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        if (assignment[i] == c) {
          sum += X.row(i).transpose();
          ++count;
        }
      }
      if (count == 0) {
        // Reseed with the point farthest from the emptied centroid.
        Eigen::Index farthest = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
          const double d = (X.row(i) - centroids.row(c)).squaredNorm();
          if (d > best) {
            best = d;
            farthest = i;
          }
        }
        centroids.row(c) = X.row(farthest);
      } else {
        centroids.row(c) = sum.transpose() / static_cast<double>(count);
      }
    }
    std::vector<int> next = kmeans_assign(X, centroids);
    const bool stable = next == assignment;
    assignment = std::move(next);
    if (stable) break;
  }
  result.centroids = std::move(centroids);
  result.distortion = distortion_of(X, result.centroids, assignment);
  result.assignment = std::move(assignment);
  return result;
}

}  // namespace cloudseg
