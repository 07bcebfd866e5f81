#ifndef CLOUDSEG_KMEANS_HPP_
#define CLOUDSEG_KMEANS_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

// Lloyd's k-means: the identity-covariance, hard-responsibility
// particularization of the mixture model. Operates on standardized features.
namespace cloudseg {

struct KMeansResult {
  Eigen::MatrixXd centroids;  // K x d
  std::vector<int> assignment;
  double distortion = 0.0;
  int iterations = 0;
};

// Hard-assigns by nearest Euclidean centroid and recomputes means until the
// assignment is stable or max_iter. Initial centroids are K distinct samples
// drawn with the seeded policy shared with EM. An emptied cluster is
// reseeded with the point farthest from its previous centroid.
KMeansResult kmeans_fit(const Eigen::MatrixXd& X, int k, int max_iter,
                        std::uint64_t seed);

// Nearest centroid per row; ties toward the smaller index.
std::vector<int> kmeans_assign(const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& centroids);

}  // namespace cloudseg

#endif  // CLOUDSEG_KMEANS_HPP_
