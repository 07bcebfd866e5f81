#ifndef CLOUDSEG_GMM_HPP_
#define CLOUDSEG_GMM_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cloudseg/core.hpp"

// Gaussian mixture fitted by EM with covariance regularization
// (Sigma_k <- Sigma_k + eps*I), plus MAP classification.
namespace cloudseg {

struct EmConfig {
  int k = 2;
  double epsilon = 0.0;
  int max_iter = 300;
  double tol = 1e-6;  // relative log-likelihood change
  std::uint64_t seed = 0;
};

struct EmResult {
  std::vector<GaussianComponent> components;
  double log_likelihood = 0.0;
  int iterations = 0;
  std::vector<double> ll_trace;
};

// Cholesky-backed evaluator for a fixed set of regularized components.
class GaussianEvaluator {
 public:
  GaussianEvaluator(const std::vector<GaussianComponent>& comps, double epsilon);

  // log f(x; mu_k, Sigma_k + eps*I)
  double logpdf(const Eigen::Ref<const Eigen::VectorXd>& x, int k) const;
  // logpdf dropping the -(d/2)log(2pi) constant: -1/2 logdet - 1/2 quad.
  double datafit(const Eigen::Ref<const Eigen::VectorXd>& x, int k) const;
  double log_prior(int k) const;
  int num_components() const { return static_cast<int>(cholesky_.size()); }

 private:
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> cholesky_;
  std::vector<double> log_det_;
  std::vector<double> log_prior_;
  double log_norm_const_;  // (d/2) log(2*pi)
};

double gaussian_logpdf(const Eigen::VectorXd& x, const GaussianComponent& comp,
                       double epsilon);

// Responsibilities gamma_{i,k} ∝ pi_k f(x_i; mu_k, Sigma_k + eps I),
// computed in log space with per-row max subtraction. Rows sum to 1.
Eigen::MatrixXd e_step(const Eigen::MatrixXd& X,
                       const std::vector<GaussianComponent>& comps, double epsilon);

// Weighted-moment update; covariances symmetrized, priors gamma_k / N.
// An empty cluster is reseeded from the sample farthest in Mahalanobis
// distance under the pooled moments.
std::vector<GaussianComponent> m_step(const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& gamma);

EmResult em_fit(const Eigen::MatrixXd& X, const EmConfig& cfg);

// N x K posterior matrix; rows sum to 1.
Eigen::MatrixXd gmm_posterior(const Eigen::MatrixXd& X,
                              const std::vector<GaussianComponent>& comps,
                              double epsilon);

// MAP per row; ties broken toward the smaller component index.
std::vector<int> map_predict(const Eigen::MatrixXd& posterior);

}  // namespace cloudseg

#endif  // CLOUDSEG_GMM_HPP_
