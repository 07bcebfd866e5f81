#include "cloudseg/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace cloudseg {

namespace {

Eigen::MatrixXd regularized(const Eigen::MatrixXd& cov, double epsilon) {
  return cov + epsilon * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
}

// Population covariance of the rows of X.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& X) {
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(X.rows());
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

GaussianEvaluator::GaussianEvaluator(const std::vector<GaussianComponent>& comps,
                                     double epsilon) {
  if (comps.empty()) throw std::runtime_error("no components");
  const auto d = comps.front().mean.size();
  log_norm_const_ = 0.5 * d * std::log(2.0 * std::numbers::pi);
  for (const auto& c : comps) {
    Eigen::LLT<Eigen::MatrixXd> llt(regularized(c.covariance, epsilon));
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("regularized covariance is not positive definite");
    }
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    cholesky_.push_back(std::move(llt));
    log_det_.push_back(logdet);
    log_prior_.push_back(c.prior > 0.0 ? std::log(c.prior)
                                       : -std::numeric_limits<double>::infinity());
    means_.push_back(c.mean);
  }
}

double GaussianEvaluator::datafit(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  int k) const {
  Eigen::VectorXd v = x - means_[k];
  cholesky_[k].matrixL().solveInPlace(v);
  return -0.5 * log_det_[k] - 0.5 * v.squaredNorm();
}

double GaussianEvaluator::logpdf(const Eigen::Ref<const Eigen::VectorXd>& x,
                                 int k) const {
  return datafit(x, k) - log_norm_const_;
}

double GaussianEvaluator::log_prior(int k) const { return log_prior_[k]; }

double gaussian_logpdf(const Eigen::VectorXd& x, const GaussianComponent& comp,
                       double epsilon) {
  if (epsilon < 0.0) throw std::runtime_error("epsilon must be non-negative");
  if ((comp.covariance - comp.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::runtime_error("covariance not symmetric");
  }
  return GaussianEvaluator({comp}, epsilon).logpdf(x, 0);
}

Eigen::MatrixXd e_step(const Eigen::MatrixXd& X,
                       const std::vector<GaussianComponent>& comps, double epsilon) {
  const GaussianEvaluator eval(comps, epsilon);
  const auto n = X.rows();
  const auto k = eval.num_components();
  Eigen::MatrixXd gamma(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd log_post(k);
    for (int c = 0; c < k; ++c) {
      log_post[c] = eval.log_prior(c) + eval.logpdf(X.row(i).transpose(), c);
    }
    const double m = log_post.maxCoeff();
    if (!std::isfinite(m)) throw std::runtime_error("non-finite posterior in E-step");
    // Scalar exp: the vectorized path clamps instead of flushing to zero,
    // which would leave zero-prior components with denormal responsibilities.
    Eigen::VectorXd w(k);
    for (int c = 0; c < k; ++c) w[c] = std::exp(log_post[c] - m);
    gamma.row(i) = (w / w.sum()).transpose();
  }
  return gamma;
}

std::vector<GaussianComponent> m_step(const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& gamma) {
  const auto n = X.rows();
  const auto d = X.cols();
  const auto k = gamma.cols();
  std::vector<GaussianComponent> comps(k);

  std::vector<Eigen::Index> empty;
  for (Eigen::Index c = 0; c < k; ++c) {
    // Sequential row-order sums keep results thread-count independent.
    double wsum = 0.0;
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double g = gamma(i, c);
      wsum += g;
      mu += g * X.row(i).transpose();
      second += g * X.row(i).transpose() * X.row(i);
    }
    if (wsum <= static_cast<double>(n) * 1e-12) {
      empty.push_back(c);
      continue;
    }
    mu /= wsum;
    Eigen::MatrixXd cov = second / wsum - mu * mu.transpose();
    comps[c].mean = mu;
    comps[c].covariance = 0.5 * (cov + cov.transpose());
    comps[c].prior = wsum / static_cast<double>(n);
  }

  // Empty-cluster rescue: reseed from the sample farthest in Mahalanobis
  // distance under the pooled moments.
  if (!empty.empty()) {
    const Eigen::VectorXd pooled_mean = X.colwise().mean();
    Eigen::MatrixXd pooled_cov = regularized(sample_covariance(X), 1e-9);
    Eigen::LLT<Eigen::MatrixXd> llt(pooled_cov);
    Eigen::Index farthest = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd v = X.row(i).transpose() - pooled_mean;
      llt.matrixL().solveInPlace(v);
      if (v.squaredNorm() > best) {
        best = v.squaredNorm();
        farthest = i;
      }
    }
    for (Eigen::Index c : empty) {
      comps[c].mean = X.row(farthest).transpose();
      comps[c].covariance = sample_covariance(X);
      comps[c].prior = 1.0 / static_cast<double>(n);
    }
    double total = 0.0;
    for (const auto& comp : comps) total += comp.prior;
    for (auto& comp : comps) comp.prior /= total;
  }
  return comps;
}

namespace {

double observed_log_likelihood(const Eigen::MatrixXd& X,
                               const std::vector<GaussianComponent>& comps,
                               double epsilon) {
  const GaussianEvaluator eval(comps, epsilon);
  const auto k = eval.num_components();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::VectorXd lp(k);
    for (int c = 0; c < k; ++c) {
      lp[c] = eval.log_prior(c) + eval.logpdf(X.row(i).transpose(), c);
    }
    const double m = lp.maxCoeff();
    double s = 0.0;
    for (int c = 0; c < k; ++c) s += std::exp(lp[c] - m);
    ll += m + std::log(s);
  }
  return ll;
}

// K distinct sample indices drawn uniformly without replacement.
std::vector<Eigen::Index> draw_distinct(Eigen::Index n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> dist(0, n - 1);
  std::vector<Eigen::Index> picks;
  while (static_cast<int>(picks.size()) < k) {
    const Eigen::Index i = dist(rng);
    if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
  }
  return picks;
}

}  // namespace

EmResult em_fit(const Eigen::MatrixXd& X, const EmConfig& cfg) {
  if (cfg.k < 1 || cfg.max_iter < 1 || !(cfg.tol > 0.0)) {
    throw std::runtime_error("invalid EM configuration");
  }
  if (X.rows() < cfg.k) throw std::runtime_error("fewer samples than components");

  // Seeded init: K distinct samples as means, pooled covariance, uniform priors.
  const Eigen::MatrixXd cov0 = sample_covariance(X);
  std::vector<GaussianComponent> comps;
  for (Eigen::Index i : draw_distinct(X.rows(), cfg.k, cfg.seed)) {
    comps.push_back({X.row(i).transpose(), cov0, 1.0 / cfg.k});
  }

  EmResult result;
  double prev_ll = observed_log_likelihood(X, comps, cfg.epsilon);
  result.ll_trace.push_back(prev_ll);
  for (int it = 0; it < cfg.max_iter; ++it) {
    const Eigen::MatrixXd gamma = e_step(X, comps, cfg.epsilon);
    comps = m_step(X, gamma);
    const double ll = observed_log_likelihood(X, comps, cfg.epsilon);
    if (!std::isfinite(ll)) throw std::runtime_error("non-finite likelihood in EM");
    result.ll_trace.push_back(ll);
    result.iterations = it + 1;
    if (std::abs(ll - prev_ll) < cfg.tol * std::max(1.0, std::abs(prev_ll))) {
      prev_ll = ll;
      break;
    }
    prev_ll = ll;
  }
  result.components = std::move(comps);
  result.log_likelihood = prev_ll;
  return result;
}

Eigen::MatrixXd gmm_posterior(const Eigen::MatrixXd& X,
                              const std::vector<GaussianComponent>& comps,
                              double epsilon) {
  return e_step(X, comps, epsilon);
}

std::vector<int> map_predict(const Eigen::MatrixXd& posterior) {
  std::vector<int> labels(posterior.rows());
  for (Eigen::Index i = 0; i < posterior.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < posterior.cols(); ++c) {
      if (posterior(i, c) > posterior(i, best)) best = static_cast<int>(c);
    }
    labels[i] = best;
  }
  return labels;
}

}  // namespace cloudseg
