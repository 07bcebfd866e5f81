#include "cloudseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cloudseg {

Confusion confusion(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) {
    throw std::runtime_error("confusion: dimension mismatch");
  }
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] > 0) {
      pred[i] > 0 ? ++c.tp : ++c.fn;
    } else {
      pred[i] > 0 ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

Confusion confusion(const LabelGrid& truth, const LabelGrid& pred) {
  if (truth.rows != pred.rows || truth.cols != pred.cols) {
    throw std::runtime_error("confusion: dimension mismatch");
  }
  return confusion(truth.labels, pred.labels);
}

double j_statistic(const Confusion& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) {
    throw std::runtime_error("undefined sensitivity/specificity: a class is absent");
  }
  const double sensitivity = static_cast<double>(c.tp) / (c.tp + c.fn);
  const double specificity = static_cast<double>(c.tn) / (c.tn + c.fp);
  return sensitivity + specificity - 1.0;
}

double jaccard(const Confusion& c) {
  if (c.tp + c.fp + c.fn == 0) {
    throw std::runtime_error("jaccard undefined: no positives predicted or present");
  }
  return static_cast<double>(c.tp) / (c.tp + c.fp + c.fn);
}

double f1(const Confusion& c) {
  if (2 * c.tp + c.fp + c.fn == 0) {
    throw std::runtime_error("f1 undefined: no positives predicted or present");
  }
  return static_cast<double>(2 * c.tp) / (2 * c.tp + c.fp + c.fn);
}

int lambda_decide(double p_clear, double lambda) {
  const double s1 = std::clamp(lambda * p_clear, 0.0, 1.0);
  const double s2 = 1.0 - s1;
  return s2 > s1 ? +1 : -1;
}

std::vector<double> lambda_candidates(const std::vector<double>& p_clear) {
  // The decision is cloud iff lambda*p_clear < 1/2, i.e. a threshold
  // t = 1/(2*lambda) on p_clear. Midpoints between sorted unique posterior
  // values (plus beyond-the-ends points) realize every operating point.
  std::vector<double> p = p_clear;
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());

  std::vector<double> thresholds;
  if (!p.empty()) {
    if (p.front() > 0.0) thresholds.push_back(p.front() / 2.0);
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      thresholds.push_back(0.5 * (p[i] + p[i + 1]));
    }
    thresholds.push_back(p.back() + 0.5);
  }
  std::vector<double> lambdas = {1.0};
  for (double t : thresholds) {
    if (t > 0.0) lambdas.push_back(0.5 / t);
  }
  std::sort(lambdas.begin(), lambdas.end());
  lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());
  return lambdas;
}

LambdaChoice lambda_search(const std::vector<double>& p_clear,
                           const std::vector<int>& y_true,
                           const std::vector<double>& candidates) {
  if (candidates.empty()) throw std::runtime_error("lambda_search: no candidates");
  if (p_clear.size() != y_true.size()) {
    throw std::runtime_error("lambda_search: dimension mismatch");
  }
  LambdaChoice best;
  bool first = true;
  std::vector<int> pred(p_clear.size());
  for (double lambda : candidates) {
    for (std::size_t i = 0; i < p_clear.size(); ++i) {
      pred[i] = lambda_decide(p_clear[i], lambda);
    }
    const double j = j_statistic(confusion(y_true, pred));
    if (first || j > best.j || (j == best.j && lambda < best.lambda)) {
      best = {lambda, j};
      first = false;
    }
  }
  return best;
}

}  // namespace cloudseg
