#ifndef CLOUDSEG_METRICS_HPP_
#define CLOUDSEG_METRICS_HPP_

#include <vector>

#include "cloudseg/core.hpp"

// Binary-classification scoring (Youden J, Jaccard, F1) and virtual-prior
// lambda selection by ROC sweep. Positive class is cloud (+1).
namespace cloudseg {

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

Confusion confusion(const LabelGrid& truth, const LabelGrid& pred);
Confusion confusion(const std::vector<int>& truth, const std::vector<int>& pred);

// J = sensitivity + specificity - 1. Throws when either class is absent
// from the truth (undefined sensitivity/specificity).
double j_statistic(const Confusion& c);

double jaccard(const Confusion& c);  // tp / (tp+fp+fn)
double f1(const Confusion& c);       // 2tp / (2tp+fp+fn)

// Virtual-prior decision: score1 = clamp(lambda*p_clear, 0, 1),
// score2 = 1 - score1; cloud (+1) iff score2 > score1, ties -> clear.
int lambda_decide(double p_clear, double lambda);

struct LambdaChoice {
  double lambda = 1.0;
  double j = 0.0;
};

// Candidate lambdas realizing every operating point achievable by
// thresholding the clear-class posteriors, plus lambda = 1.
std::vector<double> lambda_candidates(const std::vector<double>& p_clear);

// Evaluates J for each candidate and returns the argmax; ties -> smaller
// lambda. Truth labels in {-1,+1}.
LambdaChoice lambda_search(const std::vector<double>& p_clear,
                           const std::vector<int>& y_true,
                           const std::vector<double>& candidates);

}  // namespace cloudseg

#endif  // CLOUDSEG_METRICS_HPP_
