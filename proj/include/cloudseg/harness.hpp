#ifndef CLOUDSEG_HARNESS_HPP_
#define CLOUDSEG_HARNESS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cloudseg/core.hpp"
#include "cloudseg/metrics.hpp"
#include "cloudseg/mrf.hpp"

// Experiment protocol: model training/prediction plumbing, leave-one-out
// cross-validation with hyperparameter and lambda selection, synthetic
// dataset generation and inference-latency benchmarking.
namespace cloudseg {

// Everything needed to train a model except the cross-validated value.
struct ModelSpec {
  ModelKind kind = ModelKind::kGmm;
  std::string selector = "x1";
  int neighborhood_order = 0;
  int clique_order = 1;
  double epsilon = 0.0;   // gmm default; fixed to 1 on MRF paths
  double beta = 1.0;      // MRF
  double alpha = 0.75;    // SA
  double t0 = 0.0;        // SA, 0 = auto
  long sa_iterations = 0; // SA, 0 = 5*M*N
  int max_iter = 300;
  std::uint64_t seed = 0;
};

// Trains on the given images. Labels are used only to orient the two
// unsupervised clusters (clear vs cloud) and for nothing else; lambda is
// NOT selected here (see loo_cv).
TrainedModel train_model(const ModelSpec& spec, const std::vector<LabeledImage>& images);

struct Prediction {
  LabelGrid labels;
  std::vector<double> p_clear;  // per pixel, raster order
};

// Full inference path: feature assembly, model-specific posterior or field
// optimization, lambda reweighting.
Prediction predict(const TrainedModel& model, const PixelGrid& grid,
                   bool use_sa = false, const SaConfig* sa_override = nullptr);

// Inference on pre-assembled features (the path the benchmark times).
Prediction predict_on_features(const TrainedModel& model, const DesignMatrix& dm,
                               bool use_sa = false,
                               const SaConfig* sa_override = nullptr);

// Clear-class posteriors without the lambda decision (lambda selection input).
std::vector<double> posterior_clear(const TrainedModel& model, const PixelGrid& grid);

struct FoldResult {
  int held_out = 0;
  double j = 0.0;
  double lambda = 1.0;
  bool skipped = false;     // single-class validation image
  double train_ms = 0.0;
};

struct CvReport {
  std::string hyperparameter;   // "epsilon", "beta" or "none"
  double selected_value = 0.0;
  double selected_lambda = 1.0;
  double mean_j = 0.0;
  std::vector<FoldResult> folds;  // folds of the winning grid point
  TrainedModel final_model;       // refit on all images with the winner
};

// Grid of candidate hyperparameter values; empty means a single default
// point (spec.epsilon / spec.beta).
CvReport loo_cv(const ModelSpec& spec, const std::vector<LabeledImage>& images,
                const std::vector<double>& grid, bool record_timings = false);

struct SynthConfig {
  std::uint64_t seed = 0;
  int n_images = 1;
  int rows = 80;
  int cols = 60;
  std::string selector = "x1";
  double separation = 5.0;      // Euclidean distance between class means, in sigma
  double cloud_fraction = 0.5;  // label threshold quantile
  int smoothing_radius = 6;     // separable box-blur radius for blob shapes
  int smoothing_passes = 3;
};

// Blob-shaped labels from thresholded separable smoothing of seeded noise;
// features drawn per pixel from the class-conditional Gaussians.
std::vector<LabeledImage> synth_dataset(const SynthConfig& cfg);

struct BenchEntry {
  std::string model;
  std::string selector;
  int neighborhood_order = 0;
  int clique_order = 0;  // 0 for non-MRF
  double median_ms = 0.0;
  double mean_ms = 0.0;
  double feature_ms = 0.0;  // feature assembly, timed separately
  double j = 0.0;
  double jaccard = 0.0;
  double f1 = 0.0;
  std::vector<double> samples_ms;
};

struct BenchReport {
  int repetitions = 0;
  bool lambda_included = true;  // reweighting is part of the timed prediction
  std::vector<BenchEntry> entries;
};

// Wall-clock inference-only latency per image (warm-up of 5 discarded
// runs), serialized on a single thread. Scores are pooled over test images.
BenchReport benchmark(const std::vector<TrainedModel>& models,
                      const std::vector<LabeledImage>& test_images, int repetitions);

// Table 1-style aligned plain-text rendering of a benchmark report.
std::string bench_table(const BenchReport& report);

}  // namespace cloudseg

#endif  // CLOUDSEG_HARNESS_HPP_
