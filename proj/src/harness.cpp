#include "cloudseg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cloudseg/features.hpp"
#include "cloudseg/gmm.hpp"
#include "cloudseg/kmeans.hpp"

namespace cloudseg {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Eigen::MatrixXd pool_rows(const std::vector<DesignMatrix>& dms) {
  Eigen::Index total = 0;
  for (const auto& dm : dms) total += dm.X.rows();
  Eigen::MatrixXd X(total, dms.front().X.cols());
  Eigen::Index at = 0;
  for (const auto& dm : dms) {
    X.middleRows(at, dm.X.rows()) = dm.X;
    at += dm.X.rows();
  }
  return X;
}

std::vector<DesignMatrix> assemble_all(const ModelSpec& spec,
                                       const std::vector<LabeledImage>& images) {
  std::vector<DesignMatrix> dms;
  dms.reserve(images.size());
  for (const auto& img : images) {
    dms.push_back(assemble_stacked(img.features, spec.selector, spec.neighborhood_order));
  }
  return dms;
}

// The clusters come out of unsupervised training in arbitrary order; use the
// training labels to fix which one is "clear". Per-pixel posteriors suffice.
void orient_components(TrainedModel& model, const std::vector<DesignMatrix>& dms,
                       const std::vector<LabeledImage>& images) {
  std::vector<int> truth;
  std::vector<int> pred;
  const double eps = model.kind == ModelKind::kKMeans ? 0.0 : model.epsilon;
  for (std::size_t m = 0; m < dms.size(); ++m) {
    DesignMatrix dm = dms[m];
    if (model.standardization) dm = apply_standardization(dm, *model.standardization);
    const Eigen::MatrixXd post = gmm_posterior(dm.X, model.components, eps);
    for (Eigen::Index r = 0; r < post.rows(); ++r) {
      pred.push_back(lambda_decide(post(r, 0), 1.0));
    }
    truth.insert(truth.end(), images[m].labels.labels.begin(),
                 images[m].labels.labels.end());
  }
  try {
    if (j_statistic(confusion(truth, pred)) < 0.0) {
      std::swap(model.components[0], model.components[1]);
    }
  } catch (const std::runtime_error&) {
    // Single-class training labels: orientation is undecidable, keep as-is.
  }
}

MrfConfig mrf_config_of(const TrainedModel& model) {
  MrfConfig cfg;
  cfg.beta = model.beta;
  cfg.clique_order = model.clique_order;
  cfg.epsilon = model.epsilon;
  return cfg;
}

}  // namespace

TrainedModel train_model(const ModelSpec& spec, const std::vector<LabeledImage>& images) {
  if (images.empty()) throw std::runtime_error("train_model: no images");
  const auto dms = assemble_all(spec, images);

  TrainedModel model;
  model.kind = spec.kind;
  model.feature_selector = spec.selector;
  model.neighborhood_order = spec.neighborhood_order;
  model.epsilon = spec.epsilon;
  model.lambda = 1.0;

  switch (spec.kind) {
    case ModelKind::kKMeans: {
      auto [std_dm, stats] = standardize([&] {
        DesignMatrix pooled = dms.front();
        pooled.X = pool_rows(dms);
        return pooled;
      }());
      const auto fit = kmeans_fit(std_dm.X, kNumClasses, spec.max_iter, spec.seed);
      const auto d = std_dm.X.cols();
      std::vector<long> counts(kNumClasses, 0);
      for (int a : fit.assignment) ++counts[a];
      for (int k = 0; k < kNumClasses; ++k) {
        model.components.push_back(
            {fit.centroids.row(k).transpose(), Eigen::MatrixXd::Identity(d, d),
             static_cast<double>(counts[k]) / static_cast<double>(fit.assignment.size())});
      }
      model.epsilon = 0.0;
      model.standardization = stats;
      break;
    }
    case ModelKind::kGmm: {
      EmConfig cfg;
      cfg.k = kNumClasses;
      cfg.epsilon = spec.epsilon;
      cfg.max_iter = spec.max_iter;
      cfg.seed = spec.seed;
      model.components = em_fit(pool_rows(dms), cfg).components;
      break;
    }
    case ModelKind::kIcmMrf:
    case ModelKind::kSaIcmMrf: {
      MrfConfig cfg;
      cfg.beta = spec.beta;
      cfg.clique_order = spec.clique_order;
      cfg.epsilon = spec.epsilon;
      cfg.max_iter = std::min(spec.max_iter, 50);
      cfg.seed = spec.seed;
      std::vector<const DesignMatrix*> ptrs;
      for (const auto& dm : dms) ptrs.push_back(&dm);
      model.components = icm_fit(ptrs, cfg).components;
      model.beta = spec.beta;
      model.clique_order = spec.clique_order;
      model.alpha = spec.alpha;
      model.t0 = spec.t0;
      break;
    }
  }
  orient_components(model, dms, images);
  return model;
}

Prediction predict_on_features(const TrainedModel& model, const DesignMatrix& dm,
                               bool use_sa, const SaConfig* sa_override) {
  if (use_sa && !is_mrf(model.kind)) {
    throw std::runtime_error("SA inference requires an MRF model");
  }
  Prediction out;
  out.labels.rows = dm.grid_rows;
  out.labels.cols = dm.grid_cols;
  out.p_clear.resize(dm.X.rows());

  if (is_mrf(model.kind)) {
    const MrfConfig cfg = mrf_config_of(model);
    const GaussianEvaluator eval(model.components, cfg.epsilon);
    LabelField field;
    if (model.kind == ModelKind::kSaIcmMrf || use_sa) {
      SaConfig sa;
      if (sa_override != nullptr) {
        sa = *sa_override;
      } else {
        sa.alpha = model.alpha;
        sa.t0 = model.t0;
      }
      field = sa_optimize(dm, model.components, cfg, sa);
    } else {
      field = icm_predict(dm, model.components, cfg);
    }
    for (int i = 0; i < dm.grid_rows; ++i) {
      for (int j = 0; j < dm.grid_cols; ++j) {
        out.p_clear[dm.row_of(i, j)] =
            mrf_posterior(dm.X.row(dm.row_of(i, j)).transpose(), field, i, j, eval, cfg)[0];
      }
    }
  } else {
    DesignMatrix local = dm;
    if (model.standardization) local = apply_standardization(dm, *model.standardization);
    const double eps = model.kind == ModelKind::kKMeans ? 0.0 : model.epsilon;
    const Eigen::MatrixXd post = gmm_posterior(local.X, model.components, eps);
    for (Eigen::Index r = 0; r < post.rows(); ++r) out.p_clear[r] = post(r, 0);
  }
  out.labels.labels.resize(out.p_clear.size());
  for (std::size_t p = 0; p < out.p_clear.size(); ++p) {
    out.labels.labels[p] = lambda_decide(out.p_clear[p], model.lambda);
  }
  return out;
}

Prediction predict(const TrainedModel& model, const PixelGrid& grid, bool use_sa,
                   const SaConfig* sa_override) {
  const auto dm =
      assemble_stacked(grid, model.feature_selector, model.neighborhood_order);
  return predict_on_features(model, dm, use_sa, sa_override);
}

std::vector<double> posterior_clear(const TrainedModel& model, const PixelGrid& grid) {
  return predict(model, grid).p_clear;
}

CvReport loo_cv(const ModelSpec& spec, const std::vector<LabeledImage>& images,
                const std::vector<double>& grid, bool record_timings) {
  if (images.size() < 2) throw std::runtime_error("loo_cv needs at least 2 images");

  const bool uses_beta = is_mrf(spec.kind);
  const bool uses_epsilon = spec.kind == ModelKind::kGmm;
  std::vector<double> values = grid;
  if (values.empty()) values = {uses_beta ? spec.beta : spec.epsilon};

  CvReport report;
  report.hyperparameter = uses_beta ? "beta" : (uses_epsilon ? "epsilon" : "none");
  double best_mean = -std::numeric_limits<double>::infinity();

  for (double value : values) {
    ModelSpec point = spec;
    if (uses_beta) point.beta = value;
    if (uses_epsilon) point.epsilon = value;

    struct FoldData {
      std::vector<double> p_clear;
      std::vector<int> truth;
      bool skipped = false;
      double train_ms = 0.0;
    };
    std::vector<FoldData> folds(images.size());
    std::vector<double> pooled;
    for (std::size_t f = 0; f < images.size(); ++f) {
      std::vector<LabeledImage> train;
      for (std::size_t m = 0; m < images.size(); ++m) {
        if (m != f) train.push_back(images[m]);
      }
      const auto t0 = Clock::now();
      const TrainedModel model = train_model(point, train);
      if (record_timings) folds[f].train_ms = ms_since(t0);
      folds[f].truth = images[f].labels.labels;
      const bool has_pos = std::count(folds[f].truth.begin(), folds[f].truth.end(), 1) > 0;
      const bool has_neg =
          std::count(folds[f].truth.begin(), folds[f].truth.end(), -1) > 0;
      if (!has_pos || !has_neg) {
        folds[f].skipped = true;  // J undefined on a single-class image
        continue;
      }
      folds[f].p_clear = posterior_clear(model, images[f].features);
      pooled.insert(pooled.end(), folds[f].p_clear.begin(), folds[f].p_clear.end());
    }
    if (pooled.empty()) {
      throw std::runtime_error("loo_cv: every fold has single-class labels");
    }

    // Joint (hyperparameter, lambda) selection by mean validation J.
    const auto candidates = lambda_candidates(pooled);
    double point_best_j = -std::numeric_limits<double>::infinity();
    double point_best_lambda = 1.0;
    for (double lambda : candidates) {
      double sum = 0.0;
      int n = 0;
      for (const auto& fold : folds) {
        if (fold.skipped) continue;
        std::vector<int> pred(fold.p_clear.size());
        for (std::size_t p = 0; p < pred.size(); ++p) {
          pred[p] = lambda_decide(fold.p_clear[p], lambda);
        }
        sum += j_statistic(confusion(fold.truth, pred));
        ++n;
      }
      const double mean = sum / n;
      if (mean > point_best_j) {
        point_best_j = mean;
        point_best_lambda = lambda;
      }
    }

    if (point_best_j > best_mean) {
      best_mean = point_best_j;
      report.selected_value = value;
      report.selected_lambda = point_best_lambda;
      report.mean_j = point_best_j;
      report.folds.clear();
      for (std::size_t f = 0; f < folds.size(); ++f) {
        FoldResult fr;
        fr.held_out = static_cast<int>(f);
        fr.skipped = folds[f].skipped;
        fr.lambda = point_best_lambda;
        fr.train_ms = folds[f].train_ms;
        if (!folds[f].skipped) {
          std::vector<int> pred(folds[f].p_clear.size());
          for (std::size_t p = 0; p < pred.size(); ++p) {
            pred[p] = lambda_decide(folds[f].p_clear[p], point_best_lambda);
          }
          fr.j = j_statistic(confusion(folds[f].truth, pred));
        }
        report.folds.push_back(fr);
      }
    }
  }

  ModelSpec winner = spec;
  if (uses_beta) winner.beta = report.selected_value;
  if (uses_epsilon) winner.epsilon = report.selected_value;
  report.final_model = train_model(winner, images);
  report.final_model.lambda = report.selected_lambda;
  return report;
}

std::vector<LabeledImage> synth_dataset(const SynthConfig& cfg) {
  if (cfg.n_images < 1 || cfg.rows < 2 || cfg.cols < 2) {
    throw std::runtime_error("invalid synthetic dataset configuration");
  }
  if (!(cfg.separation >= 0.0)) throw std::runtime_error("separation must be >= 0");
  const auto& channels = selector_channels(cfg.selector);
  const int d = static_cast<int>(channels.size());
  // Class means a Euclidean distance `separation` apart, unit variance.
  const double shift = cfg.separation / std::sqrt(static_cast<double>(d));

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<LabeledImage> images;

  const std::size_t n = static_cast<std::size_t>(cfg.rows) * cfg.cols;
  for (int m = 0; m < cfg.n_images; ++m) {
    // Blob-shaped labels: threshold separable box-smoothed white noise.
    std::vector<double> noise(n);
    for (auto& v : noise) v = gauss(rng);
    std::vector<double> tmp(n);
    for (int pass = 0; pass < cfg.smoothing_passes; ++pass) {
      for (int i = 0; i < cfg.rows; ++i) {
        for (int j = 0; j < cfg.cols; ++j) {
          double acc = 0.0;
          int cnt = 0;
          for (int dj = -cfg.smoothing_radius; dj <= cfg.smoothing_radius; ++dj) {
            const int jj = j + dj;
            if (jj < 0 || jj >= cfg.cols) continue;
            acc += noise[static_cast<std::size_t>(i) * cfg.cols + jj];
            ++cnt;
          }
          tmp[static_cast<std::size_t>(i) * cfg.cols + j] = acc / cnt;
        }
      }
      for (int i = 0; i < cfg.rows; ++i) {
        for (int j = 0; j < cfg.cols; ++j) {
          double acc = 0.0;
          int cnt = 0;
          for (int di = -cfg.smoothing_radius; di <= cfg.smoothing_radius; ++di) {
            const int ii = i + di;
            if (ii < 0 || ii >= cfg.rows) continue;
            acc += tmp[static_cast<std::size_t>(ii) * cfg.cols + j];
            ++cnt;
          }
          noise[static_cast<std::size_t>(i) * cfg.cols + j] = acc / cnt;
        }
      }
    }
    std::vector<double> sorted = noise;
    std::sort(sorted.begin(), sorted.end());
    const auto q = static_cast<std::size_t>(
        std::clamp(1.0 - cfg.cloud_fraction, 0.0, 1.0) * (n - 1));
    const double threshold = sorted[q];

    LabeledImage img;
    img.labels.rows = cfg.rows;
    img.labels.cols = cfg.cols;
    img.labels.labels.resize(n);
    img.features.rows = cfg.rows;
    img.features.cols = cfg.cols;
    img.features.channels = channels;
    img.features.data.resize(n * d);
    for (std::size_t p = 0; p < n; ++p) {
      const int y = noise[p] > threshold ? +1 : -1;
      img.labels.labels[p] = y;
      for (int c = 0; c < d; ++c) {
        img.features.data[p * d + c] = (y > 0 ? shift : 0.0) + gauss(rng);
      }
    }
    images.push_back(std::move(img));
  }
  return images;
}

BenchReport benchmark(const std::vector<TrainedModel>& models,
                      const std::vector<LabeledImage>& test_images, int repetitions) {
  if (repetitions < 1) throw std::runtime_error("benchmark: repetitions must be >= 1");
  if (test_images.empty()) throw std::runtime_error("benchmark: no test images");
  BenchReport report;
  report.repetitions = repetitions;

  for (const auto& model : models) {
    BenchEntry entry;
    entry.model = to_string(model.kind);
    entry.selector = model.feature_selector;
    entry.neighborhood_order = model.neighborhood_order;
    entry.clique_order = is_mrf(model.kind) ? model.clique_order : 0;

    // Feature assembly timed separately from inference.
    std::vector<DesignMatrix> dms;
    double feature_ms = 0.0;
    for (const auto& img : test_images) {
      const auto t0 = Clock::now();
      dms.push_back(assemble_stacked(img.features, model.feature_selector,
                                     model.neighborhood_order));
      feature_ms += ms_since(t0);
    }
    entry.feature_ms = feature_ms / static_cast<double>(test_images.size());

    for (int w = 0; w < 5; ++w) {
      (void)predict_on_features(model, dms.front());
    }
    std::vector<int> truth;
    std::vector<int> pred;
    for (std::size_t m = 0; m < dms.size(); ++m) {
      for (int r = 0; r < repetitions; ++r) {
        const auto t0 = Clock::now();
        const Prediction p = predict_on_features(model, dms[m]);
        entry.samples_ms.push_back(ms_since(t0));
        if (r == 0) {
          pred.insert(pred.end(), p.labels.labels.begin(), p.labels.labels.end());
        }
      }
      truth.insert(truth.end(), test_images[m].labels.labels.begin(),
                   test_images[m].labels.labels.end());
    }
    std::vector<double> sorted = entry.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    entry.median_ms = sorted[sorted.size() / 2];
    entry.mean_ms = 0.0;
    for (double s : sorted) entry.mean_ms += s;
    entry.mean_ms /= static_cast<double>(sorted.size());

    const Confusion c = confusion(truth, pred);
    entry.j = j_statistic(c);
    entry.jaccard = jaccard(c);
    entry.f1 = f1(c);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::string bench_table(const BenchReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "model" << std::setw(10) << "features"
      << std::setw(7) << "order" << std::setw(8) << "clique" << std::right
      << std::setw(9) << "J[%]" << std::setw(9) << "JI" << std::setw(9) << "F1"
      << std::setw(12) << "median[ms]" << std::setw(12) << "mean[ms]"
      << std::setw(12) << "feat[ms]" << '\n';
  out << std::string(100, '-') << '\n';
  out << std::fixed;
  for (const auto& e : report.entries) {
    out << std::left << std::setw(12) << e.model << std::setw(10) << e.selector
        << std::setw(7) << e.neighborhood_order << std::setw(8)
        << (e.clique_order == 0 ? std::string("-") : std::to_string(e.clique_order))
        << std::right << std::setprecision(2) << std::setw(9) << 100.0 * e.j
        << std::setprecision(4) << std::setw(9) << e.jaccard << std::setw(9) << e.f1
        << std::setprecision(3) << std::setw(12) << e.median_ms << std::setw(12)
        << e.mean_ms << std::setw(12) << e.feature_ms << '\n';
  }
  return out.str();
}

}  // namespace cloudseg
