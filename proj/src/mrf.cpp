#include "cloudseg/mrf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>

namespace cloudseg {

namespace {

// Forward pairs for the single-count total: each in-grid clique visited once.
const std::vector<std::pair<int, int>>& forward_offsets(int order) {
  static const std::vector<std::pair<int, int>> first = {{0, 1}, {1, 0}};
  static const std::vector<std::pair<int, int>> second = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  switch (order) {
    case 1: return first;
    case 2: return second;
    default: throw std::runtime_error("clique order must be 1 or 2");
  }
}

void check_config(const MrfConfig& cfg) {
  if (cfg.clique_order != 1 && cfg.clique_order != 2) {
    throw std::runtime_error("clique order must be 1 or 2");
  }
  if (cfg.epsilon < 0.0) throw std::runtime_error("epsilon must be non-negative");
}

std::vector<GaussianComponent> class_moments(
    const std::vector<const DesignMatrix*>& images,
    std::vector<LabelField>& fields, const GaussianEvaluator* prev_eval) {
  const auto d = images.front()->X.cols();
  std::vector<long> counts(kNumClasses, 0);
  long total = 0;
  for (const auto& f : fields) {
    for (int y : f.y) ++counts[class_of_label(y)];
    total += static_cast<long>(f.y.size());
  }

  // Rescue an empty class by handing it the globally lowest-energy pixel.
  for (int k = 0; k < kNumClasses; ++k) {
    if (counts[k] >= 2) continue;
    std::size_t best_img = 0, best_pix = 0;
    double best_e = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < images.size() && best_e > -1e300; ++m) {
      for (std::size_t p = 0; p < fields[m].y.size(); ++p) {
        if (class_of_label(fields[m].y[p]) == k) continue;
        if (prev_eval == nullptr) {  // raster-first fallback
          best_img = m;
          best_pix = p;
          best_e = -1e301;
          break;
        }
        const double e = prev_eval->datafit(
            images[m]->X.row(static_cast<Eigen::Index>(p)).transpose(),
            class_of_label(fields[m].y[p]));
        if (e < best_e) {
          best_e = e;
          best_img = m;
          best_pix = p;
        }
      }
    }
    const int old = fields[best_img].y[best_pix];
    --counts[class_of_label(old)];
    fields[best_img].y[best_pix] = label_of_class(k);
    ++counts[k];
  }

  std::vector<GaussianComponent> comps(kNumClasses);
  for (int k = 0; k < kNumClasses; ++k) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (std::size_t m = 0; m < images.size(); ++m) {
      const auto& X = images[m]->X;
      for (std::size_t p = 0; p < fields[m].y.size(); ++p) {
        if (class_of_label(fields[m].y[p]) == k) {
          mu += X.row(static_cast<Eigen::Index>(p)).transpose();
        }
      }
    }
    mu /= static_cast<double>(counts[k]);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t m = 0; m < images.size(); ++m) {
      const auto& X = images[m]->X;
      for (std::size_t p = 0; p < fields[m].y.size(); ++p) {
        if (class_of_label(fields[m].y[p]) == k) {
          const Eigen::VectorXd v = X.row(static_cast<Eigen::Index>(p)).transpose() - mu;
          cov += v * v.transpose();
        }
      }
    }
    // Unbiased class covariance.
    if (counts[k] > 1) cov /= static_cast<double>(counts[k] - 1);
    comps[k].mean = std::move(mu);
    comps[k].covariance = 0.5 * (cov + cov.transpose());
    comps[k].prior = static_cast<double>(counts[k]) / static_cast<double>(total);
  }
  return comps;
}

// One sequential raster argmax sweep; returns the number of changed pixels.
long icm_sweep(const DesignMatrix& image, LabelField& field,
               const GaussianEvaluator& eval, const MrfConfig& cfg) {
  long changed = 0;
  for (int i = 0; i < field.rows; ++i) {
    for (int j = 0; j < field.cols; ++j) {
      const auto x = image.X.row(image.row_of(i, j)).transpose();
      int best = 0;
      double best_e = pixel_energy(x, 0, field, i, j, eval, cfg);
      for (int k = 1; k < kNumClasses; ++k) {
        const double e = pixel_energy(x, k, field, i, j, eval, cfg);
        if (e > best_e) {
          best_e = e;
          best = k;
        }
      }
      if (field.label(i, j) != label_of_class(best)) {
        field.set_label(i, j, label_of_class(best));
        ++changed;
      }
    }
  }
  return changed;
}

}  // namespace

LabelGrid LabelField::to_grid() const {
  LabelGrid g;
  g.rows = rows;
  g.cols = cols;
  g.labels = y;
  return g;
}

LabelField field_from_grid(const LabelGrid& grid) {
  LabelField f;
  f.rows = grid.rows;
  f.cols = grid.cols;
  f.y = grid.labels;
  return f;
}

double potential(const LabelField& field, int i, int j, int candidate,
                 const MrfConfig& cfg) {
  check_config(cfg);
  double psi = 0.0;
  for (const auto& [di, dj] : neighbor_offsets(cfg.clique_order)) {
    const int ni = i + di;
    const int nj = j + dj;
    if (ni < 0 || ni >= field.rows || nj < 0 || nj >= field.cols) continue;
    psi += candidate * cfg.beta * field.label(ni, nj);
  }
  return psi;
}

double pixel_energy(const Eigen::Ref<const Eigen::VectorXd>& x, int k,
                    const LabelField& field, int i, int j,
                    const GaussianEvaluator& eval, const MrfConfig& cfg) {
  return eval.datafit(x, k) + potential(field, i, j, label_of_class(k), cfg);
}

Eigen::Vector2d mrf_posterior(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const LabelField& field, int i, int j,
                              const GaussianEvaluator& eval, const MrfConfig& cfg) {
  Eigen::Vector2d e;
  for (int k = 0; k < kNumClasses; ++k) e[k] = pixel_energy(x, k, field, i, j, eval, cfg);
  const double m = e.maxCoeff();
  Eigen::Vector2d w;
  for (int k = 0; k < kNumClasses; ++k) w[k] = std::exp(e[k] - m);
  return w / w.sum();
}

double total_energy(const Eigen::MatrixXd& X, const LabelField& field,
                    const GaussianEvaluator& eval, const MrfConfig& cfg) {
  check_config(cfg);
  double total = 0.0;
  for (int i = 0; i < field.rows; ++i) {
    for (int j = 0; j < field.cols; ++j) {
      const auto r = static_cast<Eigen::Index>(i) * field.cols + j;
      total += eval.datafit(X.row(r).transpose(), class_of_label(field.label(i, j)));
      for (const auto& [di, dj] : forward_offsets(cfg.clique_order)) {
        const int ni = i + di;
        const int nj = j + dj;
        if (ni < 0 || ni >= field.rows || nj < 0 || nj >= field.cols) continue;
        total += cfg.beta * field.label(i, j) * field.label(ni, nj);
      }
    }
  }
  return total;
}

IcmFitResult icm_fit(const std::vector<const DesignMatrix*>& images,
                     const MrfConfig& cfg) {
  check_config(cfg);
  if (images.empty()) throw std::runtime_error("icm_fit: no images");
  if (cfg.max_iter < 1) throw std::runtime_error("icm_fit: max_iter must be >= 1");

  // Seeded uniform random label init.
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<LabelField> fields;
  for (const auto* img : images) {
    LabelField f;
    f.rows = img->grid_rows;
    f.cols = img->grid_cols;
    f.y.resize(static_cast<std::size_t>(f.rows) * f.cols);
    for (auto& y : f.y) y = coin(rng) ? +1 : -1;
    fields.push_back(std::move(f));
  }

  IcmFitResult result;
  std::vector<GaussianComponent> comps;
  std::unique_ptr<GaussianEvaluator> eval;
  std::vector<LabelField> prev_fields;
  std::vector<GaussianComponent> prev_comps;
  double prev_energy = -std::numeric_limits<double>::infinity();

  for (int it = 0; it < cfg.max_iter; ++it) {
    comps = class_moments(images, fields, eval.get());
    eval = std::make_unique<GaussianEvaluator>(comps, cfg.epsilon);
    for (std::size_t m = 0; m < images.size(); ++m) {
      icm_sweep(*images[m], fields[m], *eval, cfg);
    }
    double energy = 0.0;
    for (std::size_t m = 0; m < images.size(); ++m) {
      energy = energy + total_energy(images[m]->X, fields[m], *eval, cfg);
    }
    if (it > 0 && energy <= prev_energy + 1e-12) {
      // Converged: the previous state is the last improving configuration.
      fields = std::move(prev_fields);
      comps = std::move(prev_comps);
      break;
    }
    result.energy_trace.push_back(energy);
    result.iterations = it + 1;
    prev_fields = fields;
    prev_comps = comps;
    prev_energy = energy;
  }
  eval = std::make_unique<GaussianEvaluator>(comps, cfg.epsilon);
  for (std::size_t m = 0; m < images.size(); ++m) {
    fields[m].total_energy = total_energy(images[m]->X, fields[m], *eval, cfg);
  }
  result.components = std::move(comps);
  result.fields = std::move(fields);
  return result;
}

IcmFitResult icm_fit(const DesignMatrix& image, const MrfConfig& cfg) {
  return icm_fit(std::vector<const DesignMatrix*>{&image}, cfg);
}

LabelField icm_predict(const DesignMatrix& image,
                       const std::vector<GaussianComponent>& comps,
                       const MrfConfig& cfg, int* sweeps) {
  check_config(cfg);
  const GaussianEvaluator eval(comps, cfg.epsilon);
  LabelField field;
  field.rows = image.grid_rows;
  field.cols = image.grid_cols;
  field.y.resize(image.X.rows());
  // Maximum-likelihood init, ties toward the smaller class.
  for (Eigen::Index r = 0; r < image.X.rows(); ++r) {
    const auto x = image.X.row(r).transpose();
    int best = 0;
    double best_e = eval.datafit(x, 0);
    for (int k = 1; k < kNumClasses; ++k) {
      const double e = eval.datafit(x, k);
      if (e > best_e) {
        best_e = e;
        best = k;
      }
    }
    field.y[r] = label_of_class(best);
  }
  int n = 0;
  while (n < cfg.max_iter) {
    ++n;
    if (icm_sweep(image, field, eval, cfg) == 0) break;
  }
  if (sweeps != nullptr) *sweeps = n;
  field.total_energy = total_energy(image.X, field, eval, cfg);
  return field;
}

std::vector<double> sa_weights(const LabelField& field, const Eigen::MatrixXd& X,
                               const GaussianEvaluator& eval, const MrfConfig& cfg) {
  const std::size_t n = field.y.size();
  std::vector<double> numerators(n);
  double denom = 0.0;
  for (int i = 0; i < field.rows; ++i) {
    for (int j = 0; j < field.cols; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * field.cols + j;
      const auto x = X.row(static_cast<Eigen::Index>(p)).transpose();
      const int cur = field.label(i, j);
      const double e_cur = pixel_energy(x, class_of_label(cur), field, i, j, eval, cfg);
      const double e_flip = pixel_energy(x, class_of_label(-cur), field, i, j, eval, cfg);
      numerators[p] = e_flip - std::max(e_cur, e_flip);
      denom += numerators[p];
    }
  }
  std::vector<double> weights(n);
  if (denom == 0.0) {
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(n));
  } else {
    for (std::size_t p = 0; p < n; ++p) weights[p] = numerators[p] / denom;
  }
  return weights;
}

std::size_t sa_sample_index(const std::vector<double>& cum, double u) {
  if (cum.empty()) throw std::runtime_error("sa_sample_index: empty cumulative weights");
  auto it = std::lower_bound(cum.begin(), cum.end(), u);
  std::size_t hi = it == cum.end() ? cum.size() - 1
                                   : static_cast<std::size_t>(it - cum.begin());
  double target;
  if (hi == 0) {
    target = cum[0];
  } else {
    const double d_lo = u - cum[hi - 1];
    const double d_hi = cum[hi] - u;
    target = d_lo <= d_hi ? cum[hi - 1] : cum[hi];
  }
  // Ties among equal cumulative values resolve to the earliest raster index.
  auto first = std::lower_bound(cum.begin(), cum.end(), target);
  return static_cast<std::size_t>(first - cum.begin());
}

bool metropolis_accept(double delta_e, double temperature, double u) {
  if (delta_e <= 0.0) return true;
  return std::exp(-delta_e / temperature) > u;
}

LabelField sa_optimize(const DesignMatrix& image,
                       const std::vector<GaussianComponent>& comps,
                       const MrfConfig& cfg, const SaConfig& sa) {
  check_config(cfg);
  if (!(sa.alpha > 0.0 && sa.alpha < 1.0)) {
    throw std::runtime_error("cooling rate alpha must be in (0,1)");
  }
  const GaussianEvaluator eval(comps, cfg.epsilon);
  const std::size_t n = static_cast<std::size_t>(image.X.rows());

  // Class data terms are evaluated only here, at initialization.
  Eigen::MatrixXd datafit(image.X.rows(), kNumClasses);
  for (Eigen::Index r = 0; r < image.X.rows(); ++r) {
    for (int k = 0; k < kNumClasses; ++k) {
      datafit(r, k) = eval.datafit(image.X.row(r).transpose(), k);
    }
  }

  LabelField field;
  field.rows = image.grid_rows;
  field.cols = image.grid_cols;
  field.y.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    field.y[p] = label_of_class(datafit(static_cast<Eigen::Index>(p), 1) >
                                        datafit(static_cast<Eigen::Index>(p), 0)
                                    ? 1
                                    : 0);
  }
  field.total_energy = total_energy(image.X, field, eval, cfg);

  // Flip numerators (<= 0) per pixel; the cumulative selection distribution
  // only needs rebuilding after an accepted flip.
  auto numerator_at = [&](int i, int j) {
    const std::size_t p = static_cast<std::size_t>(i) * field.cols + j;
    const int cur = field.label(i, j);
    const double e_cur = datafit(static_cast<Eigen::Index>(p), class_of_label(cur)) +
                         potential(field, i, j, cur, cfg);
    const double e_flip = datafit(static_cast<Eigen::Index>(p), class_of_label(-cur)) +
                          potential(field, i, j, -cur, cfg);
    return std::make_pair(e_flip - std::max(e_cur, e_flip), e_cur - e_flip);
  };

  std::vector<double> numerators(n);
  std::vector<double> cum(n);
  double t0 = sa.t0;
  {
    double mean = 0.0, sq = 0.0;
    for (int i = 0; i < field.rows; ++i) {
      for (int j = 0; j < field.cols; ++j) {
        const auto [num, delta] = numerator_at(i, j);
        numerators[static_cast<std::size_t>(i) * field.cols + j] = num;
        mean += std::abs(delta);
        sq += delta * delta;
      }
    }
    if (t0 <= 0.0) {
      mean /= static_cast<double>(n);
      const double var = sq / static_cast<double>(n) - mean * mean;
      t0 = var > 0.0 ? std::sqrt(var) : 1.0;
    }
  }
  auto rebuild_cum = [&]() {
    double denom = 0.0;
    for (double q : numerators) denom += q;
    double acc = 0.0;
    if (denom == 0.0) {
      for (std::size_t p = 0; p < n; ++p) {
        acc += 1.0 / static_cast<double>(n);
        cum[p] = acc;
      }
    } else {
      for (std::size_t p = 0; p < n; ++p) {
        acc += numerators[p] / denom;
        cum[p] = acc;
      }
    }
    cum[n - 1] = 1.0;
  };
  rebuild_cum();

  const long budget = sa.iterations > 0
                          ? sa.iterations
                          : 5 * static_cast<long>(field.rows) * field.cols;
  std::mt19937_64 rng(sa.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double temperature = t0;
  for (long t = 0; t < budget; ++t) {
    const std::size_t p = sa_sample_index(cum, unit(rng));
    const int i = static_cast<int>(p) / field.cols;
    const int j = static_cast<int>(p) % field.cols;
    const auto [num, delta_e] = numerator_at(i, j);
    bool accept;
    if (delta_e <= 0.0) {
      accept = true;
    } else {
      accept = metropolis_accept(delta_e, temperature, unit(rng));
    }
    if (accept) {
      field.y[p] = -field.y[p];
      field.total_energy -= delta_e;
      // Refresh the flipped pixel and its neighbors, then the distribution.
      numerators[p] = numerator_at(i, j).first;
      for (const auto& [di, dj] : neighbor_offsets(cfg.clique_order)) {
        const int ni = i + di;
        const int nj = j + dj;
        if (ni < 0 || ni >= field.rows || nj < 0 || nj >= field.cols) continue;
        numerators[static_cast<std::size_t>(ni) * field.cols + nj] =
            numerator_at(ni, nj).first;
      }
      rebuild_cum();
    }
    temperature = std::max(temperature * sa.alpha, sa.t_floor);
  }
  return field;
}

}  // namespace cloudseg
