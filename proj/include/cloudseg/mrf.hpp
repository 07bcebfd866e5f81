#ifndef CLOUDSEG_MRF_HPP_
#define CLOUDSEG_MRF_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cloudseg/core.hpp"
#include "cloudseg/features.hpp"
#include "cloudseg/gmm.hpp"

// Markov Random Field segmentation: clique potentials, unsupervised ICM
// training, full-sweep ICM inference and Simulated-Annealing inference.
//
// Sign convention: the pixel energy is a log-posterior-like score to
// MAXIMIZE; a positive Metropolis delta means the proposed flip is worse.
namespace cloudseg {

struct MrfConfig {
  double beta = 1.0;
  int clique_order = 1;  // 1 -> 4-neighborhood, 2 -> 8-neighborhood
  double epsilon = 1.0;
  int max_iter = 50;
  std::uint64_t seed = 0;
};

struct SaConfig {
  double t0 = 0.0;       // initial temperature; <= 0 selects an automatic value
  double alpha = 0.75;   // geometric cooling rate
  long iterations = 0;   // <= 0 selects 5*M*N
  double t_floor = 1e-6;
  std::uint64_t seed = 0;
};

// Current label configuration with a cached total energy. The cached value
// tracks the single-count convention of total_energy below.
struct LabelField {
  int rows = 0;
  int cols = 0;
  std::vector<int> y;  // ±1, raster order
  double total_energy = 0.0;

  int label(int i, int j) const { return y[static_cast<std::size_t>(i) * cols + j]; }
  void set_label(int i, int j, int v) { y[static_cast<std::size_t>(i) * cols + j] = v; }
  LabelGrid to_grid() const;
};

LabelField field_from_grid(const LabelGrid& grid);

// Clique potential psi = sum over the configured neighbor set of
// candidate * beta * neighbor label; border pixels sum over in-grid
// neighbors only.
double potential(const LabelField& field, int i, int j, int candidate,
                 const MrfConfig& cfg);

// E = -1/2 log|Sigma_k + eps I| - 1/2 (x-mu)' (Sigma_k + eps I)^-1 (x-mu)
//     + psi(candidate label of class k).
double pixel_energy(const Eigen::Ref<const Eigen::VectorXd>& x, int k,
                    const LabelField& field, int i, int j,
                    const GaussianEvaluator& eval, const MrfConfig& cfg);

// Softmax over per-class energies with max subtraction; sums to 1.
Eigen::Vector2d mrf_posterior(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const LabelField& field, int i, int j,
                              const GaussianEvaluator& eval, const MrfConfig& cfg);

// Total energy of a configuration: sum of per-pixel data terms plus the
// pairwise term with each clique counted once. Under this convention a
// sequential argmax sweep is monotone non-decreasing.
double total_energy(const Eigen::MatrixXd& X, const LabelField& field,
                    const GaussianEvaluator& eval, const MrfConfig& cfg);

struct IcmFitResult {
  std::vector<GaussianComponent> components;
  std::vector<LabelField> fields;  // one per training image
  std::vector<double> energy_trace;
  int iterations = 0;
};

// Unsupervised ICM training over one or more images sharing parameters:
// seeded uniform label init, alternate class-moment estimation (unbiased
// covariance) with sequential raster argmax reassignment, stop when the
// total energy fails to strictly increase (the last improving state is
// returned) or at max_iter.
IcmFitResult icm_fit(const std::vector<const DesignMatrix*>& images,
                     const MrfConfig& cfg);
IcmFitResult icm_fit(const DesignMatrix& image, const MrfConfig& cfg);

// Inference with fixed components: maximum-likelihood init, sequential
// raster argmax sweeps until no pixel changes or max_iter.
LabelField icm_predict(const DesignMatrix& image,
                       const std::vector<GaussianComponent>& comps,
                       const MrfConfig& cfg, int* sweeps = nullptr);

// Selection weights w_{i,j} = (E(flip) - max_k E) / sum of that quantity;
// all entries >= 0 and sum to 1. All-zero numerators fall back to uniform.
std::vector<double> sa_weights(const LabelField& field, const Eigen::MatrixXd& X,
                               const GaussianEvaluator& eval, const MrfConfig& cfg);

// Pixel whose cumulative weight is nearest the draw; ties toward the
// earlier raster index. cum must be non-decreasing with final value 1.
std::size_t sa_sample_index(const std::vector<double>& cum, double u);

// Metropolis acceptance for a proposed flip with energy delta dE at
// temperature T: accept iff dE <= 0, else iff exp(-dE/T) > u.
bool metropolis_accept(double delta_e, double temperature, double u);

// Energy-weighted annealed flips from a maximum-likelihood init; class
// data terms are evaluated only at initialization. Temperatures cool
// geometrically (T <- alpha*T) and clamp at the floor.
LabelField sa_optimize(const DesignMatrix& image,
                       const std::vector<GaussianComponent>& comps,
                       const MrfConfig& cfg, const SaConfig& sa);

}  // namespace cloudseg

#endif  // CLOUDSEG_MRF_HPP_
