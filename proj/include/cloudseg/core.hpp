#ifndef CLOUDSEG_CORE_HPP_
#define CLOUDSEG_CORE_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// Domain types shared by every module: rasters, labels, Gaussian class
// models, persisted models and dataset manifests. All types are immutable
// value types once constructed and safe to share across threads.
namespace cloudseg {

// Class index convention, used identically everywhere:
// component 0 <-> label -1 (clear sky), component 1 <-> label +1 (cloud).
inline constexpr int kNumClasses = 2;

inline constexpr int label_of_class(int k) { return k == 0 ? -1 : +1; }
inline constexpr int class_of_label(int y) { return y < 0 ? 0 : 1; }

// M x N raster of d-channel real-valued measurements with named channels.
struct PixelGrid {
  int rows = 0;  // M
  int cols = 0;  // N
  std::vector<std::string> channels;
  std::vector<double> data;  // rows*cols*d, pixel-major: (i*cols + j)*d + c

  int depth() const { return static_cast<int>(channels.size()); }
  double at(int i, int j, int c) const {
    return data[(static_cast<std::size_t>(i) * cols + j) * channels.size() + c];
  }
  double& at(int i, int j, int c) {
    return data[(static_cast<std::size_t>(i) * cols + j) * channels.size() + c];
  }
  // Index of a named channel; throws if absent.
  int channel_index(const std::string& name) const;

  // Enforces size, finiteness and channel-uniqueness invariants.
  void validate() const;
};

// Per-pixel binary labels paired with a PixelGrid: -1 clear, +1 cloud.
struct LabelGrid {
  int rows = 0;
  int cols = 0;
  std::vector<int> labels;  // rows*cols entries in {-1,+1}

  int at(int i, int j) const { return labels[static_cast<std::size_t>(i) * cols + j]; }
  int& at(int i, int j) { return labels[static_cast<std::size_t>(i) * cols + j]; }
  void validate() const;
};

struct LabeledImage {
  PixelGrid features;
  LabelGrid labels;
};

// One mixture / class-conditional Gaussian: mean, covariance and prior.
struct GaussianComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double prior = 0.0;
};

// Checks symmetry, positive definiteness after epsilon-regularization and
// that priors form a distribution. Throws on violation.
void validate_components(const std::vector<GaussianComponent>& comps, double epsilon);

enum class ModelKind { kKMeans, kGmm, kIcmMrf, kSaIcmMrf };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

bool is_mrf(ModelKind kind);

// Per-dimension standardization statistics (population variance).
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

// A fitted model plus the full feature / hyperparameter configuration
// needed to reproduce its predictions exactly.
struct TrainedModel {
  ModelKind kind = ModelKind::kGmm;
  std::vector<GaussianComponent> components;
  std::string feature_selector;  // x1|x2|x3|x4
  int neighborhood_order = 0;    // 0|1|2
  int clique_order = 1;          // MRF only
  double beta = 0.0;             // MRF only
  double epsilon = 0.0;
  double alpha = 0.75;           // SA only
  double t0 = 0.0;               // SA only, 0 = auto
  double lambda = 1.0;           // virtual-prior threshold
  std::optional<Standardization> standardization;  // kmeans only

  void validate() const;
};

struct ImageRecord {
  std::string features_path;
  std::string labels_path;
  std::string timestamp;  // ISO-8601
};

struct DatasetManifest {
  int rows = 0;
  int cols = 0;
  std::vector<std::string> channels;
  std::vector<ImageRecord> images;
};

// --- File I/O -------------------------------------------------------------

// Loads and validates a JSON manifest. Every referenced file must exist and
// parse with the declared dimensions; timestamps must be non-decreasing.
DatasetManifest load_manifest(const std::string& path);

// Loads the images referenced by a manifest, in manifest order.
std::vector<LabeledImage> load_dataset(const DatasetManifest& manifest,
                                       const std::string& manifest_path);

// Feature CSV: header `i,j,<c1>,...,<cd>`, 1-based pixel indices, exactly
// M*N rows with every pixel appearing once.
PixelGrid load_feature_csv(const std::string& path, int rows, int cols,
                           const std::vector<std::string>& channels);
// Same, with dimensions and channel names inferred from the file itself.
PixelGrid load_feature_csv_auto(const std::string& path);
void save_feature_csv(const PixelGrid& grid, const std::string& path);

LabelGrid load_labels_csv(const std::string& path, int rows, int cols);
LabelGrid load_labels_csv_auto(const std::string& path);
void save_labels_csv(const LabelGrid& grid, const std::string& path);

// Model persistence as JSON (format_version 1). Round-trip is exact.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace cloudseg

#endif  // CLOUDSEG_CORE_HPP_
