#include "cloudseg/core.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace cloudseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // strip trailing CR from CRLF inputs
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, const std::string& context) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(context + ": cannot parse value '" + s + "'");
  }
  if (pos != s.size()) {
    throw std::runtime_error(context + ": trailing garbage in value '" + s + "'");
  }
  return v;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

}  // namespace

int PixelGrid::channel_index(const std::string& name) const {
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c] == name) return static_cast<int>(c);
  }
  throw std::runtime_error("missing channel: " + name);
}

void PixelGrid::validate() const {
  if (rows <= 0 || cols <= 0) throw std::runtime_error("grid dimensions must be positive");
  std::unordered_set<std::string> seen(channels.begin(), channels.end());
  if (seen.size() != channels.size()) throw std::runtime_error("channel names not unique");
  const std::size_t expected =
      static_cast<std::size_t>(rows) * cols * channels.size();
  if (data.size() != expected) {
    throw std::runtime_error("grid data length " + std::to_string(data.size()) +
                             " does not equal M*N*d = " + std::to_string(expected));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite value in grid");
  }
}

void LabelGrid::validate() const {
  if (rows <= 0 || cols <= 0) throw std::runtime_error("grid dimensions must be positive");
  if (labels.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::runtime_error("label count does not match dimensions");
  }
  for (int y : labels) {
    if (y != -1 && y != 1) throw std::runtime_error("label outside {-1,1}");
  }
}

void validate_components(const std::vector<GaussianComponent>& comps, double epsilon) {
  if (comps.empty()) throw std::runtime_error("model has no components");
  double prior_sum = 0.0;
  for (const auto& c : comps) {
    const auto d = c.mean.size();
    if (c.covariance.rows() != d || c.covariance.cols() != d) {
      throw std::runtime_error("covariance dimensions do not match mean");
    }
    if ((c.covariance - c.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw std::runtime_error("covariance not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.covariance);
    if (es.eigenvalues().minCoeff() + epsilon <= 1e-12) {
      throw std::runtime_error("regularized covariance not positive definite");
    }
    if (c.prior < -1e-12 || c.prior > 1.0 + 1e-12) {
      throw std::runtime_error("component prior outside [0,1]");
    }
    prior_sum += c.prior;
  }
  if (std::abs(prior_sum - 1.0) > 1e-12) {
    throw std::runtime_error("component priors do not sum to 1");
  }
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kKMeans: return "kmeans";
    case ModelKind::kGmm: return "gmm";
    case ModelKind::kIcmMrf: return "icm-mrf";
    case ModelKind::kSaIcmMrf: return "sa-icm-mrf";
  }
  throw std::logic_error("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "kmeans") return ModelKind::kKMeans;
  if (s == "gmm") return ModelKind::kGmm;
  if (s == "icm-mrf") return ModelKind::kIcmMrf;
  if (s == "sa-icm-mrf") return ModelKind::kSaIcmMrf;
  throw std::runtime_error("unknown model kind: " + s);
}

bool is_mrf(ModelKind kind) {
  return kind == ModelKind::kIcmMrf || kind == ModelKind::kSaIcmMrf;
}

void TrainedModel::validate() const {
  if (!(lambda > 0.0)) throw std::runtime_error("lambda must be positive");
  validate_components(components, epsilon);
  if (neighborhood_order < 0 || neighborhood_order > 2) {
    throw std::runtime_error("neighborhood order must be 0, 1 or 2");
  }
  if (is_mrf(kind) && clique_order != 1 && clique_order != 2) {
    throw std::runtime_error("clique order must be 1 or 2");
  }
  if (kind == ModelKind::kSaIcmMrf && !(alpha > 0.0 && alpha < 1.0)) {
    throw std::runtime_error("cooling rate alpha must be in (0,1)");
  }
  if (kind == ModelKind::kKMeans) {
    if (!standardization) throw std::runtime_error("kmeans model lacks standardization stats");
    for (const auto& c : components) {
      if (!c.covariance.isIdentity(1e-12)) {
        throw std::runtime_error("kmeans covariance must be identity");
      }
    }
  }
}

// --- Manifest ---------------------------------------------------------------

DatasetManifest load_manifest(const std::string& path) {
  auto in = open_input(path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("malformed manifest " + path + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.rows = j.at("height").get<int>();
    m.cols = j.at("width").get<int>();
    m.channels = j.at("channels").get<std::vector<std::string>>();
    for (const auto& rec : j.at("images")) {
      ImageRecord r;
      r.features_path = rec.at("features").get<std::string>();
      r.labels_path = rec.at("labels").get<std::string>();
      r.timestamp = rec.at("timestamp").get<std::string>();
      m.images.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest record in " + path + ": " + e.what());
  }
  if (m.images.empty()) throw std::runtime_error("empty dataset: manifest lists no images");
  for (std::size_t i = 1; i < m.images.size(); ++i) {
    // ISO-8601 timestamps in a uniform format compare lexicographically.
    if (m.images[i].timestamp < m.images[i - 1].timestamp) {
      throw std::runtime_error("chronology violated: image " + std::to_string(i + 1) +
                               " predates its predecessor");
    }
  }
  // Referenced files must exist and parse with the declared dimensions.
  load_dataset(m, path);
  return m;
}

std::vector<LabeledImage> load_dataset(const DatasetManifest& manifest,
                                       const std::string& manifest_path) {
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&base](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q.string() : (base / q).string();
  };
  std::vector<LabeledImage> images;
  images.reserve(manifest.images.size());
  for (const auto& rec : manifest.images) {
    LabeledImage img;
    img.features = load_feature_csv(resolve(rec.features_path), manifest.rows,
                                    manifest.cols, manifest.channels);
    img.labels = load_labels_csv(resolve(rec.labels_path), manifest.rows, manifest.cols);
    images.push_back(std::move(img));
  }
  return images;
}

// --- CSV rasters ------------------------------------------------------------

namespace {

// Shared loader core: reads `i,j,...` rows and invokes sink(i, j, fields).
template <typename Sink>
void read_pixel_csv(const std::string& path, int rows, int cols,
                    std::size_t value_columns, Sink&& sink) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  std::vector<bool> seen(static_cast<std::size_t>(rows) * cols, false);
  std::size_t count = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != value_columns + 2) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(value_columns + 2) +
                               " columns, got " + std::to_string(fields.size()));
    }
    const std::string ctx = path + ":" + std::to_string(lineno);
    const int i = static_cast<int>(parse_double(fields[0], ctx));
    const int j = static_cast<int>(parse_double(fields[1], ctx));
    if (i < 1 || i > rows || j < 1 || j > cols) {
      throw std::runtime_error(ctx + ": pixel (" + std::to_string(i) + "," +
                               std::to_string(j) + ") outside declared dimensions");
    }
    const std::size_t idx = static_cast<std::size_t>(i - 1) * cols + (j - 1);
    if (seen[idx]) {
      throw std::runtime_error(ctx + ": duplicate pixel (" + std::to_string(i) + "," +
                               std::to_string(j) + ")");
    }
    seen[idx] = true;
    ++count;
    sink(i - 1, j - 1, fields, ctx);
  }
  if (count != seen.size()) {
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        if (!seen[static_cast<std::size_t>(i) * cols + j]) {
          throw std::runtime_error(path + ": missing pixel (" + std::to_string(i + 1) +
                                   "," + std::to_string(j + 1) + ")");
        }
      }
    }
  }
}

std::vector<std::string> read_csv_header(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  auto fields = split_csv_line(line);
  if (fields.size() < 3 || fields[0] != "i" || fields[1] != "j") {
    throw std::runtime_error(path + ": header must start with i,j");
  }
  return fields;
}

// Scans the body for the maximum pixel indices.
std::pair<int, int> infer_dims(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  std::getline(in, line);  // header
  int rows = 0, cols = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < 2) throw std::runtime_error(path + ": malformed row");
    const std::string ctx = path + ":" + std::to_string(lineno);
    rows = std::max(rows, static_cast<int>(parse_double(fields[0], ctx)));
    cols = std::max(cols, static_cast<int>(parse_double(fields[1], ctx)));
  }
  if (rows == 0 || cols == 0) throw std::runtime_error(path + ": no data rows");
  return {rows, cols};
}

}  // namespace

PixelGrid load_feature_csv(const std::string& path, int rows, int cols,
                           const std::vector<std::string>& channels) {
  const auto header = read_csv_header(path);
  if (header.size() != channels.size() + 2) {
    throw std::runtime_error(path + ": expected " + std::to_string(channels.size()) +
                             " channel columns, found " + std::to_string(header.size() - 2));
  }
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (header[c + 2] != channels[c]) {
      throw std::runtime_error(path + ": channel column '" + header[c + 2] +
                               "' does not match declared channel '" + channels[c] + "'");
    }
  }
  PixelGrid grid;
  grid.rows = rows;
  grid.cols = cols;
  grid.channels = channels;
  grid.data.assign(static_cast<std::size_t>(rows) * cols * channels.size(), 0.0);
  read_pixel_csv(path, rows, cols, channels.size(),
                 [&](int i, int j, const std::vector<std::string>& fields,
                     const std::string& ctx) {
                   for (std::size_t c = 0; c < channels.size(); ++c) {
                     const double v = parse_double(fields[c + 2], ctx);
                     if (!std::isfinite(v)) {
                       throw std::runtime_error(ctx + ": non-finite value in channel " +
                                                channels[c]);
                     }
                     grid.at(i, j, static_cast<int>(c)) = v;
                   }
                 });
  grid.validate();
  return grid;
}

PixelGrid load_feature_csv_auto(const std::string& path) {
  auto header = read_csv_header(path);
  auto [rows, cols] = infer_dims(path);
  return load_feature_csv(path, rows, cols,
                          std::vector<std::string>(header.begin() + 2, header.end()));
}

void save_feature_csv(const PixelGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.precision(17);
  out << "i,j";
  for (const auto& c : grid.channels) out << ',' << c;
  out << '\n';
  for (int i = 0; i < grid.rows; ++i) {
    for (int j = 0; j < grid.cols; ++j) {
      out << (i + 1) << ',' << (j + 1);
      for (int c = 0; c < grid.depth(); ++c) out << ',' << grid.at(i, j, c);
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

LabelGrid load_labels_csv(const std::string& path, int rows, int cols) {
  const auto header = read_csv_header(path);
  if (header.size() != 3) {
    throw std::runtime_error(path + ": label file must have exactly one value column");
  }
  LabelGrid grid;
  grid.rows = rows;
  grid.cols = cols;
  grid.labels.assign(static_cast<std::size_t>(rows) * cols, 0);
  read_pixel_csv(path, rows, cols, 1,
                 [&](int i, int j, const std::vector<std::string>& fields,
                     const std::string& ctx) {
                   const double v = parse_double(fields[2], ctx);
                   if (v != -1.0 && v != 1.0) {
                     throw std::runtime_error(ctx + ": label outside {-1,1}");
                   }
                   grid.at(i, j) = static_cast<int>(v);
                 });
  grid.validate();
  return grid;
}

LabelGrid load_labels_csv_auto(const std::string& path) {
  auto [rows, cols] = infer_dims(path);
  return load_labels_csv(path, rows, cols);
}

void save_labels_csv(const LabelGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "i,j,y\n";
  for (int i = 0; i < grid.rows; ++i) {
    for (int j = 0; j < grid.cols; ++j) {
      out << (i + 1) << ',' << (j + 1) << ',' << grid.at(i, j) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

// --- Model persistence -------------------------------------------------------

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd json_to_vector(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

Eigen::MatrixXd json_to_matrix(const json& a) {
  const auto r = a.size();
  const auto c = r == 0 ? 0 : a[0].size();
  Eigen::MatrixXd m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (a[i].size() != c) throw std::runtime_error("ragged matrix in model file");
    for (std::size_t j = 0; j < c; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[i][j].get<double>();
    }
  }
  return m;
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
  model.validate();
  json j;
  j["format_version"] = 1;
  j["kind"] = to_string(model.kind);
  j["feature_selector"] = model.feature_selector;
  j["neighborhood_order"] = model.neighborhood_order;
  j["epsilon"] = model.epsilon;
  j["lambda"] = model.lambda;
  json comps = json::array();
  for (const auto& c : model.components) {
    comps.push_back({{"mean", vector_to_json(c.mean)},
                     {"covariance", matrix_to_json(c.covariance)},
                     {"prior", c.prior}});
  }
  j["components"] = std::move(comps);
  if (is_mrf(model.kind)) {
    j["clique_order"] = model.clique_order;
    j["beta"] = model.beta;
  }
  if (model.kind == ModelKind::kSaIcmMrf) {
    j["alpha"] = model.alpha;
    j["t0"] = model.t0;
  }
  if (model.standardization) {
    j["standardization"] = {{"mean", vector_to_json(model.standardization->mean)},
                            {"variance", vector_to_json(model.standardization->variance)}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

TrainedModel load_model(const std::string& path) {
  auto in = open_input(path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("malformed model file " + path + ": " + e.what());
  }
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
    throw std::runtime_error(path + ": unsupported model format version");
  }
  TrainedModel m;
  try {
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    m.feature_selector = j.at("feature_selector").get<std::string>();
    m.neighborhood_order = j.at("neighborhood_order").get<int>();
    m.epsilon = j.at("epsilon").get<double>();
    m.lambda = j.at("lambda").get<double>();
    for (const auto& c : j.at("components")) {
      GaussianComponent comp;
      comp.mean = json_to_vector(c.at("mean"));
      comp.covariance = json_to_matrix(c.at("covariance"));
      comp.prior = c.at("prior").get<double>();
      m.components.push_back(std::move(comp));
    }
    if (is_mrf(m.kind)) {
      m.clique_order = j.at("clique_order").get<int>();
      m.beta = j.at("beta").get<double>();
    }
    if (m.kind == ModelKind::kSaIcmMrf) {
      m.alpha = j.at("alpha").get<double>();
      m.t0 = j.at("t0").get<double>();
    }
    if (j.contains("standardization")) {
      Standardization s;
      s.mean = json_to_vector(j["standardization"].at("mean"));
      s.variance = json_to_vector(j["standardization"].at("variance"));
      m.standardization = std::move(s);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed model file " + path + ": " + e.what());
  }
  m.validate();
  return m;
}

}  // namespace cloudseg
