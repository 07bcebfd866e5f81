#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "cloudseg/core.hpp"

using namespace cloudseg;
namespace fs = std::filesystem;

namespace {

// Scratch directory unique to this test binary run.
fs::path scratch() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / "cloudseg_core_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

PixelGrid small_grid() {
  PixelGrid g;
  g.rows = 2;
  g.cols = 3;
  g.channels = {"T", "H"};
  g.data.resize(12);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      g.at(i, j, 0) = 10.0 * i + j;
      g.at(i, j, 1) = -1.5 * i + 0.25 * j;
    }
  }
  return g;
}

std::string feature_csv_of(const PixelGrid& g) {
  std::ostringstream out;
  out.precision(17);
  out << "i,j";
  for (const auto& c : g.channels) out << ',' << c;
  out << '\n';
  for (int i = 0; i < g.rows; ++i) {
    for (int j = 0; j < g.cols; ++j) {
      out << (i + 1) << ',' << (j + 1);
      for (int c = 0; c < g.depth(); ++c) out << ',' << g.at(i, j, c);
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace

TEST_CASE("class/label bijection") {
  CHECK(label_of_class(0) == -1);
  CHECK(label_of_class(1) == +1);
  CHECK(class_of_label(-1) == 0);
  CHECK(class_of_label(+1) == 1);
  for (int k = 0; k < kNumClasses; ++k) CHECK(class_of_label(label_of_class(k)) == k);
}

TEST_CASE("PixelGrid accessors and validation") {
  PixelGrid g = small_grid();
  CHECK(g.depth() == 2);
  CHECK(g.at(1, 2, 0) == doctest::Approx(12.0));
  CHECK(g.channel_index("H") == 1);
  CHECK_THROWS_WITH(g.channel_index("Z"), doctest::Contains("missing channel"));
  CHECK_NOTHROW(g.validate());

  PixelGrid bad = g;
  bad.data[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(bad.validate(), doctest::Contains("non-finite"));
  bad = g;
  bad.channels = {"T", "T"};
  CHECK_THROWS_WITH(bad.validate(), doctest::Contains("not unique"));
  bad = g;
  bad.data.pop_back();
  CHECK_THROWS(bad.validate());
}

TEST_CASE("LabelGrid validation") {
  LabelGrid l;
  l.rows = 1;
  l.cols = 2;
  l.labels = {-1, 1};
  CHECK_NOTHROW(l.validate());
  l.labels = {0, 1};
  CHECK_THROWS_WITH(l.validate(), doctest::Contains("label outside {-1,1}"));
}

TEST_CASE("feature CSV round trip") {
  const PixelGrid g = small_grid();
  const auto path = scratch() / "feat.csv";
  save_feature_csv(g, path.string());

  const PixelGrid back = load_feature_csv(path.string(), g.rows, g.cols, g.channels);
  REQUIRE(back.data.size() == g.data.size());
  for (std::size_t p = 0; p < g.data.size(); ++p) CHECK(back.data[p] == g.data[p]);

  const PixelGrid inferred = load_feature_csv_auto(path.string());
  CHECK(inferred.rows == g.rows);
  CHECK(inferred.cols == g.cols);
  CHECK(inferred.channels == g.channels);
  CHECK(inferred.data == back.data);
}

TEST_CASE("feature CSV round trip with random doubles is exact") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 100.0);
  PixelGrid g = small_grid();
  for (auto& v : g.data) v = gauss(rng);
  const auto path = scratch() / "feat_rand.csv";
  save_feature_csv(g, path.string());
  const PixelGrid back = load_feature_csv_auto(path.string());
  for (std::size_t p = 0; p < g.data.size(); ++p) CHECK(back.data[p] == g.data[p]);
}

TEST_CASE("feature CSV loader errors") {
  const PixelGrid g = small_grid();
  std::string csv = feature_csv_of(g);
  const auto path = scratch() / "bad.csv";

  SUBCASE("missing pixel") {
    const auto cut = csv.rfind("2,3");
    write_file(path, csv.substr(0, cut));
    CHECK_THROWS_WITH(load_feature_csv(path.string(), 2, 3, g.channels),
                      doctest::Contains("missing pixel (2,3)"));
  }
  SUBCASE("duplicate pixel") {
    write_file(path, csv + "1,1,0,0\n");
    CHECK_THROWS_WITH(load_feature_csv(path.string(), 2, 3, g.channels),
                      doctest::Contains("duplicate pixel (1,1)"));
  }
  SUBCASE("non-finite value") {
    auto pos = csv.find("11");
    csv.replace(pos, 2, "NaN");
    write_file(path, csv);
    CHECK_THROWS(load_feature_csv(path.string(), 2, 3, g.channels));
  }
  SUBCASE("dimension mismatch") {
    write_file(path, csv);
    CHECK_THROWS(load_feature_csv(path.string(), 3, 3, g.channels));
    CHECK_THROWS(load_feature_csv(path.string(), 2, 3, {"T"}));
  }
  SUBCASE("missing file") {
    CHECK_THROWS_WITH(load_feature_csv((scratch() / "nope.csv").string(), 2, 3, g.channels),
                      doctest::Contains("cannot open file"));
  }
}

TEST_CASE("label CSV round trip, counts and errors") {
  LabelGrid l;
  l.rows = 3;
  l.cols = 4;
  l.labels = {1, 1, -1, 1, -1, -1, -1, 1, 1, -1, 1, 1};
  const auto path = scratch() / "labels.csv";
  save_labels_csv(l, path.string());

  const LabelGrid back = load_labels_csv(path.string(), 3, 4);
  CHECK(back.labels == l.labels);
  const LabelGrid back_auto = load_labels_csv_auto(path.string());
  CHECK(back_auto.labels == l.labels);

  // Independent text scan of the written file as a counting oracle.
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  int pos = 0, neg = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto v = line.substr(line.rfind(',') + 1);
    (v == "1" ? pos : neg) += 1;
  }
  CHECK(pos == std::count(l.labels.begin(), l.labels.end(), 1));
  CHECK(neg == std::count(l.labels.begin(), l.labels.end(), -1));

  SUBCASE("all-cloud file") {
    LabelGrid all;
    all.rows = 2;
    all.cols = 2;
    all.labels = {1, 1, 1, 1};
    save_labels_csv(all, path.string());
    const LabelGrid b = load_labels_csv(path.string(), 2, 2);
    for (int y : b.labels) CHECK(y == 1);
  }
  SUBCASE("label outside domain") {
    write_file(path, "i,j,y\n1,1,0\n1,2,1\n2,1,1\n2,2,-1\n");
    CHECK_THROWS_WITH(load_labels_csv(path.string(), 2, 2),
                      doctest::Contains("label outside {-1,1}"));
  }
}

TEST_CASE("manifest loading") {
  const auto dir = scratch() / "dataset";
  fs::create_directories(dir);
  const PixelGrid g = small_grid();
  LabelGrid l;
  l.rows = g.rows;
  l.cols = g.cols;
  l.labels = {1, -1, 1, -1, 1, -1};
  for (int m = 0; m < 3; ++m) {
    save_feature_csv(g, (dir / ("f" + std::to_string(m) + ".csv")).string());
    save_labels_csv(l, (dir / ("l" + std::to_string(m) + ".csv")).string());
  }
  auto manifest_json = [&](const std::string& images) {
    return std::string("{\"height\":2,\"width\":3,\"channels\":[\"T\",\"H\"],\"images\":[") +
           images + "]}";
  };
  auto record = [&](int m, const std::string& ts) {
    return "{\"features\":\"f" + std::to_string(m) + ".csv\",\"labels\":\"l" +
           std::to_string(m) + ".csv\",\"timestamp\":\"" + ts + "\"}";
  };
  const auto path = dir / "manifest.json";

  SUBCASE("valid ascending timestamps") {
    write_file(path, manifest_json(record(0, "2015-06-01T10:00:00Z") + "," +
                                   record(1, "2015-06-01T10:05:00Z") + "," +
                                   record(2, "2015-06-01T10:10:00Z")));
    const DatasetManifest m = load_manifest(path.string());
    CHECK(m.images.size() == 3);
    CHECK(m.rows == 2);
    CHECK(m.cols == 3);
    const auto images = load_dataset(m, path.string());
    REQUIRE(images.size() == 3);
    CHECK(images[1].features.data == g.data);
    CHECK(images[2].labels.labels == l.labels);
  }
  SUBCASE("empty image list") {
    write_file(path, manifest_json(""));
    CHECK_THROWS_WITH(load_manifest(path.string()), doctest::Contains("empty dataset"));
  }
  SUBCASE("timestamp regression") {
    write_file(path, manifest_json(record(0, "2015-06-01T10:05:00Z") + "," +
                                   record(1, "2015-06-01T10:00:00Z")));
    CHECK_THROWS_WITH(load_manifest(path.string()), doctest::Contains("chronology violated"));
  }
  SUBCASE("malformed record") {
    write_file(path, manifest_json("{\"features\":\"f0.csv\"}"));
    CHECK_THROWS_WITH(load_manifest(path.string()), doctest::Contains("malformed manifest"));
  }
  SUBCASE("referenced file missing") {
    write_file(path, manifest_json("{\"features\":\"nope.csv\",\"labels\":\"l0.csv\","
                                   "\"timestamp\":\"2015-06-01T10:00:00Z\"}"));
    CHECK_THROWS(load_manifest(path.string()));
  }
}

namespace {

TrainedModel random_gmm_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  TrainedModel m;
  m.kind = ModelKind::kGmm;
  m.feature_selector = "x1";
  m.neighborhood_order = 1;
  m.epsilon = 0.37;
  m.lambda = 1.25;
  for (int k = 0; k < kNumClasses; ++k) {
    GaussianComponent c;
    c.mean = Eigen::VectorXd::NullaryExpr(4, [&](Eigen::Index) { return gauss(rng); });
    Eigen::MatrixXd a =
        Eigen::MatrixXd::NullaryExpr(4, 4, [&](Eigen::Index, Eigen::Index) { return gauss(rng); });
    c.covariance = a * a.transpose();  // PSD, symmetric
    c.prior = k == 0 ? 0.3 : 0.7;
    m.components.push_back(std::move(c));
  }
  return m;
}

}  // namespace

TEST_CASE("model save/load round trip is exact") {
  const TrainedModel m = random_gmm_model(5);
  const auto path = scratch() / "model.json";
  save_model(m, path.string());
  const TrainedModel back = load_model(path.string());
  CHECK(back.kind == m.kind);
  CHECK(back.feature_selector == m.feature_selector);
  CHECK(back.neighborhood_order == m.neighborhood_order);
  CHECK(back.epsilon == m.epsilon);
  CHECK(back.lambda == m.lambda);
  REQUIRE(back.components.size() == m.components.size());
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    CHECK((back.components[k].mean - m.components[k].mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.components[k].covariance - m.components[k].covariance).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(back.components[k].prior == m.components[k].prior);
  }
}

TEST_CASE("MRF model persistence keeps beta, clique order and SA params") {
  TrainedModel m = random_gmm_model(6);
  m.kind = ModelKind::kSaIcmMrf;
  m.beta = 1.75;
  m.clique_order = 2;
  m.epsilon = 1.0;
  m.alpha = 0.75;
  m.t0 = 3.5;
  const auto path = scratch() / "mrf.json";
  save_model(m, path.string());
  const TrainedModel back = load_model(path.string());
  CHECK(back.kind == ModelKind::kSaIcmMrf);
  CHECK(back.beta == m.beta);
  CHECK(back.clique_order == 2);
  CHECK(back.alpha == m.alpha);
  CHECK(back.t0 == m.t0);
}

TEST_CASE("kmeans model persistence keeps identity covariance and stats") {
  TrainedModel m;
  m.kind = ModelKind::kKMeans;
  m.feature_selector = "x2";
  m.epsilon = 0.0;
  for (int k = 0; k < kNumClasses; ++k) {
    m.components.push_back({Eigen::VectorXd::Constant(2, k == 0 ? -1.0 : 1.0),
                            Eigen::MatrixXd::Identity(2, 2), 0.5});
  }
  Standardization stats;
  stats.mean = Eigen::VectorXd::Constant(2, 4.5);
  stats.variance = Eigen::VectorXd::Constant(2, 2.25);
  m.standardization = stats;
  const auto path = scratch() / "km.json";
  save_model(m, path.string());
  const TrainedModel back = load_model(path.string());
  REQUIRE(back.standardization.has_value());
  CHECK(back.standardization->mean == stats.mean);
  CHECK(back.standardization->variance == stats.variance);
  for (const auto& c : back.components) {
    CHECK((c.covariance - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("model load rejects invariant violations") {
  const TrainedModel m = random_gmm_model(7);
  const auto path = scratch() / "broken.json";
  save_model(m, path.string());
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  auto tamper = [&](const std::string& from, const std::string& to) {
    std::string t = text;
    const auto pos = t.find(from);
    REQUIRE(pos != std::string::npos);
    t.replace(pos, from.size(), to);
    write_file(path, t);
  };

  SUBCASE("save itself rejects invalid models") {
    TrainedModel bad = m;
    bad.components[0].prior = 0.2;  // sum 0.9
    CHECK_THROWS_WITH(save_model(bad, path.string()),
                      doctest::Contains("priors do not sum to 1"));
  }
  SUBCASE("priors not a distribution") {
    tamper("\"prior\": 0.3", "\"prior\": 0.2");
    CHECK_THROWS_WITH(load_model(path.string()), doctest::Contains("priors do not sum to 1"));
  }
  SUBCASE("negative lambda") {
    tamper("\"lambda\": 1.25", "\"lambda\": -1.0");
    CHECK_THROWS_WITH(load_model(path.string()), doctest::Contains("lambda must be positive"));
  }
  SUBCASE("version mismatch") {
    tamper("\"format_version\": 1", "\"format_version\": 2");
    CHECK_THROWS_WITH(load_model(path.string()),
                      doctest::Contains("unsupported model format version"));
  }
}

TEST_CASE("validate_components") {
  std::vector<GaussianComponent> comps;
  comps.push_back({Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity(), 0.5});
  comps.push_back({Eigen::Vector2d(1, 1), Eigen::Matrix2d::Identity(), 0.5});
  CHECK_NOTHROW(validate_components(comps, 0.0));

  SUBCASE("asymmetric covariance") {
    comps[0].covariance(0, 1) = 0.5;
    CHECK_THROWS_WITH(validate_components(comps, 0.0), doctest::Contains("not symmetric"));
  }
  SUBCASE("indefinite covariance saved by regularization") {
    comps[0].covariance = -0.5 * Eigen::Matrix2d::Identity();
    CHECK_THROWS(validate_components(comps, 0.0));
    CHECK_NOTHROW(validate_components(comps, 1.0));
  }
}

TEST_CASE("model kind names round trip") {
  for (ModelKind k : {ModelKind::kKMeans, ModelKind::kGmm, ModelKind::kIcmMrf,
                      ModelKind::kSaIcmMrf}) {
    CHECK(model_kind_from_string(to_string(k)) == k);
  }
  CHECK(is_mrf(ModelKind::kIcmMrf));
  CHECK(is_mrf(ModelKind::kSaIcmMrf));
  CHECK_FALSE(is_mrf(ModelKind::kGmm));
  CHECK_FALSE(is_mrf(ModelKind::kKMeans));
  CHECK_THROWS_WITH(model_kind_from_string("svm"), doctest::Contains("unknown model kind"));
}
