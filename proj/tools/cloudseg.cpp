// cloudseg: train, run and benchmark unsupervised cloud-segmentation models
// on ground-based infrared sky images.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cloudseg/core.hpp"
#include "cloudseg/features.hpp"
#include "cloudseg/harness.hpp"
#include "cloudseg/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cloudseg;

namespace {

// Flag combinations CLI11 cannot express; reported like parse errors (exit 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    values.push_back(std::stod(item));
  }
  return values;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

json cv_report_to_json(const CvReport& report, bool timings) {
  json folds = json::array();
  for (const auto& f : report.folds) {
    json jf = {{"held_out", f.held_out},
               {"skipped", f.skipped},
               {"lambda", f.lambda},
               {"j", f.j}};
    if (timings) jf["train_ms"] = f.train_ms;
    folds.push_back(std::move(jf));
  }
  return {{"hyperparameter", report.hyperparameter},
          {"selected_value", report.selected_value},
          {"selected_lambda", report.selected_lambda},
          {"mean_j", report.mean_j},
          {"folds", std::move(folds)}};
}

json bench_report_to_json(const BenchReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"model", e.model},
                       {"features", e.selector},
                       {"neighborhood_order", e.neighborhood_order},
                       {"clique_order", e.clique_order},
                       {"metrics", {{"j", e.j}, {"jaccard", e.jaccard}, {"f1", e.f1}}},
                       {"timing",
                        {{"median_ms", e.median_ms},
                         {"mean_ms", e.mean_ms},
                         {"feature_ms", e.feature_ms},
                         {"samples_ms", e.samples_ms}}}});
  }
  return {{"repetitions", report.repetitions},
          {"lambda_included_in_timing", report.lambda_included},
          {"entries", std::move(entries)}};
}

struct FitFlags {
  std::string manifest;
  std::string model;
  std::string features = "x1";
  int neighborhood = 0;
  int clique_order = 0;  // 0 = unset
  double epsilon = 0.0;
  double beta = 1.0;
  double alpha = 0.75;
  double t0 = 0.0;
  std::uint64_t seed = 0;
  std::string grid_epsilon;
  std::string grid_beta;
  std::string out;
  std::string report_out;
  bool timings = false;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f, bool needs_out) {
  cmd->add_option("--manifest", f.manifest, "Dataset manifest (JSON)")->required();
  cmd->add_option("--model", f.model, "Model kind")
      ->required()
      ->check(CLI::IsMember({"kmeans", "gmm", "icm-mrf", "sa-icm-mrf"}));
  cmd->add_option("--features", f.features, "Feature selector")
      ->check(CLI::IsMember({"x1", "x2", "x3", "x4"}));
  cmd->add_option("--neighborhood", f.neighborhood, "Neighborhood stacking order")
      ->check(CLI::Range(0, 2));
  cmd->add_option("--clique-order", f.clique_order, "MRF clique order")
      ->check(CLI::Range(1, 2));
  cmd->add_option("--epsilon", f.epsilon, "Covariance regularizer");
  cmd->add_option("--beta", f.beta, "Clique potential weight");
  cmd->add_option("--alpha", f.alpha, "SA cooling rate");
  cmd->add_option("--t0", f.t0, "SA initial temperature (0 = auto)");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--grid-epsilon", f.grid_epsilon, "LOO-CV grid for epsilon (a,b,c)");
  cmd->add_option("--grid-beta", f.grid_beta, "LOO-CV grid for beta (a,b,c)");
  auto* out = cmd->add_option("--out", f.out, "Output path");
  if (needs_out) out->required();
}

ModelSpec spec_from_flags(const FitFlags& f) {
  ModelSpec spec;
  spec.kind = model_kind_from_string(f.model);
  spec.selector = f.features;
  spec.neighborhood_order = f.neighborhood;
  spec.epsilon = f.epsilon;
  spec.beta = f.beta;
  spec.alpha = f.alpha;
  spec.t0 = f.t0;
  spec.seed = f.seed;
  if (is_mrf(spec.kind)) {
    if (f.clique_order == 0) {
      std::cerr << "warning: --clique-order not given, defaulting to 1\n";
      spec.clique_order = 1;
    } else {
      spec.clique_order = f.clique_order;
    }
    // ICM keeps the paper's fixed covariance regularizer unless overridden.
    if (f.epsilon == 0.0) spec.epsilon = 1.0;
  } else if (f.clique_order != 0) {
    throw UsageError("--clique-order applies to MRF models only");
  }
  return spec;
}

std::vector<double> grid_from_flags(const FitFlags& f, ModelKind kind) {
  const bool has_eps = !f.grid_epsilon.empty();
  const bool has_beta = !f.grid_beta.empty();
  if (has_eps && has_beta) throw UsageError("give only one of --grid-epsilon/--grid-beta");
  if (has_eps && kind != ModelKind::kGmm) {
    throw UsageError("--grid-epsilon applies to gmm only");
  }
  if (has_beta && !is_mrf(kind)) throw UsageError("--grid-beta applies to MRF models only");
  if (has_eps) return parse_grid(f.grid_epsilon);
  if (has_beta) return parse_grid(f.grid_beta);
  return {};
}

int run_fit(const FitFlags& f) {
  const auto manifest = load_manifest(f.manifest);
  const auto images = load_dataset(manifest, f.manifest);
  const ModelSpec spec = spec_from_flags(f);
  const auto grid = grid_from_flags(f, spec.kind);

  TrainedModel model;
  if (!grid.empty()) {
    if (images.size() < 2) throw std::runtime_error("LOO-CV needs at least 2 images");
    model = loo_cv(spec, images, grid).final_model;
  } else {
    model = train_model(spec, images);
  }
  save_model(model, f.out);
  return 0;
}

int run_validate(const FitFlags& f) {
  const auto manifest = load_manifest(f.manifest);
  const auto images = load_dataset(manifest, f.manifest);
  const ModelSpec spec = spec_from_flags(f);
  auto grid = grid_from_flags(f, spec.kind);
  const CvReport report = loo_cv(spec, images, grid, f.timings);
  const json j = cv_report_to_json(report, f.timings);
  if (f.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_text(f.out, j.dump(2) + "\n");
  }
  return 0;
}

int run_predict(const std::string& model_path, const std::string& features_csv,
                bool use_sa, double alpha, double t0, long iters,
                const std::string& out_labels, const std::string& out_posterior) {
  const TrainedModel model = load_model(model_path);
  if (use_sa && !is_mrf(model.kind)) {
    throw UsageError("--sa requires an MRF model file");
  }
  const PixelGrid grid = load_feature_csv_auto(features_csv);

  SaConfig sa;
  sa.alpha = alpha > 0.0 ? alpha : model.alpha;
  sa.t0 = t0 > 0.0 ? t0 : model.t0;
  sa.iterations = iters;
  const bool sa_path = use_sa || model.kind == ModelKind::kSaIcmMrf;
  const Prediction pred = predict(model, grid, sa_path && is_mrf(model.kind),
                                  sa_path ? &sa : nullptr);

  save_labels_csv(pred.labels, out_labels);
  if (!out_posterior.empty()) {
    std::ofstream out(out_posterior);
    if (!out) throw std::runtime_error("cannot write file: " + out_posterior);
    out.precision(17);
    out << "i,j,p_clear\n";
    for (int i = 0; i < pred.labels.rows; ++i) {
      for (int j = 0; j < pred.labels.cols; ++j) {
        out << (i + 1) << ',' << (j + 1) << ','
            << pred.p_clear[static_cast<std::size_t>(i) * pred.labels.cols + j] << '\n';
      }
    }
  }
  return 0;
}

int run_bench(const std::string& manifest_path, const std::vector<std::string>& model_files,
              int reps, const std::string& out) {
  const auto manifest = load_manifest(manifest_path);
  const auto images = load_dataset(manifest, manifest_path);
  std::vector<TrainedModel> models;
  for (const auto& path : model_files) models.push_back(load_model(path));
  const BenchReport report = benchmark(models, images, reps);
  std::cout << bench_table(report);
  if (!out.empty()) write_text(out, bench_report_to_json(report).dump(2) + "\n");
  return 0;
}

int run_synth(const SynthConfig& cfg, const std::string& out_dir) {
  const auto images = synth_dataset(cfg);
  fs::create_directories(out_dir);
  json manifest;
  manifest["height"] = cfg.rows;
  manifest["width"] = cfg.cols;
  manifest["channels"] = selector_channels(cfg.selector);
  json records = json::array();
  for (std::size_t m = 0; m < images.size(); ++m) {
    const std::string fname = "features_" + std::to_string(m) + ".csv";
    const std::string lname = "labels_" + std::to_string(m) + ".csv";
    save_feature_csv(images[m].features, (fs::path(out_dir) / fname).string());
    save_labels_csv(images[m].labels, (fs::path(out_dir) / lname).string());
    char stamp[32];
    std::snprintf(stamp, sizeof(stamp), "2024-01-01T%02zu:%02zu:00Z", m / 60, m % 60);
    records.push_back({{"features", fname}, {"labels", lname}, {"timestamp", stamp}});
  }
  manifest["images"] = std::move(records);
  write_text((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised cloud segmentation for infrared sky images"};
  app.require_subcommand(1);

  FitFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "Train a model and write it to a file");
  add_fit_flags(fit, fit_flags, /*needs_out=*/true);

  FitFlags val_flags;
  auto* validate = app.add_subcommand("validate", "LOO cross-validation report");
  add_fit_flags(validate, val_flags, /*needs_out=*/false);
  validate->add_flag("--timings", val_flags.timings, "Include per-fold training times");

  std::string p_model, p_features, p_out_labels, p_out_posterior;
  bool p_sa = false;
  double p_alpha = 0.0, p_t0 = 0.0;
  long p_iters = 0;
  auto* predict_cmd = app.add_subcommand("predict", "Segment one feature CSV");
  predict_cmd->add_option("--model-file", p_model)->required();
  predict_cmd->add_option("--features-csv", p_features)->required();
  predict_cmd->add_flag("--sa", p_sa, "Use simulated-annealing inference");
  predict_cmd->add_option("--alpha", p_alpha, "SA cooling rate override");
  predict_cmd->add_option("--t0", p_t0, "SA initial temperature override");
  predict_cmd->add_option("--iters", p_iters, "SA iteration budget override");
  predict_cmd->add_option("--out-labels", p_out_labels)->required();
  predict_cmd->add_option("--out-posterior", p_out_posterior);

  std::string b_manifest, b_out;
  std::vector<std::string> b_models;
  int b_reps = 30;
  auto* bench = app.add_subcommand("bench", "Inference latency benchmark");
  bench->add_option("--manifest", b_manifest)->required();
  bench->add_option("--model-file", b_models)->required();
  bench->add_option("--reps", b_reps)->check(CLI::PositiveNumber);
  bench->add_option("--out", b_out, "JSON report path");

  SynthConfig s_cfg;
  std::string s_out_dir;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  synth->add_option("--seed", s_cfg.seed);
  synth->add_option("--n-images", s_cfg.n_images)->check(CLI::PositiveNumber);
  synth->add_option("--height", s_cfg.rows)->check(CLI::PositiveNumber);
  synth->add_option("--width", s_cfg.cols)->check(CLI::PositiveNumber);
  synth->add_option("--features", s_cfg.selector)
      ->check(CLI::IsMember({"x1", "x2", "x3", "x4"}));
  synth->add_option("--separation", s_cfg.separation, "Class mean separation (sigma)");
  synth->add_option("--cloud-fraction", s_cfg.cloud_fraction)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--smoothing-radius", s_cfg.smoothing_radius);
  synth->add_option("--smoothing-passes", s_cfg.smoothing_passes);
  synth->add_option("--out-dir", s_out_dir)->required();

  try {
    app.parse(argc, argv);
    if (*fit) return run_fit(fit_flags);
    if (*validate) return run_validate(val_flags);
    if (*predict_cmd) {
      return run_predict(p_model, p_features, p_sa, p_alpha, p_t0, p_iters,
                         p_out_labels, p_out_posterior);
    }
    if (*bench) return run_bench(b_manifest, b_models, b_reps, b_out);
    if (*synth) return run_synth(s_cfg, s_out_dir);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
