#include "dstl/cli.hpp"
#include "dstl/archive.hpp"
#include "dstl/log.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <numeric>
#include <set>

namespace dstl::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint64_t kUnlabeledSeedSalt = 0x9e3779b97f4a7c15ULL;

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::Config, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(ErrorKind::Config, "unknown key '" + key + "' in " + where);
  }
}

DataSource parse_source(const json& j, const fs::path& base, const std::string& where) {
  check_keys(j, {"csv", "raster", "stride", "max_samples"}, where);
  DataSource s;
  if (j.contains("csv")) s.csv = resolve(base, j["csv"].get<std::string>());
  if (j.contains("raster")) s.raster = resolve(base, j["raster"].get<std::string>());
  if (j.contains("stride")) s.stride = j["stride"].get<Index>();
  if (j.contains("max_samples")) s.max_samples = j["max_samples"].get<Index>();
  if (!s.csv.empty() && !s.raster.empty()) fail(ErrorKind::Config, where + ": give either csv or raster, not both");
  if (s.stride < 1 || s.max_samples < 0) fail(ErrorKind::Config, where + ": invalid stride or max_samples");
  return s;
}

void require_source(const DataSource& s, const std::string& what) {
  if (s.empty()) fail(ErrorKind::Config, what + " data source is not configured");
  const fs::path& p = s.csv.empty() ? s.raster : s.csv;
  if (!fs::exists(p)) fail(ErrorKind::Config, what + " data source " + p.string() + " does not exist");
}

void require_model_path(const RunConfig& config) {
  if (config.model.empty()) fail(ErrorKind::Config, "no model archive configured (use \"model\" or --model)");
  if (!fs::exists(config.model)) fail(ErrorKind::Config, "model archive " + config.model.string() + " does not exist");
}

FeatureTable load_source(const DataSource& source, const RunConfig& config, bool labeled_only, std::uint64_t seed) {
  FeatureTable table;
  if (!source.csv.empty()) {
    table = read_feature_csv(source.csv);
  } else {
    const RasterImage raster = read_raster(source.raster);
    PatchSet patches = extract_patches(raster, config.patch_size, labeled_only, source.stride);
    table.X = std::move(patches.X);
    table.labels = std::move(patches.labels);
    table.has_labels = !raster.labels.empty();
  }
  if (source.max_samples > 0 && source.max_samples < table.X.cols()) {
    // subsample indices via a tagged matrix so labels follow their columns
    Matrix tagged(table.X.rows() + 1, table.X.cols());
    tagged.topRows(table.X.rows()) = table.X;
    for (Index j = 0; j < table.X.cols(); ++j) tagged(table.X.rows(), j) = static_cast<double>(j);
    const Matrix picked = subsample(tagged, source.max_samples, seed);
    std::vector<int> labels;
    for (Index j = 0; j < picked.cols(); ++j) {
      labels.push_back(table.labels[static_cast<std::size_t>(picked(table.X.rows(), j))]);
    }
    table.X = picked.topRows(table.X.rows());
    table.labels = std::move(labels);
  }
  if (config.gcn) table.X = gcn_shift(table.X);
  return table;
}

LabeledDataset load_labeled(const DataSource& source, const RunConfig& config) {
  const FeatureTable table = load_source(source, config, true, config.seed);
  std::vector<Index> keep;
  int max_label = 0;
  for (std::size_t i = 0; i < table.labels.size(); ++i) {
    if (table.labels[i] > 0) {
      keep.push_back(static_cast<Index>(i));
      max_label = std::max(max_label, table.labels[i]);
    }
  }
  if (keep.empty()) fail(ErrorKind::InvalidInput, "labeled data source contains no labeled samples");
  const int classes = config.num_classes > 0 ? config.num_classes : max_label;
  if (classes < 2) fail(ErrorKind::InvalidInput, "labeled data needs at least two classes");
  FeatureMatrix X(table.X.rows(), static_cast<Index>(keep.size()));
  std::vector<int> labels;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    X.col(static_cast<Index>(i)) = table.X.col(keep[i]);
    labels.push_back(table.labels[static_cast<std::size_t>(keep[i])]);
  }
  return make_labeled(std::move(X), std::move(labels), classes);
}

FeatureMatrix load_unlabeled(const RunConfig& config) {
  return load_source(config.unlabeled, config, false, config.seed ^ kUnlabeledSeedSalt).X;
}

struct Partition {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

Partition partition(const RunConfig& config) {
  const LabeledDataset labeled = load_labeled(config.labeled, config);
  if (!config.test.empty()) {
    Split s = split(labeled, config.n_train, config.n_val, config.seed);
    LabeledDataset test = load_labeled(config.test, config);
    if (test.X.rows() != labeled.X.rows()) fail(ErrorKind::Dimension, "test data dimension differs from labeled data");
    if (test.num_classes != labeled.num_classes) {
      test = make_labeled(std::move(test.X), std::move(test.labels), std::max(test.num_classes, labeled.num_classes));
    }
    return {std::move(s.train), std::move(s.validation), std::move(test)};
  }
  Split s = split(labeled, config.n_train, config.n_val, config.seed);
  return {std::move(s.train), std::move(s.validation), std::move(s.test)};
}

void write_text(const fs::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorKind::Io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void prepare_output(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory " + config.output_dir.string() + ": " + ec.message());
}

DstlModel model_for_training(const RunConfig& config, const FeatureMatrix& unlabeled) {
  if (config.model.empty()) return pretrain(unlabeled, config.hyperparams);
  DstlModel model = load_model(config.model).model;
  std::vector<Index> sizes;
  for (const auto& d : model.dictionaries) sizes.push_back(d.size());
  if (sizes != config.hyperparams.layer_sizes) {
    fail(ErrorKind::Config, "configured layer_sizes do not match the pretrained archive");
  }
  model.hyperparams = config.hyperparams;
  model.classifier.reset();
  return model;
}

}  // namespace

RunConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  RunConfig c;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"labeled", "unlabeled", "test", "output_dir", "model", "seed", "threads", "patch_size", "gcn", "split",
              "num_classes", "pretrain_inline", "metrics", "hyperparams", "synth"},
             "config");
  try {
    if (j.contains("labeled")) c.labeled = parse_source(j["labeled"], base_dir, "labeled");
    if (j.contains("unlabeled")) c.unlabeled = parse_source(j["unlabeled"], base_dir, "unlabeled");
    if (j.contains("test")) c.test = parse_source(j["test"], base_dir, "test");
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
    if (j.contains("model")) c.model = resolve(base_dir, j["model"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
    if (j.contains("patch_size")) c.patch_size = j["patch_size"].get<Index>();
    if (j.contains("gcn")) c.gcn = j["gcn"].get<bool>();
    if (j.contains("split")) {
      check_keys(j["split"], {"n_train", "n_val"}, "split");
      if (j["split"].contains("n_train")) c.n_train = j["split"]["n_train"].get<Index>();
      if (j["split"].contains("n_val")) c.n_val = j["split"]["n_val"].get<Index>();
    }
    if (j.contains("num_classes")) c.num_classes = j["num_classes"].get<int>();
    if (j.contains("pretrain_inline")) c.pretrain_inline = j["pretrain_inline"].get<bool>();
    if (j.contains("metrics")) {
      check_keys(j["metrics"], {"json", "csv"}, "metrics");
      if (j["metrics"].contains("json")) c.metrics_json = j["metrics"]["json"].get<bool>();
      if (j["metrics"].contains("csv")) c.metrics_csv = j["metrics"]["csv"].get<bool>();
    }
    if (j.contains("hyperparams")) c.hyperparams = hyperparams_from_json(j["hyperparams"]);
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      check_keys(s, {"dim", "n_archetypes", "n_classes", "n_samples", "n_unlabeled", "noise_sigma", "min_separation",
                     "weights"},
                 "synth");
      if (s.contains("dim")) c.synth.dim = s["dim"].get<Index>();
      if (s.contains("n_archetypes")) c.synth.n_archetypes = s["n_archetypes"].get<Index>();
      if (s.contains("n_classes")) c.synth.n_classes = s["n_classes"].get<int>();
      if (s.contains("n_samples")) c.synth.n_samples = s["n_samples"].get<Index>();
      if (s.contains("n_unlabeled")) c.synth.n_unlabeled = s["n_unlabeled"].get<Index>();
      if (s.contains("noise_sigma")) c.synth.noise_sigma = s["noise_sigma"].get<double>();
      if (s.contains("min_separation")) c.synth.min_separation = s["min_separation"].get<double>();
      if (s.contains("weights")) {
        const auto w = s["weights"].get<std::string>();
        if (w == "dirichlet") {
          c.synth.weights = SynthWeights::Dirichlet;
        } else if (w == "vertices") {
          c.synth.weights = SynthWeights::Vertices;
        } else {
          fail(ErrorKind::Config, "synth.weights must be \"dirichlet\" or \"vertices\"");
        }
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config: ") + e.what());
  }
  if (c.patch_size < 1 || c.patch_size % 2 == 0) fail(ErrorKind::Config, "patch_size must be odd and at least 1");
  if (c.n_train < 1 || c.n_val < 0) fail(ErrorKind::Config, "split sizes must be n_train >= 1, n_val >= 0");
  if (c.threads < 0) fail(ErrorKind::Config, "threads must be non-negative");
  if (c.num_classes < 0) fail(ErrorKind::Config, "num_classes must be non-negative");
  c.hyperparams.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), path.parent_path());
}

void cmd_pretrain(const RunConfig& config) {
  require_source(config.unlabeled, "unlabeled");
  const FeatureMatrix unlabeled = load_unlabeled(config);
  const DstlModel model = pretrain(unlabeled, config.hyperparams);

  prepare_output(config);
  save_model(config.output_dir / "pretrained.dstl", model);
  std::cout << "pretrained " << model.num_layers() << " layer(s) on " << unlabeled.cols() << " unlabeled samples\n";
  for (Index l = 0; l < model.num_layers(); ++l) {
    const auto& d = model.dictionaries[static_cast<std::size_t>(l)];
    std::cout << "  layer " << l + 1 << ": " << d.size() << " atoms of dimension " << d.dim() << ", sources";
    for (Index s : *d.source_indices()) std::cout << ' ' << s;
    std::cout << '\n';
  }
}

void cmd_train(const RunConfig& config) {
  require_source(config.labeled, "labeled");
  require_source(config.unlabeled, "unlabeled");
  if (!config.model.empty()) {
    require_model_path(config);
  } else if (!config.pretrain_inline) {
    fail(ErrorKind::Config, "train needs a pretrained model archive or \"pretrain_inline\": true");
  }

  const Partition parts = partition(config);
  const FeatureMatrix unlabeled = load_unlabeled(config);
  const DstlModel model = model_for_training(config, unlabeled);
  log::info("training on ", parts.train.size(), " samples, validating on ", parts.validation.size());
  const TrainResult result = train(model, parts.train, parts.validation, unlabeled);

  prepare_output(config);
  save_model(config.output_dir / "model.dstl", result.best, &result.trace);
  write_text(config.output_dir / "trace.csv", trace_to_csv(result.trace));
  const auto& best = result.trace.records[static_cast<std::size_t>(result.trace.best_iteration)];
  std::cout << "best validation overall accuracy " << best.validation_overall << "% at iteration "
            << result.trace.best_iteration << " of " << result.trace.records.size() - 1 << '\n';
}

void cmd_evaluate(const RunConfig& config) {
  require_model_path(config);
  require_source(config.labeled, "labeled");
  const DstlModel model = load_model(config.model).model;
  if (!model.classifier) fail(ErrorKind::InvalidInput, "model archive has no trained classifier");
  const Partition parts = partition(config);
  if (parts.test.size() == 0) fail(ErrorKind::InvalidInput, "no test samples left after the split");

  const FitResult baseline = fit_softmax(parts.train.X, parts.train.targets, config.hyperparams.classifier);
  const Metrics original = evaluate(parts.test.labels, predict_label(baseline.params, parts.test.X),
                                    parts.test.num_classes);
  const auto codes = encode(model, parts.test.X);
  const Metrics deep = evaluate(parts.test.labels,
                                predict_label(*model.classifier, classifier_features(model, parts.test.X, codes)),
                                parts.test.num_classes);

  const std::vector<std::pair<std::string, Metrics>> columns{{"original_features", original},
                                                             {"dstl_features", deep}};
  prepare_output(config);
  if (config.metrics_json) write_text(config.output_dir / "metrics.json", metrics_to_json(columns));
  if (config.metrics_csv) write_text(config.output_dir / "metrics.csv", metrics_to_csv(columns));
  std::cout << "overall accuracy: original " << original.overall_accuracy << "%, dstl " << deep.overall_accuracy
            << "%\n"
            << "average accuracy: original " << original.average_accuracy << "%, dstl " << deep.average_accuracy
            << "%\n"
            << "kappa:            original " << original.kappa << ", dstl " << deep.kappa << '\n';
}

void cmd_encode(const RunConfig& config) {
  require_model_path(config);
  require_source(config.labeled, "labeled");
  const DstlModel model = load_model(config.model).model;
  const FeatureTable table = load_source(config.labeled, config, false, config.seed);
  const FeatureMatrix features = classifier_features(model, table.X, encode(model, table.X));
  prepare_output(config);
  const auto path = config.output_dir / "encoded.csv";
  auto tmp = path;
  tmp += ".tmp";
  write_feature_csv(tmp, features, table.has_labels ? &table.labels : nullptr, "s");
  fs::rename(tmp, path);
  std::cout << "encoded " << features.cols() << " samples into " << features.rows() << " stacked features\n";
}

void cmd_synth(const RunConfig& config) {
  SynthParams params = config.synth;
  params.seed = config.seed;
  const SynthData data = synth_generate(params);

  prepare_output(config);
  const auto csv = [&](const std::string& name, const FeatureMatrix& X, const std::vector<int>* labels) {
    auto tmp = config.output_dir / (name + ".tmp");
    write_feature_csv(tmp, X, labels);
    fs::rename(tmp, config.output_dir / name);
  };
  csv("labeled.csv", data.labeled.X, &data.labeled.labels);
  csv("unlabeled.csv", data.unlabeled, nullptr);
  csv("generators.csv", data.generators, &data.generator_class);
  const json manifest{{"dim", params.dim},
                      {"n_archetypes", params.n_archetypes},
                      {"n_classes", params.n_classes},
                      {"n_samples", params.n_samples},
                      {"n_unlabeled", params.n_unlabeled},
                      {"noise_sigma", params.noise_sigma},
                      {"min_separation", params.min_separation},
                      {"weights", params.weights == SynthWeights::Dirichlet ? "dirichlet" : "vertices"},
                      {"seed", params.seed},
                      {"generators_on_hull", data.generators_on_hull},
                      {"samples_in_hull", data.samples_in_hull}};
  write_text(config.output_dir / "synth_manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << data.labeled.size() << " labeled and " << data.unlabeled.cols()
            << " unlabeled samples to " << config.output_dir.string() << '\n';
}

ExitCode exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return kConfigError;
    case ErrorKind::Numerical: return kNumericalError;
    case ErrorKind::InvalidInput:
    case ErrorKind::Dimension:
    case ErrorKind::Infeasible:
    case ErrorKind::Io: return kDataError;
  }
  return kInternal;
}

int run(int argc, char** argv) {
  CLI::App app{"Deep self-taught learning with archetypal dictionaries"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out_dir;
  std::string model_path;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "random seed (overrides config)");
  app.add_option("--threads", threads, "worker threads, 0 = all cores (overrides config)");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  app.add_option("--model", model_path, "model archive (overrides config)");

  struct Command {
    const char* name;
    const char* help;
    void (*fn)(const RunConfig&);
  };
  const Command commands[] = {
      {"pretrain", "layer-wise archetype selection on unlabeled data", cmd_pretrain},
      {"train", "refine dictionaries and classifier, keep the best validation model", cmd_train},
      {"evaluate", "compare raw-feature and stacked-feature logistic regression on test data", cmd_evaluate},
      {"encode", "write stacked representations of the labeled source to CSV", cmd_encode},
      {"synth", "generate planted-archetype CSV fixtures", cmd_synth},
  };
  for (const auto& c : commands) app.add_subcommand(c.name, c.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    RunConfig config = config_path.empty() ? parse_config("{}", fs::current_path()) : load_config(config_path);
    if (seed) config.seed = *seed;
    if (threads) {
      if (*threads < 0) fail(ErrorKind::Config, "--threads must be non-negative");
      config.threads = *threads;
    }
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (!model_path.empty()) config.model = model_path;
    set_thread_count(config.threads);

    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) c.fn(config);
    }
    return kOk;
  } catch (const Error& e) {
    log::error(to_string(e.kind()), ": ", e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    log::error("unexpected failure: ", e.what());
    return kInternal;
  }
}

}  // namespace dstl::cli
