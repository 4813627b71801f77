#include <doctest.h>

#include "dstl/archive.hpp"
#include "dstl/cli.hpp"
#include "dstl/datapipe.hpp"

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace dstl;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / ("dstl_test_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  fs::path operator/(const std::string& p) const { return dir / p; }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string("DSTL_LOG=error '") + DSTL_CLI_PATH + "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Two well-separated classes on a line, plus an unlabeled pool drawn the same way.
void separable_fixture(const Workspace& ws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.1);
  FeatureMatrix X(2, 120);
  std::vector<int> labels(120);
  for (Index j = 0; j < 120; ++j) {
    const int c = static_cast<int>(j % 2);
    X(0, j) = (c == 0 ? 0.0 : 5.0) + n(rng);
    X(1, j) = n(rng);
    labels[static_cast<std::size_t>(j)] = c + 1;
  }
  write_feature_csv(ws / "labeled.csv", X, &labels);
  write_feature_csv(ws / "unlabeled.csv", X, nullptr);
}

}  // namespace

TEST_CASE("argument and config errors exit with the config code and write nothing") {
  Workspace ws("config");
  CHECK(run_cli("") == cli::kConfigError);
  CHECK(run_cli("frobnicate") == cli::kConfigError);
  CHECK(run_cli("synth --seed notanumber") == cli::kConfigError);

  std::ofstream(ws / "broken.json") << "{ not json";
  CHECK(run_cli("synth --config " + q(ws / "broken.json")) == cli::kConfigError);

  write_json(ws / "unknown.json", {{"output_dir", "out"}, {"colour", "blue"}});
  CHECK(run_cli("synth --config " + q(ws / "unknown.json")) == cli::kConfigError);

  write_json(ws / "hp.json", {{"output_dir", "out"}, {"hyperparams", {{"clip_t1", -1.0}}}});
  CHECK(run_cli("synth --config " + q(ws / "hp.json")) == cli::kConfigError);

  write_json(ws / "missing.json", {{"output_dir", "out"}, {"unlabeled", {{"csv", "nope.csv"}}}});
  CHECK(run_cli("pretrain --config " + q(ws / "missing.json")) == cli::kConfigError);
  CHECK(run_cli("train --config " + q(ws / "missing.json")) == cli::kConfigError);
  CHECK(!fs::exists(ws / "out"));

  CHECK(run_cli("synth --config " + q(ws / "absent.json")) == cli::kConfigError);
}

TEST_CASE("synth is reproducible and reports hull membership") {
  Workspace ws("synth");
  write_json(ws / "c.json", {{"output_dir", "a"},
                             {"synth", {{"dim", 5}, {"n_archetypes", 4}, {"n_classes", 2}, {"n_samples", 60},
                                        {"n_unlabeled", 80}, {"noise_sigma", 0.0}}}});
  REQUIRE(run_cli("synth --config " + q(ws / "c.json") + " --seed 4") == cli::kOk);
  REQUIRE(run_cli("synth --config " + q(ws / "c.json") + " --seed 4 --out " + q(ws / "b")) == cli::kOk);
  for (const char* f : {"labeled.csv", "unlabeled.csv", "generators.csv", "synth_manifest.json"}) {
    CHECK(fs::exists(ws / "a" / f));
    CHECK(slurp(ws / "a" / f) == slurp(ws / "b" / f));
  }
  const auto manifest = nlohmann::json::parse(slurp(ws / "a" / "synth_manifest.json"));
  CHECK(manifest["samples_in_hull"].get<bool>());
  CHECK(manifest["generators_on_hull"].get<bool>());
  CHECK(read_feature_csv(ws / "a" / "unlabeled.csv").X.cols() == 84);

  write_json(ws / "bad.json", {{"output_dir", "bad"}, {"synth", {{"n_classes", 1}}}});
  CHECK(run_cli("synth --config " + q(ws / "bad.json")) == cli::kDataError);
  CHECK(!fs::exists(ws / "bad"));
}

TEST_CASE("pretrain on the square-corner fixture") {
  Workspace ws("pretrain");
  FeatureMatrix pool(2, 5);
  pool << 0, 1, 0.5, 1, 0,
          0, 0, 0.5, 1, 1;
  write_feature_csv(ws / "pool.csv", pool, nullptr);
  write_json(ws / "c.json", {{"output_dir", "out"}, {"unlabeled", {{"csv", "pool.csv"}}},
                             {"hyperparams", {{"layer_sizes", {4}}}}});
  REQUIRE(run_cli("pretrain --config " + q(ws / "c.json")) == cli::kOk);
  const fs::path archive = ws / "out" / "pretrained.dstl";
  const ModelArchive loaded = load_model(archive);
  auto src = *loaded.model.dictionaries[0].source_indices();
  std::sort(src.begin(), src.end());
  CHECK(src == std::vector<Index>{0, 1, 3, 4});
  for (Index k = 0; k < 4; ++k) {
    const Index s = (*loaded.model.dictionaries[0].source_indices())[static_cast<std::size_t>(k)];
    CHECK(loaded.model.dictionaries[0].atoms().col(k) == pool.col(s));
  }
  const auto bytes = serialize_model(loaded.model);
  CHECK(std::string(bytes.begin(), bytes.end()) == slurp(archive));

  write_json(ws / "big.json", {{"output_dir", "big"}, {"unlabeled", {{"csv", "pool.csv"}}},
                               {"hyperparams", {{"layer_sizes", {6}}}}});
  CHECK(run_cli("pretrain --config " + q(ws / "big.json")) == cli::kDataError);
  CHECK(!fs::exists(ws / "big" / "pretrained.dstl"));
}

TEST_CASE("train, evaluate and encode on a separable fixture") {
  Workspace ws("train");
  separable_fixture(ws, 3);
  const nlohmann::json base{{"labeled", {{"csv", "labeled.csv"}}},
                            {"unlabeled", {{"csv", "unlabeled.csv"}}},
                            {"split", {{"n_train", 50}, {"n_val", 30}}},
                            {"pretrain_inline", true},
                            {"hyperparams", {{"layer_sizes", {3, 3}}, {"max_outer_iter", 0}}}};
  auto zero = base;
  zero["output_dir"] = "zero";
  write_json(ws / "zero.json", zero);
  REQUIRE(run_cli("train --config " + q(ws / "zero.json")) == cli::kOk);
  std::istringstream trace(slurp(ws / "zero" / "trace.csv"));
  std::string header, row, extra;
  std::getline(trace, header);
  std::getline(trace, row);
  CHECK(header == "iteration,residual_l1,residual_l2,validation_overall_accuracy,snaps");
  CHECK(row.rfind("0,", 0) == 0);
  CHECK(!std::getline(trace, extra));

  auto longer = base;
  longer["output_dir"] = "run";
  longer["hyperparams"]["max_outer_iter"] = 20;
  longer["hyperparams"]["clip_t2"] = 0.05;
  write_json(ws / "run.json", longer);
  REQUIRE(run_cli("train --config " + q(ws / "run.json")) == cli::kOk);
  const ModelArchive trained = load_model(ws / "run" / "model.dstl");
  REQUIRE(trained.trace.has_value());
  const auto& recs = trained.trace->records;
  CHECK(recs[static_cast<std::size_t>(trained.trace->best_iteration)].validation_overall >=
        recs[0].validation_overall);

  REQUIRE(run_cli("evaluate --config " + q(ws / "run.json") + " --model " + q(ws / "run" / "model.dstl")) ==
          cli::kOk);
  const auto metrics = nlohmann::json::parse(slurp(ws / "run" / "metrics.json"));
  CHECK(metrics["original_features"]["overall_accuracy"].get<double>() == 100.0);
  CHECK(metrics["dstl_features"]["overall_accuracy"].get<double>() == 100.0);
  CHECK(fs::exists(ws / "run" / "metrics.csv"));

  REQUIRE(run_cli("encode --config " + q(ws / "run.json") + " --model " + q(ws / "run" / "model.dstl")) ==
          cli::kOk);
  const FeatureTable encoded = [&] {
    // Encoded columns are named s0..; rename the header to read it back.
    std::string text = slurp(ws / "run" / "encoded.csv");
    CHECK(text.rfind("s0,s1,s2,s3,s4,s5,label\n", 0) == 0);
    for (std::size_t pos = 0; (pos = text.find('s', pos)) != std::string::npos && pos < text.find('\n');) {
      text[pos] = 'f';
    }
    std::ofstream(ws / "enc.csv") << text;
    return read_feature_csv(ws / "enc.csv");
  }();
  CHECK(encoded.X.rows() == 6);
  CHECK(encoded.X.cols() == 120);

  CHECK(run_cli("evaluate --config " + q(ws / "run.json") + " --model " + q(ws / "nothing.dstl")) ==
        cli::kConfigError);
  auto mismatched = longer;
  mismatched["hyperparams"]["layer_sizes"] = {4, 3};
  mismatched["output_dir"] = "mismatch";
  write_json(ws / "mismatch.json", mismatched);
  CHECK(run_cli("train --config " + q(ws / "mismatch.json") + " --model " + q(ws / "run" / "model.dstl")) ==
        cli::kConfigError);
  CHECK(!fs::exists(ws / "mismatch"));
}

TEST_CASE("evaluation does not depend on test row order") {
  Workspace ws("order");
  separable_fixture(ws, 4);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.5);
  FeatureMatrix T(2, 40);
  std::vector<int> labels(40);
  for (Index j = 0; j < 40; ++j) {
    labels[static_cast<std::size_t>(j)] = static_cast<int>(j % 2) + 1;
    T(0, j) = (j % 2 == 0 ? 0.0 : 5.0) + n(rng);
    T(1, j) = n(rng);
  }
  write_feature_csv(ws / "test_a.csv", T, &labels);
  FeatureMatrix R = T.rowwise().reverse();
  std::vector<int> rl(labels.rbegin(), labels.rend());
  write_feature_csv(ws / "test_b.csv", R, &rl);

  nlohmann::json c{{"labeled", {{"csv", "labeled.csv"}}},
                   {"unlabeled", {{"csv", "unlabeled.csv"}}},
                   {"split", {{"n_train", 60}, {"n_val", 30}}},
                   {"pretrain_inline", true},
                   {"hyperparams", {{"layer_sizes", {3}}, {"max_outer_iter", 5}}},
                   {"output_dir", "m"}};
  write_json(ws / "train.json", c);
  REQUIRE(run_cli("train --config " + q(ws / "train.json")) == cli::kOk);
  for (const char* name : {"a", "b"}) {
    c["test"] = {{"csv", std::string("test_") + name + ".csv"}};
    c["output_dir"] = name;
    write_json(ws / (std::string(name) + ".json"), c);
    REQUIRE(run_cli("evaluate --config " + q(ws / (std::string(name) + ".json")) + " --model " +
                    q(ws / "m" / "model.dstl")) == cli::kOk);
  }
  CHECK(slurp(ws / "a" / "metrics.json") == slurp(ws / "b" / "metrics.json"));
  CHECK(slurp(ws / "a" / "metrics.csv") == slurp(ws / "b" / "metrics.csv"));
}

TEST_CASE("train outputs are byte-identical across runs and thread counts") {
  Workspace ws("determinism");
  write_json(ws / "s.json", {{"output_dir", "data"},
                             {"synth", {{"dim", 6}, {"n_archetypes", 5}, {"n_classes", 3}, {"n_samples", 300},
                                        {"n_unlabeled", 400}}}});
  REQUIRE(run_cli("synth --config " + q(ws / "s.json") + " --seed 2") == cli::kOk);
  write_json(ws / "t.json", {{"labeled", {{"csv", "data/labeled.csv"}}},
                             {"unlabeled", {{"csv", "data/unlabeled.csv"}}},
                             {"split", {{"n_train", 150}, {"n_val", 75}}},
                             {"pretrain_inline", true},
                             {"hyperparams",
                              {{"layer_sizes", {5, 6}}, {"max_outer_iter", 25}, {"clip_t1", 0.05}, {"clip_t2", 0.05}}}});
  REQUIRE(run_cli("train --config " + q(ws / "t.json") + " --threads 1 --out " + q(ws / "r1")) == cli::kOk);
  REQUIRE(run_cli("train --config " + q(ws / "t.json") + " --threads 1 --out " + q(ws / "r2")) == cli::kOk);
  REQUIRE(run_cli("train --config " + q(ws / "t.json") + " --threads 4 --out " + q(ws / "r3")) == cli::kOk);
  for (const char* f : {"model.dstl", "trace.csv"}) {
    CHECK(slurp(ws / "r1" / f) == slurp(ws / "r2" / f));
    CHECK(slurp(ws / "r1" / f) == slurp(ws / "r3" / f));
  }
}
