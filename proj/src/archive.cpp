#include "dstl/archive.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dstl {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'D', 'S', 'T', 'L', 'A', 'R', 'C', '1'};

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorKind::InvalidInput, "model archive is truncated");
  }
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

struct Block {
  std::string name;
  const Matrix* data;
};

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json trace_to_json(const TrainTrace& trace) {
  json records = json::array();
  for (const auto& r : trace.records) {
    records.push_back({{"iteration", r.iteration},
                       {"residuals", r.residuals},
                       {"validation_overall", r.validation_overall},
                       {"snaps", r.snaps}});
  }
  return {{"best_iteration", trace.best_iteration}, {"records", records}};
}

TrainTrace trace_from_json(const json& j) {
  TrainTrace trace;
  trace.best_iteration = j.at("best_iteration").get<int>();
  for (const auto& r : j.at("records")) {
    trace.records.push_back({r.at("iteration").get<int>(), r.at("residuals").get<std::vector<double>>(),
                             r.at("validation_overall").get<double>(), r.at("snaps").get<int>()});
  }
  return trace;
}

}  // namespace

json hyperparams_to_json(const Hyperparams& hp) {
  std::vector<long long> sizes(hp.layer_sizes.begin(), hp.layer_sizes.end());
  return {{"layer_sizes", sizes},
          {"clip_t1", hp.clip_t1},
          {"clip_t2", hp.clip_t2},
          {"lr_a", hp.lr_a},
          {"lr_gamma", hp.lr_gamma},
          {"max_outer_iter", hp.max_outer_iter},
          {"snap_threshold", hp.snap_threshold},
          {"coding", {{"tol", hp.coding.tol}, {"max_iter", hp.coding.max_iter}}},
          {"classifier", {{"reg", hp.classifier.reg}, {"max_iter", hp.classifier.max_iter}, {"tol", hp.classifier.tol}}},
          {"stack", hp.stack == StackMode::AllLayers ? "all" : "last"},
          {"include_input", hp.include_input}};
}

Hyperparams hyperparams_from_json(const json& j, Hyperparams hp) {
  if (!j.is_object()) fail(ErrorKind::Config, "hyperparams must be a JSON object");
  static const std::set<std::string> known{"layer_sizes", "clip_t1",        "clip_t2", "lr_a",
                                           "lr_gamma",    "max_outer_iter", "snap_threshold", "coding",
                                           "classifier",  "stack",          "include_input"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(ErrorKind::Config, "unknown hyperparameter '" + key + "'");
  }
  try {
    if (j.contains("layer_sizes")) {
      hp.layer_sizes.clear();
      for (const auto& k : j["layer_sizes"]) hp.layer_sizes.push_back(k.get<Index>());
    }
    if (j.contains("clip_t1")) hp.clip_t1 = j["clip_t1"].get<double>();
    if (j.contains("clip_t2")) hp.clip_t2 = j["clip_t2"].get<double>();
    if (j.contains("lr_a")) hp.lr_a = j["lr_a"].get<double>();
    if (j.contains("lr_gamma")) hp.lr_gamma = j["lr_gamma"].get<double>();
    if (j.contains("max_outer_iter")) hp.max_outer_iter = j["max_outer_iter"].get<int>();
    if (j.contains("snap_threshold")) hp.snap_threshold = j["snap_threshold"].get<double>();
    if (j.contains("coding")) {
      const auto& c = j["coding"];
      if (c.contains("tol")) hp.coding.tol = c["tol"].get<double>();
      if (c.contains("max_iter")) hp.coding.max_iter = c["max_iter"].get<int>();
    }
    if (j.contains("classifier")) {
      const auto& c = j["classifier"];
      if (c.contains("reg")) hp.classifier.reg = c["reg"].get<double>();
      if (c.contains("max_iter")) hp.classifier.max_iter = c["max_iter"].get<int>();
      if (c.contains("tol")) hp.classifier.tol = c["tol"].get<double>();
    }
    if (j.contains("stack")) {
      const auto mode = j["stack"].get<std::string>();
      if (mode == "all") {
        hp.stack = StackMode::AllLayers;
      } else if (mode == "last") {
        hp.stack = StackMode::LastOnly;
      } else {
        fail(ErrorKind::Config, "stack must be \"all\" or \"last\"");
      }
    }
    if (j.contains("include_input")) hp.include_input = j["include_input"].get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("hyperparams: ") + e.what());
  }
  return hp;
}

std::vector<unsigned char> serialize_model(const DstlModel& model, const TrainTrace* trace) {
  std::vector<Block> blocks;
  json layers = json::array();
  for (std::size_t l = 0; l < model.dictionaries.size(); ++l) {
    const auto& d = model.dictionaries[l];
    const std::string name = "dictionary_" + std::to_string(l + 1);
    blocks.push_back({name, &d.atoms()});
    json layer{{"block", name}, {"source_indices", nullptr}};
    if (d.source_indices()) {
      layer["source_indices"] = std::vector<long long>(d.source_indices()->begin(), d.source_indices()->end());
    }
    layers.push_back(layer);
  }
  Matrix bias_row;
  json classifier = nullptr;
  if (model.classifier) {
    bias_row = model.classifier->bias;
    blocks.push_back({"classifier_weights", &model.classifier->weights});
    blocks.push_back({"classifier_bias", &bias_row});
    classifier = {{"weights", "classifier_weights"}, {"bias", "classifier_bias"}};
  }
  json block_list = json::array();
  for (const auto& b : blocks) block_list.push_back({{"name", b.name}, {"rows", b.data->rows()}, {"cols", b.data->cols()}});

  const json manifest{{"format", "dstl-archive"},
                      {"version", 1},
                      {"hyperparams", hyperparams_to_json(model.hyperparams)},
                      {"layers", layers},
                      {"classifier", classifier},
                      {"trace", trace ? trace_to_json(*trace) : json(nullptr)},
                      {"blocks", block_list}};
  const std::string text = manifest.dump();

  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : blocks) {
    put_u64(out, static_cast<std::uint64_t>(b.data->rows()));
    put_u64(out, static_cast<std::uint64_t>(b.data->cols()));
    for (Index r = 0; r < b.data->rows(); ++r) {
      for (Index c = 0; c < b.data->cols(); ++c) put_u64(out, std::bit_cast<std::uint64_t>((*b.data)(r, c)));
    }
  }
  return out;
}

ModelArchive deserialize_model(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    fail(ErrorKind::InvalidInput, "not a dstl model archive");
  }
  std::vector<unsigned char> rest(bytes.begin() + 8, bytes.end());
  Reader in(rest);
  const auto manifest_len = in.u64();
  if (manifest_len > rest.size()) fail(ErrorKind::InvalidInput, "model archive is truncated");
  json manifest;
  try {
    manifest = json::parse(in.text(static_cast<std::size_t>(manifest_len)));
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("model archive manifest: ") + e.what());
  }

  ModelArchive archive;
  try {
    if (manifest.at("format") != "dstl-archive" || manifest.at("version") != 1) {
      fail(ErrorKind::InvalidInput, "unsupported model archive version");
    }
    std::map<std::string, Matrix> blocks;
    for (const auto& b : manifest.at("blocks")) {
      const auto rows = in.u64();
      const auto cols = in.u64();
      if (rows != b.at("rows").get<std::uint64_t>() || cols != b.at("cols").get<std::uint64_t>()) {
        fail(ErrorKind::InvalidInput, "block shape header disagrees with the manifest");
      }
      if (rows * cols > rest.size()) fail(ErrorKind::InvalidInput, "model archive is truncated");
      Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
      for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = in.f64();
      }
      blocks.emplace(b.at("name").get<std::string>(), std::move(m));
    }
    if (!in.done()) fail(ErrorKind::InvalidInput, "trailing bytes after the last block");

    auto block = [&](const std::string& name) -> const Matrix& {
      const auto it = blocks.find(name);
      if (it == blocks.end()) fail(ErrorKind::InvalidInput, "missing block " + name);
      return it->second;
    };

    archive.model.hyperparams = hyperparams_from_json(manifest.at("hyperparams"));
    for (const auto& layer : manifest.at("layers")) {
      std::optional<std::vector<Index>> sources;
      if (!layer.at("source_indices").is_null()) {
        sources.emplace();
        for (const auto& s : layer["source_indices"]) sources->push_back(s.get<Index>());
      }
      archive.model.dictionaries.emplace_back(block(layer.at("block").get<std::string>()), std::move(sources));
    }
    if (!manifest.at("classifier").is_null()) {
      SoftmaxParams params;
      params.weights = block(manifest["classifier"].at("weights").get<std::string>());
      params.bias = block(manifest["classifier"].at("bias").get<std::string>()).col(0);
      archive.model.classifier = std::move(params);
    }
    if (!manifest.at("trace").is_null()) archive.trace = trace_from_json(manifest["trace"]);
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("model archive manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) fail(ErrorKind::InvalidInput, e.what());
    throw;
  }
  return archive;
}

void save_model(const std::filesystem::path& path, const DstlModel& model, const TrainTrace* trace) {
  const auto bytes = serialize_model(model, trace);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelArchive load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_model(bytes);
}

std::string trace_to_csv(const TrainTrace& trace) {
  std::ostringstream os;
  const std::size_t layers = trace.records.empty() ? 0 : trace.records.front().residuals.size();
  os << "iteration";
  for (std::size_t l = 0; l < layers; ++l) os << ",residual_l" << l + 1;
  os << ",validation_overall_accuracy,snaps\n";
  for (const auto& r : trace.records) {
    os << r.iteration;
    for (double v : r.residuals) os << ',' << format_double(v);
    os << ',' << format_double(r.validation_overall) << ',' << r.snaps << '\n';
  }
  return os.str();
}

}  // namespace dstl
