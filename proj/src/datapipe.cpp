#include "dstl/datapipe.hpp"
#include "dstl/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace dstl {
namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t row, std::size_t col) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorKind::InvalidInput, "row " + std::to_string(row) + ", column " + std::to_string(col) +
                                      ": cannot parse '" + s + "' as a number");
  }
  return v;
}

template <typename T>
T from_le_bytes(const unsigned char* p) {
  static_assert(sizeof(T) == 4);
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
                    static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  return std::bit_cast<T>(u);
}

template <typename T>
void to_le_bytes(T value, unsigned char* p) {
  static_assert(sizeof(T) == 4);
  const auto u = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<unsigned char>(u >> (8 * i));
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

json metrics_json(const Metrics& m) {
  json j;
  j["overall_accuracy"] = m.overall_accuracy;
  j["average_accuracy"] = m.average_accuracy;
  j["kappa"] = m.kappa;
  j["per_class_accuracy"] = m.per_class_accuracy;
  json confusion = json::array();
  for (Index r = 0; r < m.confusion.rows(); ++r) {
    std::vector<long long> row(static_cast<std::size_t>(m.confusion.cols()));
    for (Index c = 0; c < m.confusion.cols(); ++c) row[static_cast<std::size_t>(c)] = m.confusion(r, c);
    confusion.push_back(row);
  }
  j["confusion"] = confusion;
  return j;
}

}  // namespace

LabeledDataset make_labeled(FeatureMatrix X, std::vector<int> labels, int num_classes) {
  if (static_cast<Index>(labels.size()) != X.cols()) fail(ErrorKind::Dimension, "label count differs from sample count");
  if (num_classes < 1) fail(ErrorKind::InvalidInput, "class count must be positive");
  require_finite(X, "labeled features");
  LabeledDataset out;
  out.targets = Matrix::Zero(num_classes, X.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > num_classes) {
      fail(ErrorKind::InvalidInput, "label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                                        " outside 1.." + std::to_string(num_classes));
    }
    out.targets(labels[i] - 1, static_cast<Index>(i)) = 1.0;
  }
  out.X = std::move(X);
  out.labels = std::move(labels);
  out.num_classes = num_classes;
  return out;
}

LabeledDataset subset(const LabeledDataset& data, const std::vector<Index>& columns) {
  FeatureMatrix X(data.X.rows(), static_cast<Index>(columns.size()));
  std::vector<int> labels(columns.size());
  for (std::size_t i = 0; i < columns.size(); ++i) {
    X.col(static_cast<Index>(i)) = data.X.col(columns[i]);
    labels[i] = data.labels[static_cast<std::size_t>(columns[i])];
  }
  return make_labeled(std::move(X), std::move(labels), data.num_classes);
}

void RasterImage::validate() const {
  if (bands < 1 || height < 1 || width < 1) fail(ErrorKind::InvalidInput, "raster dimensions must be positive");
  if (static_cast<Index>(values.size()) != bands * height * width) {
    fail(ErrorKind::Dimension, "raster value count does not match bands * height * width");
  }
  if (!labels.empty() && static_cast<Index>(labels.size()) != height * width) {
    fail(ErrorKind::Dimension, "label plane size does not match height * width");
  }
  for (double v : values) {
    if (!std::isfinite(v) && !(nodata && std::isnan(*nodata) && std::isnan(v))) {
      fail(ErrorKind::InvalidInput, "raster contains non-finite values");
    }
  }
  for (int l : labels) {
    if (l < 0) fail(ErrorKind::InvalidInput, "raster labels must be non-negative");
  }
}

PatchSet extract_patches(const RasterImage& raster, Index patch, bool labeled_only, Index stride) {
  raster.validate();
  if (patch < 1 || patch % 2 == 0) fail(ErrorKind::InvalidInput, "patch size must be odd and at least 1");
  if (patch > raster.height || patch > raster.width) fail(ErrorKind::InvalidInput, "patch exceeds raster size");
  if (stride < 1) fail(ErrorKind::InvalidInput, "stride must be at least 1");

  const Index half = patch / 2;
  const Index dim = raster.bands * patch * patch;
  auto is_nodata = [&](double v) {
    if (!raster.nodata) return false;
    return std::isnan(*raster.nodata) ? std::isnan(v) : v == *raster.nodata;
  };

  std::vector<std::pair<Index, Index>> centres;
  for (Index r = half; r + half < raster.height; r += stride) {
    for (Index c = half; c + half < raster.width; c += stride) {
      if (labeled_only && raster.label_at(r, c) == 0) continue;
      centres.emplace_back(r, c);
    }
  }

  PatchSet out;
  out.X.resize(dim, static_cast<Index>(centres.size()));
  std::vector<bool> keep(centres.size(), true);
  parallel_for(static_cast<Index>(centres.size()), [&](Index i) {
    const auto [r0, c0] = centres[static_cast<std::size_t>(i)];
    Index k = 0;
    for (Index b = 0; b < raster.bands; ++b) {
      for (Index r = r0 - half; r <= r0 + half; ++r) {
        for (Index c = c0 - half; c <= c0 + half; ++c) {
          const double v = raster.at(b, r, c);
          if (is_nodata(v)) keep[static_cast<std::size_t>(i)] = false;
          out.X(k++, i) = v;
        }
      }
    }
  });

  Index kept = 0;
  for (std::size_t i = 0; i < centres.size(); ++i) {
    if (!keep[i]) continue;
    if (kept != static_cast<Index>(i)) out.X.col(kept) = out.X.col(static_cast<Index>(i));
    out.labels.push_back(raster.label_at(centres[i].first, centres[i].second));
    ++kept;
  }
  out.X.conservativeResize(dim, kept);
  return out;
}

FeatureMatrix gcn_shift(const FeatureMatrix& X) {
  constexpr double kStdFloor = 1e-8;
  FeatureMatrix out(X.rows(), X.cols());
  if (X.size() == 0) return out;
  for (Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).mean();
    const Vector centred = X.col(j).array() - mean;
    const double std_dev = std::sqrt(centred.squaredNorm() / static_cast<double>(X.rows()));
    out.col(j) = centred / std::max(std_dev, kStdFloor);
  }
  const double offset = -out.minCoeff();
  out.array() += offset;
  return out;
}

Split split(const LabeledDataset& data, Index n_train, Index n_val, std::uint64_t seed) {
  if (n_train < 0 || n_val < 0 || n_train + n_val > data.size()) {
    fail(ErrorKind::Infeasible, "cannot draw " + std::to_string(n_train) + " training and " + std::to_string(n_val) +
                                    " validation samples from " + std::to_string(data.size()));
  }
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto part = [&](std::size_t begin, std::size_t end) {
    std::vector<Index> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(idx.begin(), idx.end());
    return subset(data, idx);
  };
  const auto nt = static_cast<std::size_t>(n_train);
  const auto nv = static_cast<std::size_t>(n_val);
  Split out{part(0, nt), part(nt, nt + nv), part(nt + nv, order.size())};

  const Vector counts = out.train.targets.rowwise().sum();
  for (Index c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0.0) log::warn("class ", c + 1, " is absent from the training split");
  }
  return out;
}

FeatureMatrix subsample(const FeatureMatrix& X, Index count, std::uint64_t seed) {
  if (count < 0) fail(ErrorKind::InvalidInput, "subsample count must be non-negative");
  if (count >= X.cols()) return X;
  std::vector<Index> order(static_cast<std::size_t>(X.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(static_cast<std::size_t>(count));
  std::sort(order.begin(), order.end());
  FeatureMatrix out(X.rows(), count);
  for (Index i = 0; i < count; ++i) out.col(i) = X.col(order[static_cast<std::size_t>(i)]);
  return out;
}

Metrics evaluate(const std::vector<int>& truth, const std::vector<int>& predicted, int num_classes) {
  if (truth.size() != predicted.size()) fail(ErrorKind::Dimension, "label vectors differ in length");
  if (num_classes < 1) fail(ErrorKind::InvalidInput, "class count must be positive");
  Metrics m;
  m.confusion.setZero(num_classes, num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 1 || truth[i] > num_classes || predicted[i] < 1 || predicted[i] > num_classes) {
      fail(ErrorKind::InvalidInput, "label out of range at position " + std::to_string(i));
    }
    ++m.confusion(truth[i] - 1, predicted[i] - 1);
  }
  const auto n = static_cast<double>(truth.size());
  if (truth.empty()) {
    m.per_class_accuracy.assign(static_cast<std::size_t>(num_classes), std::numeric_limits<double>::quiet_NaN());
    return m;
  }

  double recall_sum = 0.0;
  int present = 0;
  double chance = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const auto row = static_cast<double>(m.confusion.row(c).sum());
    const auto col = static_cast<double>(m.confusion.col(c).sum());
    chance += (row / n) * (col / n);
    if (row > 0) {
      const double recall = 100.0 * static_cast<double>(m.confusion(c, c)) / row;
      m.per_class_accuracy.push_back(recall);
      recall_sum += recall;
      ++present;
    } else {
      m.per_class_accuracy.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  const double agreement = static_cast<double>(m.confusion.trace()) / n;
  m.overall_accuracy = 100.0 * agreement;
  m.average_accuracy = present > 0 ? recall_sum / present : 0.0;
  // chance agreement of 1 means a single class on both sides
  m.kappa = chance < 1.0 ? (agreement - chance) / (1.0 - chance) : (agreement == 1.0 ? 1.0 : 0.0);
  return m;
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::InvalidInput, path.string() + ": missing header row");
  const auto header = split_csv_line(line);

  FeatureTable table;
  std::size_t dim = header.size();
  if (!header.empty() && header.back() == "label") {
    table.has_labels = true;
    --dim;
  }
  if (dim == 0) fail(ErrorKind::InvalidInput, path.string() + ": no feature columns");
  for (std::size_t i = 0; i < dim; ++i) {
    if (header[i] != "f" + std::to_string(i)) {
      fail(ErrorKind::InvalidInput, path.string() + ": expected header column f" + std::to_string(i) + ", got '" +
                                        header[i] + "'");
    }
  }

  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorKind::InvalidInput, path.string() + ": row " + std::to_string(row) + " has " +
                                        std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < dim; ++i) {
      const double v = parse_double(fields[i], row, i);
      if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, path.string() + ": non-finite value in row " + std::to_string(row));
      values.push_back(v);
    }
    int label = 0;
    if (table.has_labels && !fields[dim].empty()) {
      const double l = parse_double(fields[dim], row, dim);
      if (l < 0 || l != std::floor(l)) fail(ErrorKind::InvalidInput, path.string() + ": invalid label in row " + std::to_string(row));
      label = static_cast<int>(l);
    }
    table.labels.push_back(label);
  }
  if (row == 0) fail(ErrorKind::InvalidInput, path.string() + ": no data rows");
  table.X = Eigen::Map<Matrix>(values.data(), static_cast<Index>(dim), static_cast<Index>(row));
  return table;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& X, const std::vector<int>* labels,
                       const std::string& prefix) {
  if (labels && static_cast<Index>(labels->size()) != X.cols()) fail(ErrorKind::Dimension, "label count mismatch");
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (Index r = 0; r < X.rows(); ++r) out << (r ? "," : "") << prefix << r;
  if (labels) out << ",label";
  out << '\n';
  for (Index j = 0; j < X.cols(); ++j) {
    for (Index r = 0; r < X.rows(); ++r) out << (r ? "," : "") << format_double(X(r, j));
    if (labels) out << ',' << (*labels)[static_cast<std::size_t>(j)];
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

RasterImage read_raster(const std::filesystem::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) fail(ErrorKind::Io, "cannot open " + sidecar.string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidInput, sidecar.string() + ": " + e.what());
  }
  RasterImage raster;
  try {
    raster.bands = meta.at("bands").get<Index>();
    raster.height = meta.at("height").get<Index>();
    raster.width = meta.at("width").get<Index>();
    if (meta.contains("nodata") && !meta["nodata"].is_null()) raster.nodata = meta["nodata"].get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidInput, sidecar.string() + ": " + e.what());
  }
  const auto base = sidecar.parent_path();
  if (raster.bands < 1 || raster.height < 1 || raster.width < 1) {
    fail(ErrorKind::InvalidInput, sidecar.string() + ": raster dimensions must be positive");
  }
  const auto count = static_cast<std::size_t>(raster.bands * raster.height * raster.width);
  const auto bytes = read_bytes(base / meta.at("data").get<std::string>());
  if (bytes.size() != 4 * count) fail(ErrorKind::InvalidInput, sidecar.string() + ": data file has the wrong size");
  raster.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) raster.values[i] = from_le_bytes<float>(bytes.data() + 4 * i);

  if (meta.contains("labels") && !meta["labels"].is_null()) {
    const auto pixels = static_cast<std::size_t>(raster.height * raster.width);
    const auto lbytes = read_bytes(base / meta["labels"].get<std::string>());
    if (lbytes.size() != 4 * pixels) fail(ErrorKind::InvalidInput, sidecar.string() + ": label file has the wrong size");
    raster.labels.resize(pixels);
    for (std::size_t i = 0; i < pixels; ++i) raster.labels[i] = from_le_bytes<std::int32_t>(lbytes.data() + 4 * i);
  }
  raster.validate();
  return raster;
}

void write_raster(const std::filesystem::path& sidecar, const RasterImage& raster) {
  raster.validate();
  const auto stem = sidecar.stem().string();
  json meta{{"bands", raster.bands}, {"height", raster.height}, {"width", raster.width}, {"data", stem + ".f32"}};
  if (raster.nodata) meta["nodata"] = *raster.nodata;

  std::vector<unsigned char> bytes(4 * raster.values.size());
  for (std::size_t i = 0; i < raster.values.size(); ++i) {
    to_le_bytes(static_cast<float>(raster.values[i]), bytes.data() + 4 * i);
  }
  write_bytes(sidecar.parent_path() / (stem + ".f32"), bytes);
  if (!raster.labels.empty()) {
    std::vector<unsigned char> lbytes(4 * raster.labels.size());
    for (std::size_t i = 0; i < raster.labels.size(); ++i) {
      to_le_bytes(static_cast<std::int32_t>(raster.labels[i]), lbytes.data() + 4 * i);
    }
    write_bytes(sidecar.parent_path() / (stem + ".labels.i32"), lbytes);
    meta["labels"] = stem + ".labels.i32";
  }
  std::ofstream out(sidecar);
  if (!out) fail(ErrorKind::Io, "cannot write " + sidecar.string());
  out << meta.dump(2) << '\n';
}

std::string metrics_to_json(const std::vector<std::pair<std::string, Metrics>>& columns) {
  json j = json::object();
  for (const auto& [name, m] : columns) j[name] = metrics_json(m);
  return j.dump(2) + "\n";
}

std::string metrics_to_csv(const std::vector<std::pair<std::string, Metrics>>& columns) {
  std::ostringstream os;
  os << "metric";
  for (const auto& col : columns) os << ',' << col.first;
  os << '\n';
  auto row = [&](const std::string& name, auto&& get) {
    os << name;
    for (const auto& col : columns) os << ',' << format_double(get(col.second));
    os << '\n';
  };
  row("overall_accuracy", [](const Metrics& m) { return m.overall_accuracy; });
  row("average_accuracy", [](const Metrics& m) { return m.average_accuracy; });
  row("kappa", [](const Metrics& m) { return m.kappa; });
  std::size_t classes = columns.empty() ? 0 : columns.front().second.per_class_accuracy.size();
  for (std::size_t c = 0; c < classes; ++c) {
    row("class_" + std::to_string(c + 1) + "_accuracy",
        [c](const Metrics& m) { return m.per_class_accuracy[c]; });
  }
  return os.str();
}

}  // namespace dstl
