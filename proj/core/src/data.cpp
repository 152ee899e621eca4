#include "vsd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace vsd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && s[0] == '+') ++first;
  auto [p, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || p != last || s.empty()) throw DataError(where + ": '" + s + "' is not a number");
  return v;
}

std::uint32_t read_be32(std::ifstream& in, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError(path + ": truncated header at byte " + std::to_string(offset));
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

// Reads the magic number and extents; returns the extents.
std::vector<std::size_t> read_idx_header(std::ifstream& in, const std::string& path, std::uint8_t expected_dims) {
  unsigned char magic[4];
  if (!in.read(reinterpret_cast<char*>(magic), 4)) throw DataError(path + ": file shorter than the 4-byte magic number");
  if (magic[0] != 0 || magic[1] != 0) {
    throw DataError(path + ": bad IDX magic number at byte " + std::to_string(magic[0] != 0 ? 0 : 1) +
                    " (expected 0x00)");
  }
  if (magic[2] != 0x08) {
    throw DataError(path + ": unsupported IDX element type at byte 2 (expected 0x08 unsigned byte)");
  }
  if (magic[3] != expected_dims) {
    throw DataError(path + ": IDX dimension count at byte 3 is " + std::to_string(magic[3]) + ", expected " +
                    std::to_string(expected_dims));
  }
  std::vector<std::size_t> dims;
  for (std::uint8_t d = 0; d < expected_dims; ++d) {
    dims.push_back(read_be32(in, path, 4 + 4 * static_cast<std::size_t>(d)));
    if (dims.back() == 0) throw DataError(path + ": zero extent at byte " + std::to_string(4 + 4 * d));
  }
  return dims;
}

std::vector<unsigned char> read_payload(std::ifstream& in, const std::string& path, std::size_t count,
                                        std::size_t offset) {
  std::vector<unsigned char> buf(count);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != count) {
    throw DataError(path + ": payload ends at byte " + std::to_string(offset + got) + ", expected " +
                    std::to_string(offset + count));
  }
  return buf;
}

Tensor column(const std::vector<double>& v) { return Tensor({v.size(), 1}, v); }

std::vector<int> to_labels(const std::vector<double>& v, const std::string& path) {
  std::vector<int> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < 0 || v[i] != std::floor(v[i]) || v[i] > 1e6) {
      throw DataError(path + ": row " + std::to_string(i + 1) + " has label " + std::to_string(v[i]) +
                      "; classification labels must be non-negative integers");
    }
    out.push_back(static_cast<int>(v[i]));
  }
  return out;
}

std::size_t class_count(const std::vector<int>& a, const std::vector<int>& b) {
  int mx = -1;
  for (int y : a) mx = std::max(mx, y);
  for (int y : b) mx = std::max(mx, y);
  return static_cast<std::size_t>(mx + 1);
}

// Deterministic permutation split into (train, test) index lists.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, const DatasetConfig& c) {
  if (!(c.test_fraction >= 0.0 && c.test_fraction < 1.0)) throw DataError("test_fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = Rng::stream(c.seed, 1000 + c.split_index);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  const auto n_test = static_cast<std::size_t>(std::floor(c.test_fraction * static_cast<double>(n)));
  if (n_test >= n) throw DataError("split leaves no training rows");
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  return {train, test};
}

void stats(const Tensor& t, std::vector<double>& mean, std::vector<double>& sd, bool scalar) {
  const std::size_t n = t.dim(0);
  const std::size_t d = scalar ? 1 : t.size() / n;
  const std::size_t stride = t.size() / n;
  mean.assign(d, 0.0);
  sd.assign(d, 0.0);
  std::vector<double> count(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < stride; ++j) {
      const std::size_t f = scalar ? 0 : j;
      mean[f] += t[r * stride + j];
      count[f] += 1.0;
    }
  for (std::size_t f = 0; f < d; ++f) mean[f] /= count[f];
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < stride; ++j) {
      const std::size_t f = scalar ? 0 : j;
      const double e = t[r * stride + j] - mean[f];
      sd[f] += e * e;
    }
  for (std::size_t f = 0; f < d; ++f) {
    sd[f] = std::sqrt(sd[f] / count[f]);
    if (!(sd[f] > 1e-12)) sd[f] = 1.0;
  }
}

Tensor standardize(const Tensor& t, const std::vector<double>& mean, const std::vector<double>& sd, double pre) {
  if (t.rank() == 0 || t.size() == 0) return t;
  const std::size_t n = t.dim(0);
  const std::size_t stride = t.size() / n;
  if (mean.size() != 1 && mean.size() != stride) {
    throw DataError("normalization has " + std::to_string(mean.size()) + " features, data has " + std::to_string(stride));
  }
  Tensor out = t;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < stride; ++j) {
      const std::size_t f = mean.size() == 1 ? 0 : j;
      double& v = out[r * stride + j];
      v = (v * pre - mean[f]) / sd[f];
    }
  return out;
}

struct Raw {
  Tensor x_train, x_test;
  std::vector<int> l_train, l_test;
  Tensor y_train, y_test;
  Shape input_shape;
  bool regression = true;
  bool image = false;
};

Raw synthetic_cubic(const DatasetConfig& c) {
  const std::size_t n = c.n_train ? c.n_train : 20;
  const std::size_t m = c.n_test ? c.n_test : 100;
  const double sd = c.noise >= 0 ? c.noise : 3.0;
  Rng rng = Rng::stream(c.seed, 2000);
  Raw r;
  std::vector<double> x(n), y(n), xt(m), yt(m);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.uniform(-4.0, 4.0);
    y[i] = x[i] * x[i] * x[i] + sd * rng.normal();
  }
  for (std::size_t i = 0; i < m; ++i) {
    xt[i] = m == 1 ? 0.0 : -6.0 + 12.0 * static_cast<double>(i) / static_cast<double>(m - 1);
    yt[i] = xt[i] * xt[i] * xt[i] + sd * rng.normal();
  }
  r.x_train = column(x);
  r.y_train = column(y);
  r.x_test = column(xt);
  r.y_test = column(yt);
  r.input_shape = {1};
  return r;
}

double two_cluster_fn(double x) { return std::sin(2.0 * x) + 0.2 * x; }

Raw synthetic_two_cluster(const DatasetConfig& c) {
  const std::size_t n = c.n_train ? c.n_train : 40;
  const std::size_t m = c.n_test ? c.n_test : 100;
  const double sd = c.noise >= 0 ? c.noise : 0.1;
  Rng rng = Rng::stream(c.seed, 2001);
  std::vector<double> x(n), y(n), xt(m), yt(m);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = i % 2 == 0 ? rng.uniform(-2.0, -1.0) : rng.uniform(1.0, 2.0);
    y[i] = two_cluster_fn(x[i]) + sd * rng.normal();
  }
  for (std::size_t i = 0; i < m; ++i) {
    xt[i] = m == 1 ? 0.0 : -3.0 + 6.0 * static_cast<double>(i) / static_cast<double>(m - 1);
    yt[i] = two_cluster_fn(xt[i]) + sd * rng.normal();
  }
  Raw r;
  r.x_train = column(x);
  r.y_train = column(y);
  r.x_test = column(xt);
  r.y_test = column(yt);
  r.input_shape = {1};
  return r;
}

void moons(std::size_t n, double sd, Rng& rng, Tensor& x, std::vector<int>& labels) {
  x = Tensor({n, 2});
  labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform(0.0, std::numbers::pi);
    const int cls = static_cast<int>(i % 2);
    labels[i] = cls;
    const double a = cls == 0 ? std::cos(t) : 1.0 - std::cos(t);
    const double b = cls == 0 ? std::sin(t) : 0.5 - std::sin(t);
    x(i, 0) = a + sd * rng.normal();
    x(i, 1) = b + sd * rng.normal();
  }
}

Raw synthetic_moons(const DatasetConfig& c) {
  const double sd = c.noise >= 0 ? c.noise : 0.2;
  Rng rng = Rng::stream(c.seed, 2002);
  Raw r;
  r.regression = false;
  moons(c.n_train ? c.n_train : 500, sd, rng, r.x_train, r.l_train);
  moons(c.n_test ? c.n_test : 500, sd, rng, r.x_test, r.l_test);
  r.input_shape = {2};
  return r;
}

Raw from_csv(const DatasetConfig& c, bool regression) {
  if (c.path.empty()) throw DataError("CSV source needs data.path");
  CsvTable train = read_csv(c.path, c.target_column);
  Raw r;
  r.regression = regression;
  r.input_shape = {train.features.cols()};
  Tensor x_test;
  std::vector<double> t_test;
  Tensor x_train;
  std::vector<double> t_train;
  if (!c.test_path.empty()) {
    CsvTable test = read_csv(c.test_path, c.target_column);
    if (test.header != train.header) throw DataError(c.test_path + ": header differs from " + c.path);
    x_train = train.features;
    t_train = train.target;
    x_test = test.features;
    t_test = test.target;
  } else {
    auto [tr, te] = split_indices(train.features.rows(), c);
    x_train = take_rows(train.features, tr);
    x_test = te.empty() ? Tensor() : take_rows(train.features, te);
    for (std::size_t i : tr) t_train.push_back(train.target[i]);
    for (std::size_t i : te) t_test.push_back(train.target[i]);
  }
  r.x_train = x_train;
  r.x_test = x_test;
  if (regression) {
    r.y_train = column(t_train);
    r.y_test = t_test.empty() ? Tensor() : column(t_test);
  } else {
    r.l_train = to_labels(t_train, c.path);
    r.l_test = to_labels(t_test, c.test_path.empty() ? c.path : c.test_path);
  }
  return r;
}

Tensor add_channel_axis(const Tensor& images) {
  return images.reshaped({images.dim(0), 1, images.dim(1), images.dim(2)});
}

Raw from_idx(const DatasetConfig& c) {
  if (c.path.empty() || c.labels_path.empty()) throw DataError("idx-images needs data.path and data.labels_path");
  Raw r;
  r.regression = false;
  r.image = true;
  const Tensor images = read_idx_images(c.path);
  const std::vector<int> labels = read_idx_labels(c.labels_path);
  if (labels.size() != images.dim(0)) {
    throw DataError(c.labels_path + ": " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(images.dim(0)) + " images");
  }
  const Tensor all = add_channel_axis(images);
  r.input_shape = {1, images.dim(1), images.dim(2)};
  if (!c.test_path.empty()) {
    if (c.test_labels_path.empty()) throw DataError("data.test_path needs data.test_labels_path");
    const Tensor ti = read_idx_images(c.test_path);
    const std::vector<int> tl = read_idx_labels(c.test_labels_path);
    if (tl.size() != ti.dim(0)) throw DataError(c.test_labels_path + ": label count differs from image count");
    if (ti.dim(1) != images.dim(1) || ti.dim(2) != images.dim(2)) throw DataError(c.test_path + ": image size differs");
    r.x_train = all;
    r.l_train = labels;
    r.x_test = add_channel_axis(ti);
    r.l_test = tl;
  } else {
    auto [tr, te] = split_indices(all.dim(0), c);
    r.x_train = take_rows(all, tr);
    r.x_test = te.empty() ? Tensor() : take_rows(all, te);
    for (std::size_t i : tr) r.l_train.push_back(labels[i]);
    for (std::size_t i : te) r.l_test.push_back(labels[i]);
  }
  if (c.n_train > 0 && c.n_train < r.x_train.dim(0)) {
    std::vector<std::size_t> keep(c.n_train);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    r.x_train = take_rows(r.x_train, keep);
    r.l_train.resize(c.n_train);
  }
  if (c.n_test > 0 && r.x_test.rank() > 0 && c.n_test < r.x_test.dim(0)) {
    std::vector<std::size_t> keep(c.n_test);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    r.x_test = take_rows(r.x_test, keep);
    r.l_test.resize(c.n_test);
  }
  return r;
}

}  // namespace

nlohmann::json Normalization::to_json() const {
  return {{"x_mean", x_mean}, {"x_std", x_std}, {"y_mean", y_mean}, {"y_std", y_std}, {"x_scale", x_scale}};
}

Normalization Normalization::from_json(const nlohmann::json& j) {
  Normalization n;
  j.at("x_mean").get_to(n.x_mean);
  j.at("x_std").get_to(n.x_std);
  j.at("y_mean").get_to(n.y_mean);
  j.at("y_std").get_to(n.y_std);
  j.at("x_scale").get_to(n.x_scale);
  return n;
}

Tensor normalize_inputs(const Tensor& x, const Normalization& norm) {
  if (norm.x_mean.empty()) return x;
  return standardize(x, norm.x_mean, norm.x_std, norm.x_scale);
}

Tensor denormalize_targets(const Tensor& y, const Normalization& norm) {
  if (norm.y_mean.empty()) return y;
  Tensor out = y;
  const std::size_t d = y.cols();
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t f = norm.y_mean.size() == 1 ? 0 : j;
      out(r, j) = y(r, j) * norm.y_std[f] + norm.y_mean[f];
    }
  return out;
}

RegressionPrediction denormalize(const RegressionPrediction& pred, const Normalization& norm) {
  if (norm.y_mean.empty()) return pred;
  RegressionPrediction out{denormalize_targets(pred.mean, norm), pred.variance};
  const std::size_t d = pred.variance.cols();
  for (std::size_t r = 0; r < pred.variance.rows(); ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const double s = norm.y_std[norm.y_std.size() == 1 ? 0 : j];
      out.variance(r, j) *= s * s;
    }
  return out;
}

CsvTable read_csv(const std::string& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw DataError(path + ": no header row");
  t.header = split_csv_line(line);
  if (t.header.size() < 2) throw DataError(path + ": need at least one feature and one target column");
  std::size_t target = t.header.size() - 1;
  if (!target_column.empty()) {
    auto it = std::find(t.header.begin(), t.header.end(), target_column);
    if (it == t.header.end()) throw DataError(path + ": missing target column '" + target_column + "'");
    target = static_cast<std::size_t>(it - t.header.begin());
  }
  const std::size_t cols = t.header.size();
  std::vector<double> features;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (cells.size() != cols) {
      throw DataError(where + ": expected " + std::to_string(cols) + " fields, found " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (j == target && cells[j].empty()) throw DataError(where + ": missing label");
      const double v = parse_double(cells[j], where);
      if (j == target) {
        t.target.push_back(v);
      } else {
        features.push_back(v);
      }
    }
  }
  if (t.target.empty()) throw DataError(path + ": no data rows");
  t.features = Tensor({t.target.size(), cols - 1}, std::move(features));
  return t;
}

Tensor read_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  const std::vector<std::size_t> dims = read_idx_header(in, path, 3);
  const std::size_t count = dims[0] * dims[1] * dims[2];
  const std::vector<unsigned char> buf = read_payload(in, path, count, 16);
  std::vector<double> values(buf.begin(), buf.end());
  return Tensor({dims[0], dims[1], dims[2]}, std::move(values));
}

std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  const std::vector<std::size_t> dims = read_idx_header(in, path, 1);
  const std::vector<unsigned char> buf = read_payload(in, path, dims[0], 8);
  return std::vector<int>(buf.begin(), buf.end());
}

DatasetHandle load_dataset(const DatasetConfig& c, const Normalization* fixed) {
  Raw raw;
  if (c.source == "synthetic-cubic") {
    raw = synthetic_cubic(c);
  } else if (c.source == "synthetic-two-cluster") {
    raw = synthetic_two_cluster(c);
  } else if (c.source == "synthetic-moons") {
    raw = synthetic_moons(c);
  } else if (c.source == "csv-regression") {
    raw = from_csv(c, true);
  } else if (c.source == "csv-classification") {
    raw = from_csv(c, false);
  } else if (c.source == "idx-images") {
    raw = from_idx(c);
  } else {
    throw DataError("unknown data.source '" + c.source + "'");
  }

  DatasetHandle h;
  h.source = c.source;
  h.input_shape = raw.input_shape;
  if (fixed != nullptr) {
    h.norm = *fixed;
  } else if (c.normalize) {
    h.norm.x_scale = raw.image ? 1.0 / 255.0 : 1.0;
    stats(scale(raw.x_train, h.norm.x_scale), h.norm.x_mean, h.norm.x_std, raw.image);
    if (raw.regression) stats(raw.y_train, h.norm.y_mean, h.norm.y_std, false);
  } else if (raw.image) {
    // Unstandardized images still go to [0, 1].
    h.norm.x_scale = 1.0 / 255.0;
    h.norm.x_mean = {0.0};
    h.norm.x_std = {1.0};
  }
  auto norm_y = [&](const Tensor& y) {
    return h.norm.y_mean.empty() || y.rank() == 0 ? y : standardize(y, h.norm.y_mean, h.norm.y_std, 1.0);
  };
  h.train.x = normalize_inputs(raw.x_train, h.norm);
  h.test.x = raw.x_test.rank() == 0 ? raw.x_test : normalize_inputs(raw.x_test, h.norm);
  if (raw.regression) {
    h.train.targets = norm_y(raw.y_train);
    h.test.targets = norm_y(raw.y_test);
  } else {
    h.train.labels = raw.l_train;
    h.test.labels = raw.l_test;
    h.classes = class_count(raw.l_train, raw.l_test);
    if (h.classes < 2) throw DataError(c.source + ": classification needs at least two classes");
  }
  return h;
}

}  // namespace vsd
