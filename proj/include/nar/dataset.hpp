#pragma once

// Multi-label datasets: the binary label matrix, feature/label pairs, the
// synthetic generator and the CSV format for externally supplied data.
//
// CSV layout: header `f0,...,f{D-1},y0,...,y{C-1}`, one sample per row,
// features written as shortest round-trip decimals, labels as 0/1, `\n` line
// endings.

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nar/error.hpp"
#include "nar/io.hpp"
#include "nar/numerics.hpp"

namespace nar {

class LabelMatrix {
 public:
  LabelMatrix() = default;

  LabelMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), entries_(rows * cols, 0), positives_(cols, 0) {}

  LabelMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> entries)
      : rows_(rows), cols_(cols), entries_(std::move(entries)), positives_(cols, 0) {
    if (entries_.size() != rows_ * cols_) {
      throw std::invalid_argument("LabelMatrix: " + std::to_string(entries_.size()) +
                                  " entries for shape " + std::to_string(rows_) + "x" +
                                  std::to_string(cols_));
    }
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      if (entries_[k] > 1) throw std::invalid_argument("LabelMatrix: non-binary entry");
      positives_[k % cols_] += entries_[k];
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::uint8_t operator()(std::size_t i, std::size_t c) const noexcept {
    return entries_[i * cols_ + c];
  }

  void set(std::size_t i, std::size_t c, std::uint8_t value) {
    if (value > 1) throw std::invalid_argument("LabelMatrix::set: non-binary value");
    auto& slot = entries_[i * cols_ + c];
    positives_[c] = positives_[c] - slot + value;
    slot = value;
  }

  void flip(std::size_t i, std::size_t c) { set(i, c, (*this)(i, c) ? 0 : 1); }

  std::size_t positives(std::size_t c) const noexcept { return positives_[c]; }
  std::span<const std::size_t> positives_per_class() const noexcept { return positives_; }
  std::size_t total_positives() const noexcept {
    return std::accumulate(positives_.begin(), positives_.end(), std::size_t{0});
  }

  std::span<const std::uint8_t> entries() const noexcept { return entries_; }
  std::span<const std::uint8_t> row(std::size_t i) const noexcept {
    return {entries_.data() + i * cols_, cols_};
  }

  std::vector<std::uint8_t> column(std::size_t c) const {
    std::vector<std::uint8_t> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, c);
    return out;
  }

  LabelMatrix gather_rows(std::span<const std::size_t> indices) const {
    std::vector<std::uint8_t> out;
    out.reserve(indices.size() * cols_);
    for (auto idx : indices) {
      if (idx >= rows_) throw std::out_of_range("LabelMatrix::gather_rows: index out of range");
      auto r = row(idx);
      out.insert(out.end(), r.begin(), r.end());
    }
    return LabelMatrix(indices.size(), cols_, std::move(out));
  }

  Matrix to_matrix() const {
    Matrix m(rows_, cols_);
    auto dst = m.values();
    for (std::size_t k = 0; k < entries_.size(); ++k) dst[k] = entries_[k];
    return m;
  }

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> entries_;
  std::vector<std::size_t> positives_;
};

enum class Split { train, val, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

struct MultiLabelDataset {
  Matrix features;
  LabelMatrix labels;
  Split split = Split::train;

  MultiLabelDataset() = default;
  MultiLabelDataset(Matrix f, LabelMatrix y, Split s = Split::train)
      : features(std::move(f)), labels(std::move(y)), split(s) {
    if (features.rows() != labels.rows()) {
      throw std::invalid_argument("MultiLabelDataset: " + std::to_string(features.rows()) +
                                  " feature rows vs " + std::to_string(labels.rows()) +
                                  " label rows");
    }
  }

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t dim() const noexcept { return features.cols(); }
  std::size_t num_classes() const noexcept { return labels.cols(); }

  MultiLabelDataset with_labels(LabelMatrix y) const { return {features, std::move(y), split}; }

  friend bool operator==(const MultiLabelDataset&, const MultiLabelDataset&) = default;
};

struct SyntheticSpec {
  std::size_t samples = 2000;
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::vector<double> priors;  // empty: every class uses `default_prior`
  double default_prior = 0.2;
  double prototype_scale = 0.3;
  double feature_noise = 0.5;
  std::uint64_t seed = 0;

  double prior(std::size_t c) const { return priors.empty() ? default_prior : priors.at(c); }

  void validate() const {
    if (samples == 0 || classes == 0 || dim == 0) {
      throw ConfigError("SyntheticSpec: samples, classes and dim must be positive");
    }
    if (!priors.empty() && priors.size() != classes) {
      throw ConfigError("SyntheticSpec: " + std::to_string(priors.size()) + " priors for " +
                        std::to_string(classes) + " classes");
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = prior(c);
      if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError("SyntheticSpec: prior of class " + std::to_string(c) +
                          " must lie in (0, 1)");
      }
    }
    if (!(prototype_scale >= 0.0) || !(feature_noise >= 0.0)) {
      throw ConfigError("SyntheticSpec: prototype_scale and feature_noise must be >= 0");
    }
  }
};

struct SyntheticSplits {
  MultiLabelDataset train;
  MultiLabelDataset val;
  MultiLabelDataset test;
  Matrix prototypes;  // D x C
};

namespace detail {

inline MultiLabelDataset take_rows(const Matrix& x, const LabelMatrix& y,
                                   std::span<const std::size_t> rows, Split split) {
  return {x.gather_rows(rows), y.gather_rows(rows), split};
}

}  // namespace detail

// y ~ Bernoulli(prior_c) entrywise, x = P·y + noise, split 70/15/15. The
// split assignment is redrawn (up to 100 times) until every class has a
// positive in every split.
inline SyntheticSplits generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  const std::size_t n = spec.samples, c_count = spec.classes, d = spec.dim;

  Rng proto_rng = root.child("synthetic.prototypes");
  Matrix prototypes(d, c_count);
  for (double& v : prototypes.values()) v = proto_rng.normal(0.0, spec.prototype_scale);

  Rng label_rng = root.child("synthetic.labels");
  LabelMatrix labels(n, c_count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < c_count; ++c)
      if (label_rng.bernoulli(spec.prior(c))) labels.set(i, c, 1);

  Rng noise_rng = root.child("synthetic.features");
  Matrix features(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = features.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      double acc = 0.0;
      for (std::size_t c = 0; c < c_count; ++c) acc += prototypes(k, c) * labels(i, c);
      row[k] = acc + noise_rng.normal(0.0, spec.feature_noise);
    }
  }

  const auto n_train = static_cast<std::size_t>(std::llround(0.70 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(n)));
  if (n_train + n_val >= n) throw ConfigError("generate_synthetic: too few samples to split");

  Rng split_rng = root.child("synthetic.split");
  std::size_t offending = 0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    split_rng.shuffle(order);
    std::span<const std::size_t> all(order);
    auto part_train = all.subspan(0, n_train);
    auto part_val = all.subspan(n_train, n_val);
    auto part_test = all.subspan(n_train + n_val);

    bool ok = true;
    for (auto part : {part_train, part_val, part_test}) {
      std::vector<std::size_t> pos(c_count, 0);
      for (auto idx : part)
        for (std::size_t c = 0; c < c_count; ++c) pos[c] += labels(idx, c);
      for (std::size_t c = 0; c < c_count && ok; ++c) {
        if (pos[c] == 0) {
          ok = false;
          offending = c;
        }
      }
      if (!ok) break;
    }
    if (ok) {
      return {detail::take_rows(features, labels, part_train, Split::train),
              detail::take_rows(features, labels, part_val, Split::val),
              detail::take_rows(features, labels, part_test, Split::test), prototypes};
    }
  }
  throw ConfigError("generate_synthetic: class " + std::to_string(offending) +
                    " has no positive sample in some split after 100 attempts");
}

inline std::string dataset_to_csv(const MultiLabelDataset& ds) {
  std::string out;
  for (std::size_t k = 0; k < ds.dim(); ++k) {
    if (k) out += ',';
    out += 'f' + std::to_string(k);
  }
  for (std::size_t c = 0; c < ds.num_classes(); ++c) {
    if (ds.dim() || c) out += ',';
    out += 'y' + std::to_string(c);
  }
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    bool first = true;
    for (double v : ds.features.row(i)) {
      if (!first) out += ',';
      out += io::format_double(v);
      first = false;
    }
    for (auto y : ds.labels.row(i)) {
      if (!first) out += ',';
      out += y ? '1' : '0';
      first = false;
    }
    out += '\n';
  }
  return out;
}

namespace detail {

struct CsvHeader {
  std::size_t features = 0;
  std::size_t labels = 0;
};

inline CsvHeader parse_header(std::string_view line, bool allow_features) {
  CsvHeader h;
  const auto cols = io::split(line, ',');
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const auto name = io::trim(cols[k]);
    if (name.size() < 2 || (name[0] != 'f' && name[0] != 'y')) {
      throw FormatError("line 1: unexpected header column '" + std::string(name) + "'");
    }
    const auto index = io::parse_u64(name.substr(1));
    const bool is_feature = name[0] == 'f';
    const std::size_t expected = is_feature ? h.features : h.labels;
    if (!index || *index != expected || (is_feature && (h.labels > 0 || !allow_features))) {
      throw FormatError("line 1: header column '" + std::string(name) + "' out of order");
    }
    (is_feature ? h.features : h.labels) += 1;
  }
  if (h.labels == 0) throw FormatError("line 1: header declares no label columns");
  return h;
}

}  // namespace detail

inline MultiLabelDataset parse_dataset_csv(std::string_view text, Split split = Split::train) {
  auto lines = io::split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw FormatError("line 1: missing header");
  const auto header = detail::parse_header(lines[0], true);
  const std::size_t width = header.features + header.labels;
  const std::size_t n = lines.size() - 1;

  std::vector<double> features;
  std::vector<std::uint8_t> labels;
  features.reserve(n * header.features);
  labels.reserve(n * header.labels);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string where = "line " + std::to_string(li + 1) + ": ";
    const auto cells = io::split(lines[li], ',');
    if (cells.size() != width) {
      throw FormatError(where + "expected " + std::to_string(width) + " fields, got " +
                        std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < header.features; ++k) {
      const auto v = io::parse_double(cells[k]);
      if (!v || !std::isfinite(*v)) {
        throw FormatError(where + "malformed feature value '" + std::string(cells[k]) + "'");
      }
      features.push_back(*v);
    }
    for (std::size_t c = 0; c < header.labels; ++c) {
      const auto cell = io::trim(cells[header.features + c]);
      if (cell != "0" && cell != "1") {
        throw FormatError(where + "non-binary label '" + std::string(cell) + "'");
      }
      labels.push_back(cell == "1" ? 1 : 0);
    }
  }
  return {Matrix(n, header.features, std::move(features)),
          LabelMatrix(n, header.labels, std::move(labels)), split};
}

inline MultiLabelDataset load_dataset(const std::string& path, Split split = Split::train) {
  try {
    return parse_dataset_csv(io::read_file(path), split);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void save_dataset(const MultiLabelDataset& ds, const std::string& path) {
  io::write_file(path, dataset_to_csv(ds));
}

// Label-only CSV (header `y0,...`), also used for corruption masks.
inline std::string labels_to_csv(const LabelMatrix& y) {
  std::string out;
  for (std::size_t c = 0; c < y.cols(); ++c) {
    if (c) out += ',';
    out += 'y' + std::to_string(c);
  }
  out += '\n';
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t c = 0; c < y.cols(); ++c) {
      if (c) out += ',';
      out += y(i, c) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline LabelMatrix parse_labels_csv(std::string_view text) {
  auto ds = parse_dataset_csv(text);
  if (ds.dim() != 0) throw FormatError("line 1: label file must not contain feature columns");
  return std::move(ds.labels);
}

}  // namespace nar
