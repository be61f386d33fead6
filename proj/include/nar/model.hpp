#pragma once

// One-hidden-layer multi-label classifier:
//   p = sigmoid(relu(x·W1 + b1)·W2 + b2)
// with hand-derived backpropagation and a text checkpoint format.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>

#include "nar/error.hpp"
#include "nar/io.hpp"
#include "nar/numerics.hpp"

namespace nar {

struct ModelParams {
  Matrix w1;  // D x H
  Matrix b1;  // 1 x H
  Matrix w2;  // H x C
  Matrix b2;  // 1 x C

  static constexpr std::array<std::string_view, 4> kNames{"w1", "b1", "w2", "b2"};

  static ModelParams zeros(std::size_t dim, std::size_t hidden, std::size_t classes) {
    return {Matrix(dim, hidden), Matrix(1, hidden), Matrix(hidden, classes), Matrix(1, classes)};
  }

  // Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases.
  static ModelParams glorot(std::size_t dim, std::size_t hidden, std::size_t classes, Rng& rng) {
    ModelParams m = zeros(dim, hidden, classes);
    const double a1 = std::sqrt(6.0 / static_cast<double>(dim + hidden));
    for (double& v : m.w1.values()) v = rng.uniform(-a1, a1);
    const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + classes));
    for (double& v : m.w2.values()) v = rng.uniform(-a2, a2);
    return m;
  }

  std::size_t dim() const noexcept { return w1.rows(); }
  std::size_t hidden() const noexcept { return w1.cols(); }
  std::size_t classes() const noexcept { return w2.cols(); }

  std::array<Matrix*, 4> tensors() noexcept { return {&w1, &b1, &w2, &b2}; }
  std::array<const Matrix*, 4> tensors() const noexcept { return {&w1, &b1, &w2, &b2}; }

  bool all_finite() const noexcept {
    return w1.all_finite() && b1.all_finite() && w2.all_finite() && b2.all_finite();
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using Gradients = ModelParams;

struct ForwardPass {
  Matrix input;       // B x D
  Matrix pre_hidden;  // B x H
  Matrix hidden;      // B x H, post-ReLU
  Matrix logits;      // B x C
  Matrix probs;       // B x C
};

namespace detail {

inline void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    auto b = bias.row(0);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
}

inline Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  auto o = out.row(0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) o[j] += r[j];
  }
  return out;
}

}  // namespace detail

inline ForwardPass forward(const ModelParams& params, const Matrix& x) {
  if (x.cols() != params.dim()) {
    throw std::invalid_argument("forward: input " + x.shape_string() + " vs model input width " +
                                std::to_string(params.dim()));
  }
  ForwardPass f;
  f.input = x;
  f.pre_hidden = matmul(x, params.w1);
  detail::add_row_bias(f.pre_hidden, params.b1);
  f.hidden = f.pre_hidden;
  for (double& v : f.hidden.values()) v = v > 0.0 ? v : 0.0;
  f.logits = matmul(f.hidden, params.w2);
  detail::add_row_bias(f.logits, params.b2);
  f.probs = sigmoid(f.logits);
  return f;
}

inline Matrix predict(const ModelParams& params, const Matrix& x) {
  return forward(params, x).probs;
}

// Parameter gradients given dL/dlogits for the batch in `pass`.
inline Gradients backward(const ModelParams& params, const ForwardPass& pass,
                          const Matrix& grad_logits) {
  if (grad_logits.rows() != pass.logits.rows() || grad_logits.cols() != pass.logits.cols()) {
    throw std::invalid_argument("backward: gradient " + grad_logits.shape_string() +
                                " vs logits " + pass.logits.shape_string());
  }
  Gradients g;
  g.w2 = matmul_tn(pass.hidden, grad_logits);
  g.b2 = detail::column_sums(grad_logits);
  Matrix grad_hidden = matmul_nt(grad_logits, params.w2);
  auto gh = grad_hidden.values();
  auto pre = pass.pre_hidden.values();
  for (std::size_t k = 0; k < gh.size(); ++k)
    if (!(pre[k] > 0.0)) gh[k] = 0.0;
  g.w1 = matmul_tn(pass.input, grad_hidden);
  g.b1 = detail::column_sums(grad_hidden);
  return g;
}

// Checkpoint: a `nar-checkpoint 1` line, then for each tensor a
// `<name> <rows> <cols>` line followed by one line of space-separated
// shortest round-trip decimals per row.
inline std::string checkpoint_to_string(const ModelParams& params) {
  std::string out = "nar-checkpoint 1\n";
  const auto tensors = params.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const Matrix& m = *tensors[t];
    out += std::string(ModelParams::kNames[t]) + ' ' + std::to_string(m.rows()) + ' ' +
           std::to_string(m.cols()) + '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      auto row = m.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out += ' ';
        out += io::format_double(row[c]);
      }
      out += '\n';
    }
  }
  return out;
}

inline ModelParams parse_checkpoint(std::string_view text) {
  auto lines = io::split(text, '\n');
  std::size_t li = 0;
  auto next = [&]() -> std::string_view {
    if (li >= lines.size()) throw FormatError("checkpoint truncated at line " + std::to_string(li + 1));
    return lines[li++];
  };
  if (io::trim(next()) != "nar-checkpoint 1") throw FormatError("line 1: not a nar checkpoint");
  ModelParams params;
  auto tensors = params.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const std::size_t header_line = li + 1;
    const auto head = io::split(io::trim(next()), ' ');
    if (head.size() != 3 || head[0] != ModelParams::kNames[t]) {
      throw FormatError("line " + std::to_string(header_line) + ": expected header for tensor " +
                        std::string(ModelParams::kNames[t]));
    }
    const auto rows = io::parse_u64(head[1]);
    const auto cols = io::parse_u64(head[2]);
    if (!rows || !cols) throw FormatError("line " + std::to_string(header_line) + ": bad shape");
    std::vector<double> values;
    values.reserve(*rows * *cols);
    for (std::size_t r = 0; r < *rows; ++r) {
      const std::size_t line_no = li + 1;
      const auto cells = io::split(io::trim(next()), ' ');
      if (cells.size() != *cols) {
        throw FormatError("line " + std::to_string(line_no) + ": expected " +
                          std::to_string(*cols) + " values");
      }
      for (auto cell : cells) {
        const auto v = io::parse_double(cell);
        if (!v || !std::isfinite(*v)) {
          throw FormatError("line " + std::to_string(line_no) + ": malformed value '" +
                            std::string(cell) + "'");
        }
        values.push_back(*v);
      }
    }
    *tensors[t] = Matrix(*rows, *cols, std::move(values));
  }
  if (params.b1.rows() != 1 || params.b1.cols() != params.w1.cols() ||
      params.w2.rows() != params.w1.cols() || params.b2.rows() != 1 ||
      params.b2.cols() != params.w2.cols()) {
    throw FormatError("checkpoint tensor shapes are inconsistent");
  }
  return params;
}

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
  io::write_file(path, checkpoint_to_string(params));
}

inline ModelParams load_checkpoint(const std::string& path) {
  try {
    return parse_checkpoint(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace nar
