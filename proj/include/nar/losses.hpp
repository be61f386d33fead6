#pragma once

// Loss family over per-class sigmoid outputs, with gradients taken with
// respect to the logits z (p = sigmoid(z)).
//
//   bce      mean over n*C entries of -[y log p + (1-y) log(1-p)]
//   elr_ml   (lambda/n) * sum_{i,c} log(1 - p_ic * t_ic)
//   bce_cw   (1/sum w) * sum w * -[y~ log p + (1-y~) log(1-p)]
//   nar      bce_cw + elr_ml
//
// Probabilities are clamped to [eps, 1-eps] before every log. Gradients are
// those of the unclamped expressions evaluated at the clamped probabilities,
// so they agree with the loss wherever the clamp is inactive and stay bounded
// where it is not.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "nar/dataset.hpp"
#include "nar/error.hpp"
#include "nar/label_handler.hpp"
#include "nar/numerics.hpp"

namespace nar {

enum class ElrTargetMode { ema, raw_label };

inline std::string_view to_string(ElrTargetMode m) {
  return m == ElrTargetMode::ema ? "ema" : "raw_label";
}

inline ElrTargetMode parse_elr_target_mode(std::string_view s) {
  if (s == "ema") return ElrTargetMode::ema;
  if (s == "raw_label") return ElrTargetMode::raw_label;
  throw ConfigError("unknown ELR target mode '" + std::string(s) + "'");
}

struct LossConfig {
  double lambda = 0.1;
  ElrTargetMode target_mode = ElrTargetMode::ema;
  double ema_momentum = 0.7;
  double eps = kDefaultLogEps;

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("loss.lambda must be >= 0");
    if (!(ema_momentum >= 0.0 && ema_momentum < 1.0)) {
      throw ConfigError("loss.ema_momentum must lie in [0, 1)");
    }
    if (!(eps > 0.0 && eps <= 1e-3)) throw ConfigError("loss.eps must lie in (0, 1e-3]");
  }
};

// Running per-entry targets for the early-learning term, one row per
// training sample.
struct ElrTargetState {
  Matrix targets;

  static ElrTargetState zeros(std::size_t n, std::size_t c) { return {Matrix(n, c)}; }
};

namespace detail {

inline void require_same_shape(std::string_view op, std::size_t rows, std::size_t cols,
                               const Matrix& p) {
  if (p.rows() != rows || p.cols() != cols) {
    throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " probabilities, got " +
                                p.shape_string());
  }
}

inline double clamp_probability(double p, double eps) noexcept {
  return std::clamp(p, eps, 1.0 - eps);
}

inline double entry_bce(std::uint8_t y, double p, double eps) noexcept {
  const double pc = clamp_probability(p, eps);
  return -(y * std::log(pc) + (1 - y) * std::log(1.0 - pc));
}

}  // namespace detail

inline double bce(const LabelMatrix& y, const Matrix& p, double eps = kDefaultLogEps) {
  detail::require_same_shape("bce", y.rows(), y.cols(), p);
  if (y.rows() == 0 || y.cols() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t c = 0; c < y.cols(); ++c) acc += detail::entry_bce(y(i, c), p(i, c), eps);
  return acc / static_cast<double>(y.rows() * y.cols());
}

inline double elr_ml(const Matrix& target, const Matrix& p, double lambda,
                     double eps = kDefaultLogEps) {
  detail::require_same_shape("elr_ml", target.rows(), target.cols(), p);
  if (lambda == 0.0 || p.rows() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t c = 0; c < p.cols(); ++c)
      acc += stable_log1m(detail::clamp_probability(p(i, c), eps) * target(i, c), eps);
  return lambda / static_cast<double>(p.rows()) * acc;
}

inline double elr_ml(const LabelMatrix& target, const Matrix& p, double lambda,
                     double eps = kDefaultLogEps) {
  return elr_ml(target.to_matrix(), p, lambda, eps);
}

// T <- beta * T + (1 - beta) * p on `rows`; p row k belongs to sample rows[k].
inline void update_elr_targets(ElrTargetState& state, const Matrix& p,
                               std::span<const std::size_t> rows, double beta) {
  if (p.rows() != rows.size() || p.cols() != state.targets.cols()) {
    throw std::invalid_argument("update_elr_targets: probabilities " + p.shape_string() +
                                " do not match " + std::to_string(rows.size()) + " rows of " +
                                state.targets.shape_string() + " targets");
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= state.targets.rows()) {
      throw std::out_of_range("update_elr_targets: row " + std::to_string(rows[k]) +
                              " out of range for " + std::to_string(state.targets.rows()) +
                              " samples");
    }
    auto t = state.targets.row(rows[k]);
    auto src = p.row(k);
    for (std::size_t c = 0; c < t.size(); ++c) t[c] = beta * t[c] + (1.0 - beta) * src[c];
  }
}

inline double bce_cw(const HandlingResult& h, const Matrix& p, double eps = kDefaultLogEps) {
  detail::require_same_shape("bce_cw", h.rows(), h.cols(), p);
  const std::size_t active = h.active_weight();
  if (active == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t c = 0; c < h.cols(); ++c)
      if (h.weight(i, c)) acc += detail::entry_bce(h.corrected(i, c), p(i, c), eps);
  return acc / static_cast<double>(active);
}

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad_logits;
};

// bce_cw + elr_ml and its gradient with respect to the logits. `elr_target`
// may be empty when lambda == 0.
inline LossAndGrad nar_loss(const HandlingResult& h, const Matrix& p, const Matrix& elr_target,
                            double lambda, double eps = kDefaultLogEps) {
  detail::require_same_shape("nar_loss", h.rows(), h.cols(), p);
  LossAndGrad out{bce_cw(h, p, eps), Matrix(p.rows(), p.cols())};

  const std::size_t active = h.active_weight();
  if (active > 0) {
    const auto denom = static_cast<double>(active);
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t c = 0; c < p.cols(); ++c)
        if (h.weight(i, c)) out.grad_logits(i, c) = (p(i, c) - h.corrected(i, c)) / denom;
  }

  if (lambda != 0.0 && p.rows() > 0) {
    detail::require_same_shape("nar_loss (elr target)", p.rows(), p.cols(), elr_target);
    out.loss += elr_ml(elr_target, p, lambda, eps);
    const double scale = lambda / static_cast<double>(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      for (std::size_t c = 0; c < p.cols(); ++c) {
        const double prob = p(i, c);
        const double pc = detail::clamp_probability(prob, eps);
        const double t = elr_target(i, c);
        const double slack = 1.0 - pc * t;
        if (slack <= eps) continue;
        out.grad_logits(i, c) += scale * (-t / slack) * prob * (1.0 - prob);
      }
    }
  }
  return out;
}

}  // namespace nar
