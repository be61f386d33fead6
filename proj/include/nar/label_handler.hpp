#pragma once

// Three-state confidence-based label handling.
//
// For a label entry y with predicted probability p:
//
//   y = 1, p <  t1_flip            -> corrected 0, weight 1   (flip)
//   y = 1, t1_flip <= p < t1_w0    -> corrected 1, weight 0   (deactivate)
//   y = 0, p >  t0_flip            -> corrected 1, weight 1   (flip)
//   y = 0, t0_w0 < p <= t0_flip    -> corrected 0, weight 0   (deactivate)
//   otherwise                      -> corrected y, weight 1   (retain)
//
// Boundaries follow the inequalities exactly; no tolerance is applied.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nar/dataset.hpp"
#include "nar/error.hpp"
#include "nar/numerics.hpp"

namespace nar {

struct ThresholdSet {
  double t1_flip = 0.05;
  double t1_w0 = 0.2;
  double t0_w0 = 0.5;
  double t0_flip = 0.9;

  // Every entry retained: the handler degenerates to plain BCE.
  static constexpr ThresholdSet all_retain() { return {0.0, 0.0, 1.0, 1.0}; }

  bool valid() const noexcept {
    return 0.0 <= t1_flip && t1_flip <= t1_w0 && t1_w0 <= 1.0 && 0.0 <= t0_w0 &&
           t0_w0 <= t0_flip && t0_flip <= 1.0;
  }

  void validate() const {
    if (!valid()) {
      throw ConfigError("invalid thresholds: need 0 <= t1_flip <= t1_w0 <= 1 and "
                        "0 <= t0_w0 <= t0_flip <= 1 (got t1_flip=" + std::to_string(t1_flip) +
                        ", t1_w0=" + std::to_string(t1_w0) + ", t0_w0=" +
                        std::to_string(t0_w0) + ", t0_flip=" + std::to_string(t0_flip) + ")");
    }
  }

  friend bool operator==(const ThresholdSet&, const ThresholdSet&) = default;
};

enum class LabelState : std::uint8_t { retain = 0, deactivate = 1, flip = 2 };

inline std::string_view to_string(LabelState s) {
  switch (s) {
    case LabelState::retain: return "retain";
    case LabelState::deactivate: return "deactivate";
    case LabelState::flip: return "flip";
  }
  return "retain";
}

struct EntryDecision {
  std::uint8_t label;
  std::uint8_t weight;
  LabelState state;

  friend bool operator==(const EntryDecision&, const EntryDecision&) = default;
};

constexpr EntryDecision decide(std::uint8_t y, double p, const ThresholdSet& t) noexcept {
  if (y == 1) {
    if (p < t.t1_flip) return {0, 1, LabelState::flip};
    if (p < t.t1_w0) return {1, 0, LabelState::deactivate};
    return {1, 1, LabelState::retain};
  }
  if (p > t.t0_flip) return {1, 1, LabelState::flip};
  if (p > t.t0_w0) return {0, 0, LabelState::deactivate};
  return {0, 1, LabelState::retain};
}

struct StateCounts {
  std::size_t retain = 0;
  std::size_t deactivate = 0;
  std::size_t flip = 0;

  std::size_t total() const noexcept { return retain + deactivate + flip; }

  StateCounts& operator+=(const StateCounts& o) noexcept {
    retain += o.retain;
    deactivate += o.deactivate;
    flip += o.flip;
    return *this;
  }

  friend bool operator==(const StateCounts&, const StateCounts&) = default;
};

// Per-entry corrected labels, binary loss weights and state tags.
class HandlingResult {
 public:
  HandlingResult() = default;

  // Every entry retained with its original label.
  static HandlingResult identity(const LabelMatrix& y) {
    HandlingResult h;
    h.rows_ = y.rows();
    h.cols_ = y.cols();
    h.corrected_.assign(y.entries().begin(), y.entries().end());
    h.weights_.assign(y.rows() * y.cols(), 1);
    h.states_.assign(y.rows() * y.cols(), LabelState::retain);
    return h;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::uint8_t corrected(std::size_t i, std::size_t c) const noexcept {
    return corrected_[i * cols_ + c];
  }
  std::uint8_t weight(std::size_t i, std::size_t c) const noexcept {
    return weights_[i * cols_ + c];
  }
  LabelState state(std::size_t i, std::size_t c) const noexcept { return states_[i * cols_ + c]; }

  void assign(std::size_t i, std::size_t c, EntryDecision d) noexcept {
    const auto k = i * cols_ + c;
    corrected_[k] = d.label;
    weights_[k] = d.weight;
    states_[k] = d.state;
  }

  std::size_t active_weight() const noexcept {
    std::size_t s = 0;
    for (auto w : weights_) s += w;
    return s;
  }

  StateCounts counts() const noexcept {
    StateCounts out;
    for (auto s : states_) {
      switch (s) {
        case LabelState::retain: ++out.retain; break;
        case LabelState::deactivate: ++out.deactivate; break;
        case LabelState::flip: ++out.flip; break;
      }
    }
    return out;
  }

  HandlingResult gather_rows(std::span<const std::size_t> indices) const {
    HandlingResult h;
    h.rows_ = indices.size();
    h.cols_ = cols_;
    h.corrected_.reserve(indices.size() * cols_);
    h.weights_.reserve(indices.size() * cols_);
    h.states_.reserve(indices.size() * cols_);
    for (auto idx : indices) {
      if (idx >= rows_) throw std::out_of_range("HandlingResult::gather_rows: index out of range");
      const auto off = static_cast<std::ptrdiff_t>(idx * cols_);
      const auto len = static_cast<std::ptrdiff_t>(cols_);
      h.corrected_.insert(h.corrected_.end(), corrected_.begin() + off,
                          corrected_.begin() + off + len);
      h.weights_.insert(h.weights_.end(), weights_.begin() + off, weights_.begin() + off + len);
      h.states_.insert(h.states_.end(), states_.begin() + off, states_.begin() + off + len);
    }
    return h;
  }

  friend bool operator==(const HandlingResult&, const HandlingResult&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> corrected_;
  std::vector<std::uint8_t> weights_;
  std::vector<LabelState> states_;
};

inline HandlingResult handle(const LabelMatrix& y, const Matrix& p, const ThresholdSet& t) {
  t.validate();
  if (p.rows() != y.rows() || p.cols() != y.cols()) {
    throw std::invalid_argument("handle: labels " + std::to_string(y.rows()) + "x" +
                                std::to_string(y.cols()) + " vs probabilities " +
                                p.shape_string());
  }
  HandlingResult h = HandlingResult::identity(y);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t c = 0; c < y.cols(); ++c) h.assign(i, c, decide(y(i, c), p(i, c), t));
  return h;
}

}  // namespace nar
