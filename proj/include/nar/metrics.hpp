#pragma once

// Ranking-based average precision and its macro mean over classes.
//
// AP = (1/P) * sum over the ranks k of positive samples of precision@k, with
// samples sorted by descending score and ties broken by ascending index.
// Classes without positives are skipped rather than scored.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nar/dataset.hpp"
#include "nar/error.hpp"
#include "nar/numerics.hpp"

namespace nar {

inline std::optional<double> average_precision(std::span<const double> scores,
                                               std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("average_precision: " + std::to_string(scores.size()) +
                                " scores vs " + std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return acc / static_cast<double>(hits);
}

struct MetricsReport {
  std::vector<std::optional<double>> per_class_ap;  // nullopt for skipped classes
  double map_macro = 0.0;
  std::vector<std::size_t> skipped_classes;
};

inline MetricsReport map_macro(const Matrix& p, const LabelMatrix& labels) {
  if (p.rows() != labels.rows() || p.cols() != labels.cols()) {
    throw std::invalid_argument("map_macro: probabilities " + p.shape_string() + " vs labels " +
                                std::to_string(labels.rows()) + "x" +
                                std::to_string(labels.cols()));
  }
  MetricsReport report;
  report.per_class_ap.reserve(p.cols());
  std::vector<double> column(p.rows());
  double sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t c = 0; c < p.cols(); ++c) {
    for (std::size_t i = 0; i < p.rows(); ++i) column[i] = p(i, c);
    const auto y = labels.column(c);
    auto ap = average_precision(column, y);
    if (ap) {
      sum += *ap;
      ++scored;
    } else {
      report.skipped_classes.push_back(c);
    }
    report.per_class_ap.push_back(ap);
  }
  if (scored == 0) throw std::invalid_argument("map_macro: every class has zero positives");
  report.map_macro = sum / static_cast<double>(scored);
  return report;
}

}  // namespace nar
