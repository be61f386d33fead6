#pragma once

// Controlled label-noise injection.
//
// Additive and subtractive noise are normalized per class by the number of
// present entries n_c: exactly round(r * n_c) entries of class c are flipped
// (0 -> 1 for additive, 1 -> 0 for subtractive). Mixed noise applies both at
// rate r on disjoint entries. Uniform noise flips round(r * N * C) entries
// drawn over the whole matrix regardless of their value.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nar/dataset.hpp"
#include "nar/error.hpp"
#include "nar/numerics.hpp"

namespace nar {

enum class NoiseKind { additive, subtractive, mixed, uniform };

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::additive: return "additive";
    case NoiseKind::subtractive: return "subtractive";
    case NoiseKind::mixed: return "mixed";
    case NoiseKind::uniform: return "uniform";
  }
  return "additive";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "additive") return NoiseKind::additive;
  if (s == "subtractive") return NoiseKind::subtractive;
  if (s == "mixed") return NoiseKind::mixed;
  if (s == "uniform") return NoiseKind::uniform;
  throw ConfigError("unknown noise kind '" + std::string(s) + "'");
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::mixed;
  double rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(rate >= 0.0 && rate <= 1.0)) {
      throw ConfigError("noise rate must lie in [0, 1], got " + std::to_string(rate));
    }
  }
};

// round-half-away-from-zero of r * n.
inline std::size_t flip_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}

struct CorruptionRecord {
  LabelMatrix noisy;
  LabelMatrix mask;  // 1 where noisy differs from clean
  std::vector<std::size_t> additive_flips;     // per class, 0 -> 1
  std::vector<std::size_t> subtractive_flips;  // per class, 1 -> 0
  std::vector<std::string> warnings;

  std::size_t total_flips() const { return mask.total_positives(); }
  std::size_t total_subtractive() const {
    std::size_t s = 0;
    for (auto v : subtractive_flips) s += v;
    return s;
  }
};

namespace detail {

inline void apply_flip(CorruptionRecord& rec, const LabelMatrix& clean, std::size_t i,
                       std::size_t c) {
  rec.noisy.flip(i, c);
  rec.mask.set(i, c, 1);
  if (clean(i, c)) {
    ++rec.subtractive_flips[c];
  } else {
    ++rec.additive_flips[c];
  }
}

inline void inject_subtractive(CorruptionRecord& rec, const LabelMatrix& clean, double rate,
                               Rng& rng) {
  for (std::size_t c = 0; c < clean.cols(); ++c) {
    std::vector<std::size_t> positives;
    for (std::size_t i = 0; i < clean.rows(); ++i)
      if (clean(i, c) && !rec.mask(i, c)) positives.push_back(i);
    const std::size_t k = flip_count(rate, clean.positives(c));
    for (auto i : rng.sample_without_replacement(std::move(positives), k))
      apply_flip(rec, clean, i, c);
  }
}

inline void inject_additive(CorruptionRecord& rec, const LabelMatrix& clean, double rate,
                            Rng& rng) {
  for (std::size_t c = 0; c < clean.cols(); ++c) {
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < clean.rows(); ++i)
      if (!clean(i, c) && !rec.mask(i, c)) negatives.push_back(i);
    std::size_t k = flip_count(rate, clean.positives(c));
    if (k > negatives.size()) {
      rec.warnings.push_back("class " + std::to_string(c) + ": additive demand " +
                             std::to_string(k) + " capped at " +
                             std::to_string(negatives.size()) + " available negatives");
      k = negatives.size();
    }
    for (auto i : rng.sample_without_replacement(std::move(negatives), k))
      apply_flip(rec, clean, i, c);
  }
}

}  // namespace detail

inline CorruptionRecord inject(const LabelMatrix& clean, const NoiseSpec& spec) {
  spec.validate();
  CorruptionRecord rec{clean,
                       LabelMatrix(clean.rows(), clean.cols()),
                       std::vector<std::size_t>(clean.cols(), 0),
                       std::vector<std::size_t>(clean.cols(), 0),
                       {}};
  Rng rng = Rng(spec.seed).child("noise.inject");
  switch (spec.kind) {
    case NoiseKind::subtractive:
      detail::inject_subtractive(rec, clean, spec.rate, rng);
      break;
    case NoiseKind::additive:
      detail::inject_additive(rec, clean, spec.rate, rng);
      break;
    case NoiseKind::mixed:
      detail::inject_subtractive(rec, clean, spec.rate, rng);
      detail::inject_additive(rec, clean, spec.rate, rng);
      break;
    case NoiseKind::uniform: {
      const std::size_t total = clean.rows() * clean.cols();
      std::vector<std::size_t> cells(total);
      for (std::size_t k = 0; k < total; ++k) cells[k] = k;
      for (auto k : rng.sample_without_replacement(std::move(cells), flip_count(spec.rate, total)))
        detail::apply_flip(rec, clean, k / clean.cols(), k % clean.cols());
      break;
    }
  }
  return rec;
}

struct NoiseAudit {
  std::vector<std::size_t> additive_counts;
  std::vector<std::size_t> subtractive_counts;
  std::vector<double> additive_rates;     // additive count / n_c
  std::vector<double> subtractive_rates;  // subtractive count / n_c
};

// Flip statistics of `noisy` relative to `clean`, normalized by the clean
// per-class positive count (0 for classes without positives).
inline NoiseAudit audit(const LabelMatrix& clean, const LabelMatrix& noisy) {
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols()) {
    throw std::invalid_argument("audit: shape mismatch " + std::to_string(clean.rows()) + "x" +
                                std::to_string(clean.cols()) + " vs " +
                                std::to_string(noisy.rows()) + "x" +
                                std::to_string(noisy.cols()));
  }
  const std::size_t cols = clean.cols();
  NoiseAudit a{std::vector<std::size_t>(cols, 0), std::vector<std::size_t>(cols, 0),
               std::vector<double>(cols, 0.0), std::vector<double>(cols, 0.0)};
  for (std::size_t i = 0; i < clean.rows(); ++i) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (clean(i, c) == noisy(i, c)) continue;
      if (clean(i, c)) {
        ++a.subtractive_counts[c];
      } else {
        ++a.additive_counts[c];
      }
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    const auto n_c = static_cast<double>(clean.positives(c));
    if (n_c > 0) {
      a.additive_rates[c] = static_cast<double>(a.additive_counts[c]) / n_c;
      a.subtractive_rates[c] = static_cast<double>(a.subtractive_counts[c]) / n_c;
    }
  }
  return a;
}

}  // namespace nar
