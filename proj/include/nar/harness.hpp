#pragma once

// Experiment drivers: method/noise sweeps, the oracle label-handling study,
// threshold sensitivity grids and the uniform-noise study.
//
// Every driver enumerates its cells in a fixed plan order, runs them on a
// worker pool and merges the results back in plan order, so CSV output does
// not depend on scheduling. Each cell derives its own seeds from the run
// seed:
//   noise  derive_seed(seed, "noise.<kind>.<rate>")
//   train  derive_seed(seed, "train")
// Methods therefore see identical corruptions and initializations for a
// given (kind, rate, seed).

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nar/config.hpp"
#include "nar/dataset.hpp"
#include "nar/io.hpp"
#include "nar/label_handler.hpp"
#include "nar/metrics.hpp"
#include "nar/noise.hpp"
#include "nar/trainer.hpp"

namespace nar {

struct DataSplits {
  MultiLabelDataset train;
  MultiLabelDataset val;
  MultiLabelDataset test;
  std::string description;  // canonical data description, part of row hashes
};

inline DataSplits make_splits(const SyntheticSpec& spec) {
  auto s = generate_synthetic(spec);
  return {std::move(s.train), std::move(s.val), std::move(s.test), canonical_text(spec)};
}

inline DataSplits load_splits(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path base(dir);
  DataSplits d{load_dataset((base / "train.csv").string(), Split::train),
               load_dataset((base / "val.csv").string(), Split::val),
               load_dataset((base / "test.csv").string(), Split::test),
               "plan.data_dir=" + dir + '\n'};
  if (d.val.dim() != d.train.dim() || d.test.dim() != d.train.dim() ||
      d.val.num_classes() != d.train.num_classes() ||
      d.test.num_classes() != d.train.num_classes()) {
    throw FormatError(dir + ": train/val/test shapes disagree");
  }
  return d;
}

inline DataSplits resolve_splits(const Config& cfg) {
  const auto& dir = cfg.get("plan.data_dir");
  return dir.empty() ? make_splits(resolve_synthetic_spec(cfg)) : load_splits(dir);
}

inline std::uint64_t noise_seed_for(std::uint64_t seed, NoiseKind kind, double rate) {
  return derive_seed(seed, "noise." + std::string(to_string(kind)) + "." + io::format_double(rate));
}

inline std::uint64_t train_seed_for(std::uint64_t seed) { return derive_seed(seed, "train"); }

// Runs job(i) for i in [0, count) on `workers` threads; results in index order.
template <typename Result>
std::vector<Result> run_parallel(std::size_t count, std::size_t workers,
                                 const std::function<Result(std::size_t)>& job) {
  std::vector<std::optional<Result>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(job(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }
  std::vector<Result> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

struct ExperimentPlan {
  std::vector<Method> methods;
  std::vector<NoiseKind> kinds;
  std::vector<double> rates;
  std::vector<std::uint64_t> seeds;
  std::map<Method, TrainConfig> configs;  // resolved per method
  std::size_t workers = 0;

  void validate() const {
    if (methods.empty() || kinds.empty() || rates.empty() || seeds.empty()) {
      throw ConfigError("experiment plan needs non-empty methods, kinds, rates and seeds");
    }
    for (double r : rates) NoiseSpec{NoiseKind::mixed, r, 0}.validate();
    for (auto m : methods) {
      if (!configs.contains(m)) {
        throw ConfigError("no training configuration for method " + std::string(to_string(m)));
      }
      configs.at(m).validate();
    }
  }
};

inline ExperimentPlan resolve_plan(const Config& cfg) {
  ExperimentPlan plan;
  for (const auto& m : cfg.get_list("plan.methods")) plan.methods.push_back(parse_method(m));
  for (const auto& k : cfg.get_list("plan.kinds")) plan.kinds.push_back(parse_noise_kind(k));
  plan.rates = cfg.get_double_list("plan.rates");
  for (const auto& s : cfg.get_list("plan.seeds")) {
    const auto v = io::parse_u64(s);
    if (!v) throw ConfigError("plan.seeds: bad seed '" + s + "'");
    plan.seeds.push_back(*v);
  }
  for (auto m : plan.methods) plan.configs.emplace(m, resolve_train_config(cfg, m));
  plan.workers = cfg.get_u64("plan.workers");
  plan.validate();
  return plan;
}

struct ResultRow {
  Method method = Method::bce;
  NoiseKind kind = NoiseKind::mixed;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::optional<MetricsReport> metrics;  // empty when training failed
  std::string diagnostic;
  std::string config_hash;
  std::size_t flips = 0;
  std::size_t subtractive_flips = 0;
};

struct SweepResult {
  std::vector<ResultRow> rows;
  std::size_t classes = 0;
};

namespace detail {

inline ResultRow run_cell(const DataSplits& data, Method method, NoiseKind kind, double rate,
                          std::uint64_t seed, TrainConfig cfg) {
  ResultRow row{method, kind, rate, seed, std::nullopt, {}, {}, 0, 0};
  const NoiseSpec noise{kind, rate, noise_seed_for(seed, kind, rate)};
  cfg.seed = train_seed_for(seed);
  row.config_hash = fnv1a_hex(data.description + canonical_text(noise) + canonical_text(cfg));
  const auto rec = inject(data.train.labels, noise);
  row.flips = rec.total_flips();
  row.subtractive_flips = rec.total_subtractive();
  try {
    const auto trained = train(data.train.with_labels(rec.noisy), data.val, cfg);
    row.metrics = evaluate(trained.params, data.test);
  } catch (const TrainingError& e) {
    row.diagnostic = e.what();
  }
  return row;
}

}  // namespace detail

inline SweepResult run_sweep(const ExperimentPlan& plan, const DataSplits& data) {
  plan.validate();
  struct Cell {
    Method method;
    NoiseKind kind;
    double rate;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto m : plan.methods)
    for (auto k : plan.kinds)
      for (double r : plan.rates)
        for (auto s : plan.seeds) cells.push_back({m, k, r, s});
  auto rows = run_parallel<ResultRow>(cells.size(), plan.workers, [&](std::size_t i) {
    const auto& c = cells[i];
    return detail::run_cell(data, c.method, c.kind, c.rate, c.seed, plan.configs.at(c.method));
  });
  return {std::move(rows), data.train.num_classes()};
}

// Mean test mAP over the successful seeds of (method, kind, rate).
inline std::optional<double> mean_map(const SweepResult& r, Method m, NoiseKind k, double rate) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : r.rows) {
    if (row.method == m && row.kind == k && row.rate == rate && row.metrics) {
      sum += row.metrics->map_macro;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline std::string results_csv(const SweepResult& r) {
  std::string out = "method,noise_kind,noise_rate,seed,map_macro";
  for (std::size_t c = 0; c < r.classes; ++c) out += ",ap_class_" + std::to_string(c);
  out += '\n';
  for (const auto& row : r.rows) {
    out += std::string(to_string(row.method)) + ',' + std::string(to_string(row.kind)) + ',' +
           io::format_double(row.rate) + ',' + std::to_string(row.seed) + ',';
    if (row.metrics) {
      out += io::format_double(row.metrics->map_macro);
      for (const auto& ap : row.metrics->per_class_ap) {
        out += ',';
        if (ap) out += io::format_double(*ap);
      }
    } else {
      for (std::size_t c = 0; c < r.classes; ++c) out += ',';
    }
    out += '\n';
  }
  return out;
}

inline std::string summary_csv(const SweepResult& r) {
  std::string out = "method,noise_kind,noise_rate,n_seeds,mean_map_macro\n";
  std::vector<std::tuple<Method, NoiseKind, double>> seen;
  for (const auto& row : r.rows) {
    const auto key = std::make_tuple(row.method, row.kind, row.rate);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    std::size_t n = 0;
    for (const auto& other : r.rows)
      if (other.method == row.method && other.kind == row.kind && other.rate == row.rate &&
          other.metrics)
        ++n;
    const auto mean = mean_map(r, row.method, row.kind, row.rate);
    out += std::string(to_string(row.method)) + ',' + std::string(to_string(row.kind)) + ',' +
           io::format_double(row.rate) + ',' + std::to_string(n) + ',' +
           (mean ? io::format_double(*mean) : std::string()) + '\n';
  }
  return out;
}

// One line per result row: the hash of its fully resolved configuration and
// its status.
inline std::string manifest_csv(const SweepResult& r) {
  std::string out = "method,noise_kind,noise_rate,seed,config_hash,status,diagnostic\n";
  for (const auto& row : r.rows) {
    std::string diag = row.diagnostic;
    std::replace(diag.begin(), diag.end(), ',', ';');
    out += std::string(to_string(row.method)) + ',' + std::string(to_string(row.kind)) + ',' +
           io::format_double(row.rate) + ',' + std::to_string(row.seed) + ',' + row.config_hash +
           ',' + (row.metrics ? "ok" : "failed") + ',' + diag + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Uniform noise

inline SweepResult run_uniform(const ExperimentPlan& base_plan, const DataSplits& data) {
  ExperimentPlan plan = base_plan;
  plan.kinds = {NoiseKind::uniform};
  return run_sweep(plan, data);
}

// Subtractive share of uniform flips per (rate, seed). Each (rate, seed)
// pair is taken from the first method in the sweep.
inline std::string uniform_composition_csv(const SweepResult& r) {
  std::string out = "noise_rate,seed,flips,subtractive_flips,subtractive_share\n";
  if (r.rows.empty()) return out;
  const Method first = r.rows.front().method;
  for (const auto& row : r.rows) {
    if (row.method != first) continue;
    const double share = row.flips ? static_cast<double>(row.subtractive_flips) /
                                         static_cast<double>(row.flips)
                                   : 0.0;
    out += io::format_double(row.rate) + ',' + std::to_string(row.seed) + ',' +
           std::to_string(row.flips) + ',' + std::to_string(row.subtractive_flips) + ',' +
           io::format_double(share) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracle study

enum class OracleStrategy { none, ignore, flip };

inline std::string_view to_string(OracleStrategy s) {
  switch (s) {
    case OracleStrategy::none: return "none";
    case OracleStrategy::ignore: return "ignore";
    case OracleStrategy::flip: return "flip";
  }
  return "none";
}

inline constexpr OracleStrategy kOracleStrategies[] = {OracleStrategy::none, OracleStrategy::ignore,
                                                       OracleStrategy::flip};

struct OracleConfig {
  NoiseKind kind = NoiseKind::subtractive;
  double rate = 0.4;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t workers = 0;

  void validate() const {
    if (kind != NoiseKind::additive && kind != NoiseKind::subtractive) {
      throw ConfigError("oracle study needs additive or subtractive noise");
    }
    NoiseSpec{kind, rate, 0}.validate();
    if (seeds.empty()) throw ConfigError("oracle study needs at least one seed");
  }
};

// Per class, the k_c clean entries most likely to be mistaken for noise,
// where k_c is that class's oracle flip count. Subtractive noise: clean
// positives with the lowest p. Additive: clean negatives with the highest p.
// Ties go to the lower sample index.
inline LabelMatrix uncertain_clean_set(const CorruptionRecord& rec, const LabelMatrix& clean,
                                       const Matrix& p, NoiseKind kind) {
  LabelMatrix selected(clean.rows(), clean.cols());
  const std::uint8_t wanted = kind == NoiseKind::subtractive ? 1 : 0;
  for (std::size_t c = 0; c < clean.cols(); ++c) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < clean.rows(); ++i)
      if (!rec.mask(i, c) && clean(i, c) == wanted) candidates.push_back(i);
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
      return wanted ? p(a, c) < p(b, c) : p(a, c) > p(b, c);
    });
    const std::size_t k = std::min(rec.mask.positives(c), candidates.size());
    for (std::size_t j = 0; j < k; ++j) selected.set(candidates[j], c, 1);
  }
  return selected;
}

inline HandlingResult oracle_handling(const LabelMatrix& noisy, const LabelMatrix& oracle_set,
                                      OracleStrategy on_oracle, const LabelMatrix& uncertain_set,
                                      OracleStrategy on_uncertain) {
  HandlingResult h = HandlingResult::identity(noisy);
  auto apply = [&](std::size_t i, std::size_t c, OracleStrategy s) {
    const std::uint8_t y = noisy(i, c);
    switch (s) {
      case OracleStrategy::none: break;
      case OracleStrategy::ignore: h.assign(i, c, {y, 0, LabelState::deactivate}); break;
      case OracleStrategy::flip:
        h.assign(i, c, {static_cast<std::uint8_t>(1 - y), 1, LabelState::flip});
        break;
    }
  };
  for (std::size_t i = 0; i < noisy.rows(); ++i) {
    for (std::size_t c = 0; c < noisy.cols(); ++c) {
      if (oracle_set(i, c)) {
        apply(i, c, on_oracle);
      } else if (uncertain_set(i, c)) {
        apply(i, c, on_uncertain);
      }
    }
  }
  return h;
}

struct OracleRow {
  OracleStrategy oracle = OracleStrategy::none;
  OracleStrategy uncertain = OracleStrategy::none;
  std::uint64_t seed = 0;
  std::optional<double> map_macro;
  std::string diagnostic;
};

struct OracleResult {
  std::vector<OracleRow> rows;  // seed-major, then oracle strategy, then uncertain strategy

  std::optional<double> mean(OracleStrategy oracle, OracleStrategy uncertain) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.oracle == oracle && r.uncertain == uncertain && r.map_macro) {
        sum += *r.map_macro;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

// `base` supplies the training hyperparameters; every cell trains with the
// BCE method and a static handling fixed up front. The uncertainty ranking
// comes from a BCE reference model trained on the same noisy labels.
inline OracleResult run_oracle(const OracleConfig& oc, const DataSplits& data, TrainConfig base) {
  oc.validate();
  base.method = Method::bce;
  base.validate();

  struct Prepared {
    LabelMatrix noisy;
    LabelMatrix oracle_set;
    LabelMatrix uncertain_set;
  };
  auto prepared = run_parallel<Prepared>(oc.seeds.size(), oc.workers, [&](std::size_t i) {
    const auto seed = oc.seeds[i];
    const auto rec = inject(data.train.labels, {oc.kind, oc.rate, noise_seed_for(seed, oc.kind, oc.rate)});
    TrainConfig ref = base;
    ref.seed = train_seed_for(seed);
    const auto reference = train(data.train.with_labels(rec.noisy), data.val, ref);
    const Matrix p = predict(reference.params, data.train.features);
    return Prepared{rec.noisy, rec.mask, uncertain_clean_set(rec, data.train.labels, p, oc.kind)};
  });

  const std::size_t per_seed = 9;
  auto rows = run_parallel<OracleRow>(oc.seeds.size() * per_seed, oc.workers, [&](std::size_t i) {
    const std::size_t s = i / per_seed;
    const auto on_oracle = kOracleStrategies[(i % per_seed) / 3];
    const auto on_uncertain = kOracleStrategies[i % 3];
    const auto& prep = prepared[s];
    OracleRow row{on_oracle, on_uncertain, oc.seeds[s], std::nullopt, {}};
    TrainConfig cfg = base;
    cfg.seed = train_seed_for(oc.seeds[s]);
    const auto handling = oracle_handling(prep.noisy, prep.oracle_set, on_oracle,
                                          prep.uncertain_set, on_uncertain);
    try {
      const auto trained =
          train_with_fixed_handling(data.train.with_labels(prep.noisy), data.val, cfg, handling);
      row.map_macro = evaluate(trained.params, data.test).map_macro;
    } catch (const TrainingError& e) {
      row.diagnostic = e.what();
    }
    return row;
  });
  return {std::move(rows)};
}

inline std::string oracle_csv(const OracleResult& r) {
  std::string out = "oracle_strategy,uncertain_strategy,seed,map_macro\n";
  for (const auto& row : r.rows) {
    out += std::string(to_string(row.oracle)) + ',' + std::string(to_string(row.uncertain)) +
           ',' + std::to_string(row.seed) + ',' +
           (row.map_macro ? io::format_double(*row.map_macro) : std::string()) + '\n';
  }
  return out;
}

inline std::string oracle_summary_csv(const OracleResult& r) {
  std::string out = "oracle_strategy,uncertain_strategy,mean_map_macro\n";
  for (auto a : kOracleStrategies) {
    for (auto b : kOracleStrategies) {
      const auto m = r.mean(a, b);
      out += std::string(to_string(a)) + ',' + std::string(to_string(b)) + ',' +
             (m ? io::format_double(*m) : std::string()) + '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Threshold sensitivity

struct SensitivityPlan {
  NoiseKind kind = NoiseKind::subtractive;
  double rate = 0.4;
  std::vector<double> t0_w0_grid;
  std::vector<double> t1_w0_grid;  // empty: keep the base value
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t workers = 0;
};

struct SensitivityRow {
  double t0_w0 = 0.0;
  double t1_w0 = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> map_macro;
  std::string status;  // "ok", "skipped: ...", "failed: ..."
};

struct SensitivityResult {
  NoiseKind kind = NoiseKind::subtractive;
  double rate = 0.0;
  std::vector<SensitivityRow> rows;  // t0_w0-major, then t1_w0, then seed

  std::optional<double> mean(double t0_w0, double t1_w0) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r.t0_w0 == t0_w0 && r.t1_w0 == t1_w0 && r.map_macro) {
        sum += *r.map_macro;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }

  // t0_w0 with the highest seed-averaged mAP for a fixed t1_w0; the first
  // grid value wins ties.
  std::optional<double> argmax_t0_w0(double t1_w0) const {
    std::optional<double> best_t, best_m;
    for (const auto& r : rows) {
      if (r.t1_w0 != t1_w0) continue;
      const auto m = mean(r.t0_w0, t1_w0);
      if (m && (!best_m || *m > *best_m)) {
        best_m = m;
        best_t = r.t0_w0;
      }
    }
    return best_t;
  }
};

inline SensitivityResult run_sensitivity(const SensitivityPlan& sp, const DataSplits& data,
                                         TrainConfig base) {
  NoiseSpec{sp.kind, sp.rate, 0}.validate();
  if (sp.t0_w0_grid.empty() || sp.seeds.empty()) {
    throw ConfigError("sensitivity plan needs a t0_w0 grid and seeds");
  }
  if (!uses_handler(base.method)) base.method = Method::nar_with_elr;
  const std::vector<double> t1_grid =
      sp.t1_w0_grid.empty() ? std::vector<double>{base.thresholds.t1_w0} : sp.t1_w0_grid;

  struct Cell {
    double t0;
    double t1;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double t0 : sp.t0_w0_grid)
    for (double t1 : t1_grid)
      for (auto s : sp.seeds) cells.push_back({t0, t1, s});

  auto rows = run_parallel<SensitivityRow>(cells.size(), sp.workers, [&](std::size_t i) {
    const auto& c = cells[i];
    SensitivityRow row{c.t0, c.t1, c.seed, std::nullopt, "ok"};
    TrainConfig cfg = base;
    cfg.thresholds.t0_w0 = c.t0;
    cfg.thresholds.t1_w0 = c.t1;
    if (!cfg.thresholds.valid()) {
      row.status = "skipped: threshold ordering violated";
      return row;
    }
    cfg.seed = train_seed_for(c.seed);
    const auto rec = inject(data.train.labels, {sp.kind, sp.rate, noise_seed_for(c.seed, sp.kind, sp.rate)});
    try {
      const auto trained = train(data.train.with_labels(rec.noisy), data.val, cfg);
      row.map_macro = evaluate(trained.params, data.test).map_macro;
    } catch (const TrainingError& e) {
      row.status = std::string("failed: ") + e.what();
      std::replace(row.status.begin(), row.status.end(), ',', ';');
    }
    return row;
  });
  return {sp.kind, sp.rate, std::move(rows)};
}

inline std::string sensitivity_csv(const SensitivityResult& r) {
  std::string out = "noise_kind,noise_rate,t0_w0,t1_w0,seed,map_macro,status\n";
  for (const auto& row : r.rows) {
    out += std::string(to_string(r.kind)) + ',' + io::format_double(r.rate) + ',' +
           io::format_double(row.t0_w0) + ',' + io::format_double(row.t1_w0) + ',' +
           std::to_string(row.seed) + ',' +
           (row.map_macro ? io::format_double(*row.map_macro) : std::string()) + ',' +
           row.status + '\n';
  }
  return out;
}

inline std::string sensitivity_summary_csv(const SensitivityResult& r) {
  std::string out = "noise_kind,noise_rate,t0_w0,t1_w0,mean_map_macro\n";
  std::vector<std::pair<double, double>> seen;
  for (const auto& row : r.rows) {
    const auto key = std::make_pair(row.t0_w0, row.t1_w0);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    const auto m = r.mean(row.t0_w0, row.t1_w0);
    out += std::string(to_string(r.kind)) + ',' + io::format_double(r.rate) + ',' +
           io::format_double(row.t0_w0) + ',' + io::format_double(row.t1_w0) + ',' +
           (m ? io::format_double(*m) : std::string()) + '\n';
  }
  return out;
}

}  // namespace nar
