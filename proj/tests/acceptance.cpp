// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Tolerances and budgets are the constants below.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "test_support.hpp"

namespace {

using namespace nar;
using Clock = std::chrono::steady_clock;

constexpr double kC1BudgetSeconds = 5.0;
constexpr double kC2BudgetSeconds = 10.0;
constexpr double kC3Target = 0.20;
constexpr double kC3Tolerance = 0.02;
constexpr double kC4FiniteDifferenceStep = 1e-5;
constexpr double kC4MaxRelativeError = 1e-4;
constexpr double kC4BudgetSeconds = 30.0;
constexpr int kC4ConfigsPerLoss = 100;
constexpr double kC5BceCwTolerance = 1e-12;
constexpr double kC6Tolerance = 1e-12;
constexpr int kC6Cases = 1000;
constexpr double kC7MinIgnoreGainPoints = 2.0;
constexpr double kC7RunBudgetSeconds = 60.0;
constexpr double kC8MinMarginPoints = 2.0;
constexpr double kStudyRate = 0.4;
const std::vector<std::uint64_t> kStudySeeds{0, 1, 2};

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("[%s] criterion %d: %s -- %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fixed(double v, int digits = 4) { return io::format_fixed(v, digits); }

// The handler table written out as independent predicates.
struct TableCase {
  bool fires;
  EntryDecision out;
};

std::vector<TableCase> table_cases(std::uint8_t y, double p, const ThresholdSet& t) {
  return {
      {y == 1 && p < t.t1_flip, {0, 1, LabelState::flip}},
      {y == 1 && t.t1_flip <= p && p < t.t1_w0, {1, 0, LabelState::deactivate}},
      {y == 1 && p >= t.t1_w0, {1, 1, LabelState::retain}},
      {y == 0 && p > t.t0_flip, {1, 1, LabelState::flip}},
      {y == 0 && t.t0_w0 < p && p <= t.t0_flip, {0, 0, LabelState::deactivate}},
      {y == 0 && p <= t.t0_w0, {0, 1, LabelState::retain}},
  };
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::size_t checked = 0, bad = 0;
  for (int s = 0; s < 200; ++s) {
    double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform();
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    const ThresholdSet t{a, b, c, d};
    std::vector<double> ps;
    for (int k = 0; k <= 1000; ++k) ps.push_back(k / 1000.0);
    for (double edge : {a, b, c, d}) ps.push_back(edge);
    for (std::uint8_t y : {std::uint8_t{0}, std::uint8_t{1}}) {
      LabelMatrix ym(1, ps.size());
      for (std::size_t k = 0; k < ps.size(); ++k) ym.set(0, k, y);
      const auto h = handle(ym, Matrix(1, ps.size(), std::vector<double>(ps)), t);
      for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto cases = table_cases(y, ps[k], t);
        int fired = 0;
        EntryDecision expected{};
        for (const auto& tc : cases) {
          if (tc.fires) {
            ++fired;
            expected = tc.out;
          }
        }
        const auto got = decide(y, ps[k], t);
        const EntryDecision batched{h.corrected(0, k), h.weight(0, k), h.state(0, k)};
        ++checked;
        if (fired != 1 || got != expected || batched != expected) ++bad;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < kC1BudgetSeconds,
          std::to_string(checked) + " (y,p,thresholds) checks, " + std::to_string(bad) +
              " mismatches, " + fixed(secs, 2) + " s"};
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  Rng rng(202);
  std::size_t bad = 0, capped = 0, checks = 0;
  const double rates[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  for (int m = 0; m < 100; ++m) {
    const std::size_t n = 20 + rng.uniform_index(200);
    const std::size_t c = 1 + rng.uniform_index(12);
    const double density = m % 4 == 0 ? 0.7 : rng.uniform(0.05, 0.5);
    const auto clean = testing::random_labels(rng, n, c, density);
    for (double r : rates) {
      for (auto kind : {NoiseKind::additive, NoiseKind::subtractive, NoiseKind::mixed,
                        NoiseKind::uniform}) {
        const auto rec = inject(clean, {kind, r, rng.next_u64()});
        std::size_t total = 0;
        for (std::size_t k = 0; k < c; ++k) {
          std::size_t add = 0, sub = 0;
          for (std::size_t i = 0; i < n; ++i) {
            if (clean(i, k) == rec.noisy(i, k)) {
              if (rec.mask(i, k)) ++bad;
              continue;
            }
            if (!rec.mask(i, k)) ++bad;
            (clean(i, k) ? sub : add) += 1;
          }
          total += add + sub;
          if (kind == NoiseKind::uniform) continue;
          const std::size_t want = testing::round_half_up(r * static_cast<double>(clean.positives(k)));
          const std::size_t negatives = n - clean.positives(k);
          const std::size_t want_add = std::min(want, negatives);
          if (want_add < want) ++capped;
          const bool has_sub = kind != NoiseKind::additive;
          const bool has_add = kind != NoiseKind::subtractive;
          if (sub != (has_sub ? want : 0)) ++bad;
          if (add != (has_add ? want_add : 0)) ++bad;
          ++checks;
        }
        // Each flipped entry is a single mask cell, so add and sub counts
        // summing to the mask total means the two flip sets are disjoint.
        if (total != rec.total_flips()) ++bad;
        if (kind == NoiseKind::uniform &&
            total != testing::round_half_up(r * static_cast<double>(n * c)))
          ++bad;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && capped > 0 && secs < kC2BudgetSeconds,
          std::to_string(checks) + " per-class count checks, " + std::to_string(capped) +
              " capped additive demands, " + std::to_string(bad) + " mismatches, " +
              fixed(secs, 2) + " s"};
}

Outcome criterion3() {
  const auto splits = generate_synthetic(SyntheticSpec{});
  const auto& y = splits.train.labels;
  std::string detail;
  bool pass = true;
  for (double r : {0.1, 0.2, 0.4, 0.6}) {
    double share = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto rec = inject(y, {NoiseKind::uniform, r, seed});
      share += static_cast<double>(rec.total_subtractive()) / static_cast<double>(rec.total_flips());
    }
    share /= 10.0;
    pass = pass && std::abs(share - kC3Target) <= kC3Tolerance;
    detail += "r=" + fixed(r, 1) + ":" + fixed(share) + " ";
  }
  const double density =
      static_cast<double>(y.total_positives()) / static_cast<double>(y.rows() * y.cols());
  return {pass, "subtractive share " + detail + "(density " + fixed(density) + ")"};
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  Rng rng(404);
  const char* names[] = {"bce", "elr-ema", "elr-raw", "bce_cw", "nar"};
  std::string detail;
  bool pass = true;
  for (int which = 0; which < 5; ++which) {
    double worst = 0.0;
    int done = 0;
    while (done < kC4ConfigsPerLoss) {
      const std::size_t d = 2 + rng.uniform_index(4), h = 2 + rng.uniform_index(5),
                        c = 1 + rng.uniform_index(4), b = 1 + rng.uniform_index(6);
      ModelParams params = ModelParams::glorot(d, h, c, rng);
      for (double& v : params.b1.values()) v = rng.uniform(-0.3, 0.3);
      for (double& v : params.b2.values()) v = rng.uniform(-0.3, 0.3);
      const auto x = testing::random_matrix(rng, b, d, -1.5, 1.5);
      const auto pass_fwd = forward(params, x);
      if (testing::min_abs_pre_hidden(pass_fwd) < 1e-3) continue;
      const auto y = testing::random_labels(rng, b, c, 0.4);
      const double lambda = rng.uniform(0.05, 3.0);

      HandlingResult handling = HandlingResult::identity(y);
      if (which >= 3) {
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t k = 0; k < c; ++k) {
            const double u = rng.uniform();
            if (u < 0.25) handling.assign(i, k, {y(i, k), 0, LabelState::deactivate});
            else if (u < 0.4)
              handling.assign(i, k, {static_cast<std::uint8_t>(1 - y(i, k)), 1, LabelState::flip});
          }
      }
      Matrix target = which == 2 ? y.to_matrix() : testing::random_matrix(rng, b, c, 0.0, 1.0);
      if (which == 1 || which == 2) {
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t k = 0; k < c; ++k) handling.assign(i, k, {y(i, k), 0, LabelState::deactivate});
      }

      std::function<double(const ModelParams&)> loss;
      switch (which) {
        case 0: loss = [&](const ModelParams& p) { return bce(y, predict(p, x)); }; break;
        case 1:
        case 2: loss = [&](const ModelParams& p) { return elr_ml(target, predict(p, x), lambda); }; break;
        case 3: loss = [&](const ModelParams& p) { return bce_cw(handling, predict(p, x)); }; break;
        default:
          loss = [&](const ModelParams& p) {
            const Matrix pr = predict(p, x);
            return bce_cw(handling, pr) + elr_ml(target, pr, lambda);
          };
      }
      const double lam = (which == 0 || which == 3) ? 0.0 : lambda;
      const auto lg = nar_loss(handling, pass_fwd.probs, target, lam);
      const auto grads = backward(params, pass_fwd, lg.grad_logits);
      worst = std::max(worst, testing::max_gradient_error(params, grads, loss, kC4FiniteDifferenceStep));
      ++done;
    }
    pass = pass && worst <= kC4MaxRelativeError;
    detail += std::string(names[which]) + " max rel err " + io::format_double(worst) + "; ";
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < kC4BudgetSeconds;
  return {pass, std::to_string(5 * kC4ConfigsPerLoss) + " configurations: " + detail + fixed(secs, 2) + " s"};
}

Outcome criterion5() {
  const auto data = testing::tiny_splits(11, 400);
  TrainConfig bce_cfg = testing::tiny_train_config(Method::bce);
  bce_cfg.epochs = 5;
  bce_cfg.seed = 77;
  const auto ref = train(data.train, data.val, bce_cfg);
  bool identical = true;
  for (auto m : {Method::nar_no_elr, Method::nar_with_elr}) {
    TrainConfig cfg = bce_cfg;
    cfg.method = m;
    cfg.handler_warmup_epochs = 0;
    cfg.thresholds = ThresholdSet::all_retain();
    cfg.loss.lambda = 0.0;
    const auto r = train(data.train, data.val, cfg);
    identical = identical && r.log.step_losses == ref.log.step_losses && r.params == ref.params;
  }
  Rng rng(505);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.uniform_index(20), c = 1 + rng.uniform_index(8);
    const auto y = testing::random_labels(rng, n, c, rng.uniform());
    const auto p = testing::random_matrix(rng, n, c, 0.0, 1.0);
    worst = std::max(worst, std::abs(bce_cw(HandlingResult::identity(y), p) - bce(y, p)));
  }
  return {identical && worst <= kC5BceCwTolerance,
          std::string("step losses and parameters ") + (identical ? "bit-identical" : "DIFFER") +
              " over " + std::to_string(ref.log.step_losses.size()) +
              " steps; max |bce_cw - bce| = " + io::format_double(worst)};
}

Outcome criterion6() {
  Rng rng(606);
  double worst = 0.0;
  std::size_t mismatched_presence = 0;
  for (int i = 0; i < kC6Cases; ++i) {
    const std::size_t n = 1 + rng.uniform_index(60);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    const bool coarse = i % 2 == 0;
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = coarse ? static_cast<double>(rng.uniform_index(5)) / 4.0 : rng.uniform();
      y[k] = rng.bernoulli(0.35) ? 1 : 0;
    }
    const auto want = testing::brute_force_ap(s, y);
    const auto got = average_precision(s, y);
    if (want.has_value() != got.has_value()) {
      ++mismatched_presence;
      continue;
    }
    if (want) worst = std::max(worst, std::abs(*want - *got));
  }
  bool perfect = true;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + rng.uniform_index(50);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t k = 0; k < n; ++k) {
      y[k] = k == 0 || rng.bernoulli(0.4) ? 1 : 0;
      s[k] = y[k] ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.5);
    }
    perfect = perfect && *average_precision(s, y) == 1.0;
  }
  return {worst <= kC6Tolerance && mismatched_presence == 0 && perfect,
          std::to_string(kC6Cases) + " cases, max |AP - brute force| = " + io::format_double(worst) +
              ", perfect ranking " + (perfect ? "exactly 1.0" : "NOT 1.0")};
}

struct Studies {
  DataSplits data;
  TrainConfig base;
  SweepResult mixed;
  SweepResult bce_by_kind;
  OracleResult oracle;
  SensitivityResult low, high;
  double single_run_seconds = 0.0;
};

Studies run_studies() {
  const Config cfg;
  Studies s{resolve_splits(cfg), resolve_train_config(cfg), {}, {}, {}, {}, {}, 0.0};

  const auto t0 = Clock::now();
  auto probe = s.base;
  probe.seed = train_seed_for(0);
  train(s.data.train, s.data.val, probe);
  s.single_run_seconds = seconds_since(t0);

  ExperimentPlan plan;
  plan.methods = {Method::bce, Method::nar_no_elr, Method::nar_with_elr};
  plan.kinds = {NoiseKind::mixed};
  plan.rates = {kStudyRate};
  plan.seeds = kStudySeeds;
  for (auto m : plan.methods) plan.configs.emplace(m, resolve_train_config(cfg, m));
  s.mixed = run_sweep(plan, s.data);

  plan.methods = {Method::bce};
  plan.kinds = {NoiseKind::subtractive, NoiseKind::additive};
  s.bce_by_kind = run_sweep(plan, s.data);

  s.oracle = run_oracle({NoiseKind::subtractive, kStudyRate, kStudySeeds, 0}, s.data, s.base);

  const auto grid = cfg.get_double_list("plan.t0_w0_grid");
  s.low = run_sensitivity({NoiseKind::subtractive, 0.1, grid, {}, kStudySeeds, 0}, s.data, s.base);
  s.high = run_sensitivity({NoiseKind::subtractive, 0.6, grid, {}, kStudySeeds, 0}, s.data, s.base);
  return s;
}

Outcome criterion7(const Studies& s) {
  const auto sub = mean_map(s.bce_by_kind, Method::bce, NoiseKind::subtractive, kStudyRate);
  const auto add = mean_map(s.bce_by_kind, Method::bce, NoiseKind::additive, kStudyRate);
  const auto nn = s.oracle.mean(OracleStrategy::none, OracleStrategy::none);
  const auto in = s.oracle.mean(OracleStrategy::ignore, OracleStrategy::none);
  const auto ni = s.oracle.mean(OracleStrategy::none, OracleStrategy::ignore);
  const auto nf = s.oracle.mean(OracleStrategy::none, OracleStrategy::flip);
  if (!sub || !add || !nn || !in || !ni || !nf) return {false, "a study cell failed to train"};
  const bool a = *sub < *add;
  const double gain = 100.0 * (*in - *nn);
  const bool b = gain >= kC7MinIgnoreGainPoints;
  const bool c = *nf < *ni;
  const bool budget = s.single_run_seconds < kC7RunBudgetSeconds;
  return {a && b && c && budget,
          std::string("(a) BCE sub ") + fixed(*sub) + " < add " + fixed(*add) + (a ? " ok" : " NO") +
              "; (b) (ignore,none) " + fixed(*in) + " - (none,none) " + fixed(*nn) + " = " +
              fixed(gain, 2) + " pts" + (b ? " ok" : " NO") + "; (c) (none,flip) " + fixed(*nf) +
              " < (none,ignore) " + fixed(*ni) + (c ? " ok" : " NO") + "; one run " +
              fixed(s.single_run_seconds, 2) + " s"};
}

Outcome criterion8(const Studies& s) {
  const auto bce_m = mean_map(s.mixed, Method::bce, NoiseKind::mixed, kStudyRate);
  const auto no = mean_map(s.mixed, Method::nar_no_elr, NoiseKind::mixed, kStudyRate);
  const auto with = mean_map(s.mixed, Method::nar_with_elr, NoiseKind::mixed, kStudyRate);
  if (!bce_m || !no || !with) return {false, "a sweep cell failed to train"};
  const double margin = 100.0 * (*with - *bce_m);
  return {*with >= *no && *no >= *bce_m && margin >= kC8MinMarginPoints,
          "mixed 40%: nar_with_elr " + fixed(*with) + " >= nar_no_elr " + fixed(*no) +
              " >= bce " + fixed(*bce_m) + ", margin " + fixed(margin, 2) + " pts"};
}

Outcome criterion9(const Studies& s) {
  const double t1 = s.base.thresholds.t1_w0;
  const auto lo = s.low.argmax_t0_w0(t1);
  const auto hi = s.high.argmax_t0_w0(t1);
  if (!lo || !hi) return {false, "no successful grid point"};
  return {*hi <= *lo, "argmax t0_w0 at subtractive 0.6 = " + io::format_double(*hi) +
                          ", at 0.1 = " + io::format_double(*lo)};
}

Outcome criterion10() {
  Config cfg;
  cfg.set("train.epochs", "3");
  cfg.set("plan.rates", "0.2,0.4");
  cfg.set("plan.seeds", "0,1");
  cfg.set("plan.t0_w0_grid", "0.4,0.6");
  const auto data = resolve_splits(cfg);
  const auto base = resolve_train_config(cfg);
  const std::size_t many = std::max(2u, std::thread::hardware_concurrency());

  auto all_outputs = [&](std::size_t workers) {
    Config local = cfg;
    local.set("plan.workers", std::to_string(workers));
    const auto plan = resolve_plan(local);
    const auto sweep = run_sweep(plan, data);
    const auto uniform = run_uniform(plan, data);
    const auto oracle = run_oracle({NoiseKind::subtractive, 0.4, {0, 1}, workers}, data, base);
    const auto sens = run_sensitivity({NoiseKind::subtractive, 0.4, {0.4, 0.6}, {}, {0, 1}, workers},
                                      data, base);
    return std::vector<std::string>{results_csv(sweep),        summary_csv(sweep),
                                    manifest_csv(sweep),       results_csv(uniform),
                                    uniform_composition_csv(uniform), oracle_csv(oracle),
                                    oracle_summary_csv(oracle), sensitivity_csv(sens),
                                    sensitivity_summary_csv(sens)};
  };
  const auto first = all_outputs(1);
  const auto second = all_outputs(many);
  const auto third = all_outputs(1);
  std::size_t bytes = 0;
  for (const auto& f : first) bytes += f.size();
  const bool same = first == second && first == third;
  return {same, std::to_string(first.size()) + " CSV outputs (" + std::to_string(bytes) +
                    " bytes) " + (same ? "byte-identical" : "DIFFER") +
                    " across 3 runs with 1 and " + std::to_string(many) + " workers"};
}

}  // namespace

int main() {
  report(1, "label-handler truth table", criterion1());
  report(2, "noise-injection exactness", criterion2());
  report(3, "uniform-noise composition", criterion3());
  report(4, "gradient correctness", criterion4());
  report(5, "reduction identities", criterion5());
  report(6, "metric oracle", criterion6());
  const auto studies = run_studies();
  report(7, "oracle-study direction", criterion7(studies));
  report(8, "method-comparison direction", criterion8(studies));
  report(9, "sensitivity trend", criterion9(studies));
  report(10, "determinism", criterion10());
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
