#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "test_support.hpp"

namespace nar {
namespace {

class HarnessTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { data_ = new DataSplits(testing::tiny_splits(3, 250)); }
  static void TearDownTestSuite() {
    delete data_;
    data_ = nullptr;
  }

  static ExperimentPlan small_plan(std::size_t workers) {
    ExperimentPlan plan;
    plan.methods = {Method::bce, Method::nar_with_elr};
    plan.kinds = {NoiseKind::subtractive, NoiseKind::additive};
    plan.rates = {0.0, 0.3};
    plan.seeds = {0, 1};
    plan.workers = workers;
    for (auto m : plan.methods) {
      auto cfg = testing::tiny_train_config(m);
      cfg.epochs = 2;
      plan.configs.emplace(m, cfg);
    }
    return plan;
  }

  static DataSplits* data_;
};

DataSplits* HarnessTest::data_ = nullptr;

TEST(RunParallel, ResultsInIndexOrder) {
  const auto out = run_parallel<std::size_t>(50, 4, [](std::size_t i) { return i * i; });
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(out[i], i * i);
  EXPECT_TRUE(run_parallel<int>(0, 3, [](std::size_t) { return 1; }).empty());
}

TEST(RunParallel, PropagatesErrors) {
  EXPECT_THROW(run_parallel<int>(10, 3,
                                 [](std::size_t i) -> int {
                                   if (i == 7) throw std::runtime_error("boom");
                                   return 0;
                                 }),
               std::runtime_error);
}

TEST_F(HarnessTest, SweepCardinalityOrderAndDeterminism) {
  const auto a = run_sweep(small_plan(1), *data_);
  const auto b = run_sweep(small_plan(3), *data_);
  ASSERT_EQ(a.rows.size(), 16u);
  EXPECT_EQ(a.rows[0].method, Method::bce);
  EXPECT_EQ(a.rows[15].method, Method::nar_with_elr);
  EXPECT_EQ(a.rows[1].seed, 1u);
  EXPECT_EQ(a.rows[2].rate, 0.3);
  EXPECT_EQ(results_csv(a), results_csv(b));
  EXPECT_EQ(summary_csv(a), summary_csv(b));
  EXPECT_EQ(manifest_csv(a), manifest_csv(b));
  const auto csv = results_csv(a);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "method,noise_kind,noise_rate,seed,map_macro,ap_class_0,ap_class_1,ap_class_2,"
            "ap_class_3");
}

TEST_F(HarnessTest, MethodsShareCorruptionsAndRateZeroFlipsNothing) {
  const auto r = run_sweep(small_plan(0), *data_);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(r.rows[i].flips, r.rows[i + 8].flips);
    if (r.rows[i].rate == 0.0) {
      EXPECT_EQ(r.rows[i].flips, 0u);
    }
    EXPECT_TRUE(r.rows[i].metrics.has_value());
  }
  std::set<std::string> hashes;
  for (const auto& row : r.rows) hashes.insert(row.config_hash);
  EXPECT_EQ(hashes.size(), r.rows.size());
}

TEST_F(HarnessTest, FailedCellsAreRecordedAndTheSweepContinues) {
  auto plan = small_plan(2);
  plan.configs[Method::nar_with_elr].learning_rate = 1e300;
  plan.configs[Method::nar_with_elr].warmup_steps = 1;
  const auto r = run_sweep(plan, *data_);
  ASSERT_EQ(r.rows.size(), 16u);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.metrics.has_value(), row.method == Method::bce);
    if (!row.metrics) {
      EXPECT_NE(row.diagnostic.find("non-finite"), std::string::npos);
    }
  }
  EXPECT_NE(manifest_csv(r).find(",failed,"), std::string::npos);
  EXPECT_FALSE(mean_map(r, Method::nar_with_elr, NoiseKind::additive, 0.3).has_value());
}

TEST_F(HarnessTest, EmptyPlanIsRejected) {
  auto plan = small_plan(1);
  plan.seeds.clear();
  EXPECT_THROW(run_sweep(plan, *data_), ConfigError);
}

TEST_F(HarnessTest, UncertainSetSizeAndDisjointness) {
  const auto& clean = data_->train.labels;
  for (auto kind : {NoiseKind::subtractive, NoiseKind::additive}) {
    const auto rec = inject(clean, {kind, 0.4, 5});
    Rng rng(1);
    const auto p = testing::random_matrix(rng, clean.rows(), clean.cols(), 0, 1);
    const auto u = uncertain_clean_set(rec, clean, p, kind);
    for (std::size_t c = 0; c < clean.cols(); ++c) {
      EXPECT_EQ(u.positives(c), rec.mask.positives(c));
      double worst_selected = kind == NoiseKind::subtractive ? 0.0 : 1.0;
      double best_unselected = kind == NoiseKind::subtractive ? 1.0 : 0.0;
      for (std::size_t i = 0; i < clean.rows(); ++i) {
        if (u(i, c)) {
          EXPECT_EQ(rec.mask(i, c), 0);
          EXPECT_EQ(clean(i, c), kind == NoiseKind::subtractive ? 1 : 0);
        }
        const bool candidate =
            !rec.mask(i, c) && clean(i, c) == (kind == NoiseKind::subtractive ? 1 : 0);
        if (!candidate) continue;
        if (kind == NoiseKind::subtractive) {
          if (u(i, c)) worst_selected = std::max(worst_selected, p(i, c));
          else best_unselected = std::min(best_unselected, p(i, c));
        } else {
          if (u(i, c)) worst_selected = std::min(worst_selected, p(i, c));
          else best_unselected = std::max(best_unselected, p(i, c));
        }
      }
      if (kind == NoiseKind::subtractive) EXPECT_LE(worst_selected, best_unselected);
      else EXPECT_GE(worst_selected, best_unselected);
    }
  }
}

TEST_F(HarnessTest, OracleHandlingStrategies) {
  LabelMatrix noisy(2, 2, {1, 0, 0, 1});
  LabelMatrix oracle(2, 2, {1, 0, 0, 0});
  LabelMatrix uncertain(2, 2, {0, 0, 0, 1});
  const auto h = oracle_handling(noisy, oracle, OracleStrategy::ignore, uncertain,
                                 OracleStrategy::flip);
  EXPECT_EQ(h.weight(0, 0), 0);
  EXPECT_EQ(h.corrected(0, 0), 1);
  EXPECT_EQ(h.corrected(1, 1), 0);
  EXPECT_EQ(h.weight(1, 1), 1);
  EXPECT_EQ(h.state(0, 1), LabelState::retain);
  EXPECT_EQ(oracle_handling(noisy, oracle, OracleStrategy::none, uncertain, OracleStrategy::none),
            HandlingResult::identity(noisy));
}

TEST_F(HarnessTest, OracleNoneNoneIsPlainBce) {
  auto base = testing::tiny_train_config(Method::bce);
  base.epochs = 2;
  const OracleConfig oc{NoiseKind::subtractive, 0.4, {4}, 2};
  const auto r = run_oracle(oc, *data_, base);
  ASSERT_EQ(r.rows.size(), 9u);
  EXPECT_EQ(r.rows[0].oracle, OracleStrategy::none);
  EXPECT_EQ(r.rows[0].uncertain, OracleStrategy::none);
  EXPECT_EQ(r.rows[5].oracle, OracleStrategy::ignore);
  EXPECT_EQ(r.rows[5].uncertain, OracleStrategy::flip);

  const auto rec = inject(data_->train.labels,
                          {NoiseKind::subtractive, 0.4, noise_seed_for(4, NoiseKind::subtractive, 0.4)});
  auto cfg = base;
  cfg.seed = train_seed_for(4);
  const auto plain = train(data_->train.with_labels(rec.noisy), data_->val, cfg);
  EXPECT_EQ(*r.rows[0].map_macro, evaluate(plain.params, data_->test).map_macro);
  EXPECT_EQ(oracle_csv(r), oracle_csv(run_oracle(oc, *data_, base)));
  EXPECT_THROW(run_oracle({NoiseKind::mixed, 0.4, {0}, 1}, *data_, base), ConfigError);
}

TEST_F(HarnessTest, SensitivitySinglePointIsPlainNar) {
  auto base = testing::tiny_train_config(Method::nar_with_elr);
  base.epochs = 2;
  const SensitivityPlan sp{NoiseKind::subtractive, 0.3, {0.6}, {}, {2}, 1};
  const auto r = run_sensitivity(sp, *data_, base);
  ASSERT_EQ(r.rows.size(), 1u);
  auto cfg = base;
  cfg.thresholds.t0_w0 = 0.6;
  cfg.seed = train_seed_for(2);
  const auto rec = inject(data_->train.labels,
                          {NoiseKind::subtractive, 0.3, noise_seed_for(2, NoiseKind::subtractive, 0.3)});
  const auto plain = train(data_->train.with_labels(rec.noisy), data_->val, cfg);
  EXPECT_EQ(*r.rows[0].map_macro, evaluate(plain.params, data_->test).map_macro);
}

TEST_F(HarnessTest, SensitivityAllRetainPointReproducesBce) {
  auto base = testing::tiny_train_config(Method::nar_no_elr);
  base.epochs = 2;
  base.handler_warmup_epochs = 0;
  base.thresholds = {0.0, 0.0, 1.0, 1.0};
  const SensitivityPlan sp{NoiseKind::additive, 0.3, {1.0}, {0.0}, {1}, 1};
  const auto r = run_sensitivity(sp, *data_, base);

  ExperimentPlan plan;
  plan.methods = {Method::bce};
  plan.kinds = {NoiseKind::additive};
  plan.rates = {0.3};
  plan.seeds = {1};
  auto bce_cfg = base;
  bce_cfg.method = Method::bce;
  plan.configs.emplace(Method::bce, bce_cfg);
  const auto sweep = run_sweep(plan, *data_);
  EXPECT_EQ(*r.rows[0].map_macro, sweep.rows[0].metrics->map_macro);
}

TEST_F(HarnessTest, SensitivitySkipsInvalidPointsAndFindsArgmax) {
  auto base = testing::tiny_train_config(Method::nar_with_elr);
  base.epochs = 2;
  const SensitivityPlan sp{NoiseKind::subtractive, 0.3, {0.3, 0.95}, {}, {0}, 2};
  const auto r = run_sensitivity(sp, *data_, base);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[1].status.rfind("skipped", 0), 0u);
  EXPECT_FALSE(r.rows[1].map_macro.has_value());
  EXPECT_EQ(*r.argmax_t0_w0(base.thresholds.t1_w0), 0.3);

  SensitivityResult tie;
  tie.rows = {{0.3, 0.2, 0, 0.8, "ok"}, {0.4, 0.2, 0, 0.8, "ok"}, {0.5, 0.2, 0, 0.7, "ok"}};
  EXPECT_EQ(*tie.argmax_t0_w0(0.2), 0.3);
}

TEST_F(HarnessTest, UniformCompositionTracksDensity) {
  auto plan = small_plan(2);
  plan.methods = {Method::bce};
  plan.rates = {0.3};
  plan.configs.erase(Method::nar_with_elr);
  const auto r = run_uniform(plan, *data_);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].kind, NoiseKind::uniform);
  const auto csv = uniform_composition_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "noise_rate,seed,flips,subtractive_flips,subtractive_share");
  const std::size_t cells = data_->train.size() * data_->train.num_classes();
  EXPECT_EQ(r.rows[0].flips, testing::round_half_up(0.3 * static_cast<double>(cells)));
}

TEST_F(HarnessTest, LoadSplitsFromDirectory) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "nar_harness_splits";
  fs::create_directories(dir);
  save_dataset(data_->train, (dir / "train.csv").string());
  save_dataset(data_->val, (dir / "val.csv").string());
  save_dataset(data_->test, (dir / "test.csv").string());
  Config cfg;
  cfg.set("plan.data_dir", dir.string());
  const auto loaded = resolve_splits(cfg);
  EXPECT_EQ(loaded.train, data_->train);
  EXPECT_EQ(loaded.test.labels, data_->test.labels);
  fs::remove(dir / "val.csv");
  EXPECT_THROW(resolve_splits(cfg), std::runtime_error);
  fs::remove_all(dir);
}

TEST(ResolvePlan, FromConfig) {
  Config cfg;
  cfg.set("plan.methods", "bce,elr");
  cfg.set("plan.override.elr.loss.lambda", "0.5");
  const auto plan = resolve_plan(cfg);
  EXPECT_EQ(plan.methods.size(), 2u);
  EXPECT_EQ(plan.kinds.size(), 3u);
  EXPECT_EQ(plan.rates.size(), 5u);
  EXPECT_EQ(plan.seeds.size(), 3u);
  EXPECT_EQ(plan.configs.at(Method::elr).loss.lambda, 0.5);
  EXPECT_EQ(plan.configs.at(Method::elr).method, Method::elr);
  cfg.set("plan.seeds", "");
  EXPECT_THROW(resolve_plan(cfg), ConfigError);
  cfg.set("plan.seeds", "x");
  EXPECT_THROW(resolve_plan(cfg), ConfigError);
}

}  // namespace
}  // namespace nar
