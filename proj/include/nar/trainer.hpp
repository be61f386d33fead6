#pragma once

// Training loop for the four methods:
//
//   bce           plain BCE on the (noisy) training labels
//   elr           BCE + early-learning term
//   nar_no_elr    three-state label handling + confidence-weighted BCE
//   nar_with_elr  label handling + confidence-weighted BCE + early-learning term
//
// Per batch: forward, label handling (NAR methods, after the handler warmup),
// loss and logit gradient, backward, AdamW step at the scheduled rate, then
// the early-learning target update. The returned parameters are the snapshot
// with the best validation mAP (validation labels are clean).

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nar/dataset.hpp"
#include "nar/error.hpp"
#include "nar/label_handler.hpp"
#include "nar/losses.hpp"
#include "nar/metrics.hpp"
#include "nar/model.hpp"
#include "nar/numerics.hpp"
#include "nar/optim.hpp"

namespace nar {

enum class Method { bce, elr, nar_no_elr, nar_with_elr };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::bce: return "bce";
    case Method::elr: return "elr";
    case Method::nar_no_elr: return "nar_no_elr";
    case Method::nar_with_elr: return "nar_with_elr";
  }
  return "bce";
}

inline Method parse_method(std::string_view s) {
  if (s == "bce") return Method::bce;
  if (s == "elr") return Method::elr;
  if (s == "nar_no_elr") return Method::nar_no_elr;
  if (s == "nar_with_elr") return Method::nar_with_elr;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

constexpr bool uses_handler(Method m) noexcept {
  return m == Method::nar_no_elr || m == Method::nar_with_elr;
}

constexpr bool uses_elr(Method m) noexcept {
  return m == Method::elr || m == Method::nar_with_elr;
}

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double learning_rate = 1e-2;
  std::size_t warmup_steps = 100;
  std::size_t hidden = 64;
  std::uint64_t seed = 0;
  Method method = Method::nar_with_elr;
  ThresholdSet thresholds;
  LossConfig loss;
  std::size_t handler_warmup_epochs = 15;
  AdamWConfig adamw;

  void validate() const {
    if (epochs == 0) throw ConfigError("train.epochs must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (warmup_steps == 0) throw ConfigError("train.warmup_steps must be positive");
    if (hidden == 0) throw ConfigError("train.hidden must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("train.lr must be > 0");
    if (!(adamw.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0 && adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) {
      throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
    }
    if (!(adamw.eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
    thresholds.validate();
    loss.validate();
  }

  double effective_lambda() const noexcept { return uses_elr(method) ? loss.lambda : 0.0; }
};

struct TrainLog {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;  // mean batch loss
  std::vector<double> val_map;
  std::vector<StateCounts> state_counts;  // summed over the epoch's batches
  std::size_t best_epoch = 0;

  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

struct TrainResult {
  ModelParams params;  // best validation snapshot
  TrainLog log;
};

inline std::size_t steps_per_epoch(std::size_t n, std::size_t batch) {
  return (n + batch - 1) / batch;
}

namespace detail {

inline TrainResult train_impl(const MultiLabelDataset& train_ds, const MultiLabelDataset& val_ds,
                              const TrainConfig& cfg, const HandlingResult* fixed) {
  cfg.validate();
  if (train_ds.size() == 0) throw ConfigError("train: empty training set");
  if (val_ds.dim() != train_ds.dim() || val_ds.num_classes() != train_ds.num_classes()) {
    throw std::invalid_argument("train: validation set shape differs from training set");
  }
  if (fixed && (fixed->rows() != train_ds.size() || fixed->cols() != train_ds.num_classes())) {
    throw std::invalid_argument("train: fixed handling shape differs from training labels");
  }

  const std::size_t n = train_ds.size();
  const std::size_t classes = train_ds.num_classes();
  const Rng root(cfg.seed);
  Rng init_rng = root.child("train.init");
  ModelParams params = ModelParams::glorot(train_ds.dim(), cfg.hidden, classes, init_rng);
  AdamWState moments = AdamWState::for_params(params);

  const double lambda = cfg.effective_lambda();
  ElrTargetState targets = ElrTargetState::zeros(n, classes);
  const bool ema_targets = lambda != 0.0 && cfg.loss.target_mode == ElrTargetMode::ema;

  const std::size_t total_steps = cfg.epochs * steps_per_epoch(n, cfg.batch_size);
  TrainResult result{params, {}};
  std::optional<double> best_map;
  std::size_t step = 0;

  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root.child("train.shuffle", epoch);
    shuffle_rng.shuffle(order);

    const bool handler_on = fixed == nullptr && uses_handler(cfg.method) &&
                            epoch >= cfg.handler_warmup_epochs;
    StateCounts epoch_counts;
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix x = train_ds.features.gather_rows(rows);
      const LabelMatrix y = train_ds.labels.gather_rows(rows);

      const ForwardPass pass = forward(params, x);
      const HandlingResult handling = fixed        ? fixed->gather_rows(rows)
                                      : handler_on ? handle(y, pass.probs, cfg.thresholds)
                                                   : HandlingResult::identity(y);
      epoch_counts += handling.counts();

      Matrix target;
      if (lambda != 0.0) {
        target = ema_targets ? targets.targets.gather_rows(rows) : y.to_matrix();
      }
      const LossAndGrad lg = nar_loss(handling, pass.probs, target, lambda, cfg.loss.eps);
      if (!std::isfinite(lg.loss) || !lg.grad_logits.all_finite()) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches));
      }
      const Gradients grads = backward(params, pass, lg.grad_logits);
      ++step;
      adamw_step(params, grads, moments, step,
                 lr_at(step, cfg.learning_rate, cfg.warmup_steps, total_steps), cfg.adamw);
      if (!params.all_finite()) {
        throw TrainingError("non-finite parameters at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batches));
      }
      if (ema_targets) update_elr_targets(targets, pass.probs, rows, cfg.loss.ema_momentum);

      result.log.step_losses.push_back(lg.loss);
      epoch_loss += lg.loss;
      ++batches;
    }

    result.log.epoch_losses.push_back(epoch_loss / static_cast<double>(batches));
    result.log.state_counts.push_back(epoch_counts);
    const double val = val_ds.size() > 0
                           ? map_macro(predict(params, val_ds.features), val_ds.labels).map_macro
                           : 0.0;
    result.log.val_map.push_back(val);
    if (!best_map || val > *best_map) {
      best_map = val;
      result.params = params;
      result.log.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace detail

inline TrainResult train(const MultiLabelDataset& train_ds, const MultiLabelDataset& val_ds,
                         const TrainConfig& cfg) {
  return detail::train_impl(train_ds, val_ds, cfg, nullptr);
}

// Training with a static per-entry handling over the whole training set in
// place of the dynamic label handler (oracle study).
inline TrainResult train_with_fixed_handling(const MultiLabelDataset& train_ds,
                                             const MultiLabelDataset& val_ds,
                                             const TrainConfig& cfg,
                                             const HandlingResult& handling) {
  return detail::train_impl(train_ds, val_ds, cfg, &handling);
}

inline MetricsReport evaluate(const ModelParams& params, const MultiLabelDataset& ds) {
  return map_macro(predict(params, ds.features), ds.labels);
}

}  // namespace nar
