#pragma once

// Flat key=value configuration.
//
//   # comment
//   train.epochs = 30
//   thresholds.t0_w0 = 0.5
//   plan.rates = 0.1,0.2,0.3,0.4,0.6
//
// Keys are namespaced train.*, noise.*, thresholds.*, loss.* and plan.*.
// Per-method training overrides use plan.override.<method>.<train key>, e.g.
// `plan.override.elr.loss.lambda = 1`. Unknown keys are rejected.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nar/dataset.hpp"
#include "nar/error.hpp"
#include "nar/io.hpp"
#include "nar/noise.hpp"
#include "nar/trainer.hpp"

namespace nar {

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

// Every recognized key with its default.
inline constexpr ConfigKey kConfigKeys[] = {
    {"train.epochs", "30", "training epochs"},
    {"train.batch_size", "128", "mini-batch size"},
    {"train.lr", "0.01", "peak learning rate"},
    {"train.warmup_steps", "100", "linear warmup steps before cosine annealing"},
    {"train.weight_decay", "0.01", "AdamW decoupled weight decay"},
    {"train.beta1", "0.9", "AdamW first-moment decay"},
    {"train.beta2", "0.999", "AdamW second-moment decay"},
    {"train.adam_eps", "1e-08", "AdamW denominator epsilon"},
    {"train.hidden", "64", "hidden layer width"},
    {"train.seed", "0", "training seed (init, batch order)"},
    {"train.method", "nar_with_elr", "bce | elr | nar_no_elr | nar_with_elr"},
    {"train.handler_warmup_epochs", "15", "epochs before the label handler activates"},
    {"thresholds.t1_flip", "0.05", "y=1 entries with p below this are flipped to 0"},
    {"thresholds.t1_w0", "0.2", "y=1 entries with p below this are deactivated"},
    {"thresholds.t0_w0", "0.5", "y=0 entries with p above this are deactivated"},
    {"thresholds.t0_flip", "0.9", "y=0 entries with p above this are flipped to 1"},
    {"loss.lambda", "0.1", "early-learning regularization strength"},
    {"loss.target_mode", "ema", "ema | raw_label"},
    {"loss.ema_momentum", "0.7", "EMA momentum for early-learning targets"},
    {"loss.eps", "1e-07", "probability clamp before logarithms"},
    {"noise.kind", "subtractive", "additive | subtractive | mixed | uniform"},
    {"noise.rate", "0.4", "noise rate in [0, 1]"},
    {"noise.seed", "0", "noise injection seed"},
    {"plan.samples", "2000", "synthetic sample count"},
    {"plan.classes", "10", "synthetic class count"},
    {"plan.dim", "32", "synthetic feature dimension"},
    {"plan.prior", "0.2", "per-class positive probability (one value or C comma-separated)"},
    {"plan.prototype_scale", "0.3", "std of the class prototype entries"},
    {"plan.feature_noise", "0.5", "std of the additive feature noise"},
    {"plan.data_seed", "1", "synthetic data seed"},
    {"plan.data_dir", "", "load train.csv/val.csv/test.csv from here instead of generating"},
    {"plan.methods", "bce,elr,nar_no_elr,nar_with_elr", "methods in a sweep"},
    {"plan.kinds", "subtractive,additive,mixed", "noise kinds in a sweep"},
    {"plan.rates", "0.1,0.2,0.3,0.4,0.6", "noise rates in a sweep"},
    {"plan.seeds", "0,1,2", "run seeds"},
    {"plan.workers", "0", "worker threads (0: hardware concurrency)"},
    {"plan.t0_w0_grid", "0.3,0.4,0.5,0.6,0.7", "sensitivity grid for thresholds.t0_w0"},
    {"plan.t1_w0_grid", "", "sensitivity grid for thresholds.t1_w0 (empty: base value)"},
};

class Config {
 public:
  Config() {
    for (const auto& k : kConfigKeys) values_.emplace(std::string(k.name), std::string(k.default_value));
  }

  static bool is_known(std::string_view key) {
    if (std::any_of(std::begin(kConfigKeys), std::end(kConfigKeys),
                    [&](const ConfigKey& k) { return k.name == key; })) {
      return true;
    }
    constexpr std::string_view prefix = "plan.override.";
    if (key.substr(0, prefix.size()) != prefix) return false;
    const auto rest = key.substr(prefix.size());
    const auto dot = rest.find('.');
    if (dot == std::string_view::npos) return false;
    parse_method(rest.substr(0, dot));
    const auto inner = rest.substr(dot + 1);
    return inner.substr(0, 6) == "train." || inner.substr(0, 11) == "thresholds." ||
           inner.substr(0, 5) == "loss.";
  }

  void set(std::string_view key, std::string_view value) {
    key = io::trim(key);
    if (!is_known(key)) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
    values_[std::string(key)] = std::string(io::trim(value));
  }

  // `key=value`
  void set_assignment(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
    }
    set(assignment.substr(0, eq), assignment.substr(eq + 1));
  }

  void merge_text(std::string_view text) {
    std::size_t line_no = 0;
    for (auto line : io::split(text, '\n')) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string_view::npos) line = line.substr(0, hash);
      line = io::trim(line);
      if (line.empty()) continue;
      try {
        set_assignment(line);
      } catch (const ConfigError& e) {
        throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  void merge_file(const std::string& path) {
    try {
      merge_text(io::read_file(path));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
  }

  const std::string& get(std::string_view key) const {
    auto it = values_.find(std::string(key));
    if (it == values_.end()) throw ConfigError("missing configuration key '" + std::string(key) + "'");
    return it->second;
  }

  double get_double(std::string_view key) const {
    const auto v = io::parse_double(get(key));
    if (!v) throw ConfigError(std::string(key) + ": expected a number, got '" + get(key) + "'");
    return *v;
  }

  std::uint64_t get_u64(std::string_view key) const {
    const auto v = io::parse_u64(get(key));
    if (!v) {
      throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + get(key) +
                        "'");
    }
    return *v;
  }

  std::vector<std::string> get_list(std::string_view key) const {
    std::vector<std::string> out;
    for (auto item : io::split(get(key), ',')) {
      item = io::trim(item);
      if (!item.empty()) out.emplace_back(item);
    }
    return out;
  }

  std::vector<double> get_double_list(std::string_view key) const {
    std::vector<double> out;
    for (const auto& item : get_list(key)) {
      const auto v = io::parse_double(item);
      if (!v) throw ConfigError(std::string(key) + ": bad number '" + item + "'");
      out.push_back(*v);
    }
    return out;
  }

  // Overrides for one method, with the plan.override.<method>. prefix removed.
  std::vector<std::pair<std::string, std::string>> overrides_for(Method m) const {
    const std::string prefix = "plan.override." + std::string(to_string(m)) + ".";
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, v] : values_)
      if (k.rfind(prefix, 0) == 0) out.emplace_back(k.substr(prefix.size()), v);
    return out;
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

inline TrainConfig resolve_train_config(const Config& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_u64("train.epochs");
  t.batch_size = cfg.get_u64("train.batch_size");
  t.learning_rate = cfg.get_double("train.lr");
  t.warmup_steps = cfg.get_u64("train.warmup_steps");
  t.adamw.weight_decay = cfg.get_double("train.weight_decay");
  t.adamw.beta1 = cfg.get_double("train.beta1");
  t.adamw.beta2 = cfg.get_double("train.beta2");
  t.adamw.eps = cfg.get_double("train.adam_eps");
  t.hidden = cfg.get_u64("train.hidden");
  t.seed = cfg.get_u64("train.seed");
  t.method = parse_method(cfg.get("train.method"));
  t.handler_warmup_epochs = cfg.get_u64("train.handler_warmup_epochs");
  t.thresholds = {cfg.get_double("thresholds.t1_flip"), cfg.get_double("thresholds.t1_w0"),
                  cfg.get_double("thresholds.t0_w0"), cfg.get_double("thresholds.t0_flip")};
  t.loss.lambda = cfg.get_double("loss.lambda");
  t.loss.target_mode = parse_elr_target_mode(cfg.get("loss.target_mode"));
  t.loss.ema_momentum = cfg.get_double("loss.ema_momentum");
  t.loss.eps = cfg.get_double("loss.eps");
  t.validate();
  return t;
}

// Training configuration for `m` with its plan.override.<m>.* keys applied.
inline TrainConfig resolve_train_config(const Config& cfg, Method m) {
  Config local = cfg;
  for (const auto& [k, v] : cfg.overrides_for(m)) local.set(k, v);
  local.set("train.method", to_string(m));
  return resolve_train_config(local);
}

inline SyntheticSpec resolve_synthetic_spec(const Config& cfg) {
  SyntheticSpec s;
  s.samples = cfg.get_u64("plan.samples");
  s.classes = cfg.get_u64("plan.classes");
  s.dim = cfg.get_u64("plan.dim");
  const auto priors = cfg.get_double_list("plan.prior");
  if (priors.size() == 1) {
    s.default_prior = priors[0];
  } else {
    s.priors = priors;
  }
  s.prototype_scale = cfg.get_double("plan.prototype_scale");
  s.feature_noise = cfg.get_double("plan.feature_noise");
  s.seed = cfg.get_u64("plan.data_seed");
  s.validate();
  return s;
}

inline NoiseSpec resolve_noise_spec(const Config& cfg) {
  NoiseSpec n{parse_noise_kind(cfg.get("noise.kind")), cfg.get_double("noise.rate"),
              cfg.get_u64("noise.seed")};
  n.validate();
  return n;
}

// Canonical key=value dump of a training configuration (sorted keys, shortest
// round-trip numbers). Stable across runs; used for row hashes.
inline std::string canonical_text(const TrainConfig& t) {
  std::map<std::string, std::string> kv{
      {"train.epochs", std::to_string(t.epochs)},
      {"train.batch_size", std::to_string(t.batch_size)},
      {"train.lr", io::format_double(t.learning_rate)},
      {"train.warmup_steps", std::to_string(t.warmup_steps)},
      {"train.weight_decay", io::format_double(t.adamw.weight_decay)},
      {"train.beta1", io::format_double(t.adamw.beta1)},
      {"train.beta2", io::format_double(t.adamw.beta2)},
      {"train.adam_eps", io::format_double(t.adamw.eps)},
      {"train.hidden", std::to_string(t.hidden)},
      {"train.seed", std::to_string(t.seed)},
      {"train.method", std::string(to_string(t.method))},
      {"train.handler_warmup_epochs", std::to_string(t.handler_warmup_epochs)},
      {"thresholds.t1_flip", io::format_double(t.thresholds.t1_flip)},
      {"thresholds.t1_w0", io::format_double(t.thresholds.t1_w0)},
      {"thresholds.t0_w0", io::format_double(t.thresholds.t0_w0)},
      {"thresholds.t0_flip", io::format_double(t.thresholds.t0_flip)},
      {"loss.lambda", io::format_double(t.loss.lambda)},
      {"loss.target_mode", std::string(to_string(t.loss.target_mode))},
      {"loss.ema_momentum", io::format_double(t.loss.ema_momentum)},
      {"loss.eps", io::format_double(t.loss.eps)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + '=' + v + '\n';
  return out;
}

inline std::string canonical_text(const NoiseSpec& n) {
  return "noise.kind=" + std::string(to_string(n.kind)) + "\nnoise.rate=" +
         io::format_double(n.rate) + "\nnoise.seed=" + std::to_string(n.seed) + '\n';
}

inline std::string canonical_text(const SyntheticSpec& s) {
  std::string priors;
  for (std::size_t c = 0; c < s.classes; ++c) {
    if (c) priors += ',';
    priors += io::format_double(s.prior(c));
  }
  return "plan.samples=" + std::to_string(s.samples) + "\nplan.classes=" +
         std::to_string(s.classes) + "\nplan.dim=" + std::to_string(s.dim) + "\nplan.prior=" +
         priors + "\nplan.prototype_scale=" + io::format_double(s.prototype_scale) +
         "\nplan.feature_noise=" + io::format_double(s.feature_noise) + "\nplan.data_seed=" +
         std::to_string(s.seed) + '\n';
}

// 64-bit FNV-1a as 16 hex digits.
inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace nar
