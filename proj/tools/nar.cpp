// nar: command-line front end for data generation, noise injection, training,
// evaluation and the experiment drivers.
//
// Exit codes: 0 success, 1 configuration or input error, 2 training failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "nar/nar.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitConfig = 1;
constexpr int kExitTraining = 2;

struct CommonOptions {
  std::vector<std::string> config_files;
  std::vector<std::string> assignments;

  nar::Config resolve() const {
    nar::Config cfg;
    for (const auto& f : config_files) cfg.merge_file(f);
    for (const auto& a : assignments) cfg.set_assignment(a);
    return cfg;
  }
};

void add_common(CLI::App* sub, CommonOptions& opts) {
  sub->add_option("-c,--config", opts.config_files,
                  "key=value configuration file; repeatable, later files win")
      ->check(CLI::ExistingFile);
  sub->add_option("-s,--set", opts.assignments,
                  "override one key, e.g. --set train.epochs=10; repeatable, applied after files");
}

void write_output(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  nar::io::write_file(path.string(), text);
}

void log_line(const std::string& msg) { std::cerr << "nar: " << msg << '\n'; }

std::string keys_help() {
  std::string out = "configuration keys (defaults):\n";
  for (const auto& k : nar::kConfigKeys) {
    out += "  " + std::string(k.name) + " = " + std::string(k.default_value) + "\n      " +
           std::string(k.help) + '\n';
  }
  out += "  plan.override.<method>.<train|thresholds|loss key>\n"
         "      per-method training override used by sweep and uniform\n";
  return out;
}

std::vector<std::uint64_t> seeds_of(const nar::Config& cfg) {
  std::vector<std::uint64_t> seeds;
  for (const auto& s : cfg.get_list("plan.seeds")) {
    const auto v = nar::io::parse_u64(s);
    if (!v) throw nar::ConfigError("plan.seeds: bad seed '" + s + "'");
    seeds.push_back(*v);
  }
  if (seeds.empty()) throw nar::ConfigError("plan.seeds is empty");
  return seeds;
}

int report_sweep_failures(const nar::SweepResult& r) {
  std::size_t failed = 0;
  for (const auto& row : r.rows) {
    if (!row.metrics) {
      ++failed;
      log_line("failed row " + std::string(nar::to_string(row.method)) + ' ' +
               std::string(nar::to_string(row.kind)) + ' ' + nar::io::format_double(row.rate) +
               " seed " + std::to_string(row.seed) + ": " + row.diagnostic);
    }
  }
  return failed ? kExitTraining : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-adaptive regularization for multi-label classification with noisy labels"};
  app.footer(keys_help());
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every subcommand");

  CommonOptions common;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic train/val/test split (plan.*)");
  add_common(gen, common);
  std::string gen_out;
  gen->add_option("-o,--out", gen_out, "output directory for train.csv, val.csv, test.csv")
      ->required();

  auto* inj = app.add_subcommand("inject", "corrupt the labels of a dataset CSV (noise.*)");
  add_common(inj, common);
  std::string inj_in, inj_out, inj_mask;
  inj->add_option("-i,--in", inj_in, "clean dataset CSV")->required()->check(CLI::ExistingFile);
  inj->add_option("-o,--out", inj_out, "noisy dataset CSV to write")->required();
  inj->add_option("--mask", inj_mask, "optional CSV of flipped entries (1 = flipped)");

  auto* trn = app.add_subcommand("train", "train one model (train.*, thresholds.*, loss.*)");
  add_common(trn, common);
  std::string trn_train, trn_val, trn_out, trn_log;
  trn->add_option("--train", trn_train, "training dataset CSV (possibly noisy labels)")
      ->required()
      ->check(CLI::ExistingFile);
  trn->add_option("--val", trn_val, "validation dataset CSV (clean labels)")
      ->required()
      ->check(CLI::ExistingFile);
  trn->add_option("-o,--out", trn_out, "checkpoint file for the best validation snapshot")
      ->required();
  trn->add_option("--log", trn_log,
                  "per-epoch CSV: epoch,loss,val_map,retain,deactivate,flip");

  auto* evl = app.add_subcommand("eval", "per-class AP and mAP macro of a checkpoint");
  std::string evl_model, evl_data, evl_out;
  evl->add_option("-m,--model", evl_model, "checkpoint written by train")
      ->required()
      ->check(CLI::ExistingFile);
  evl->add_option("-d,--data", evl_data, "dataset CSV with clean labels")
      ->required()
      ->check(CLI::ExistingFile);
  evl->add_option("-o,--out", evl_out, "CSV to write (default: stdout)");

  auto* swp = app.add_subcommand("sweep", "methods x noise kinds x rates x seeds (plan.*)");
  add_common(swp, common);
  std::string swp_out;
  swp->add_option("-o,--out", swp_out, "output directory for results.csv, summary.csv, manifest.csv")
      ->required();

  auto* orc = app.add_subcommand(
      "oracle", "3x3 oracle handling study at noise.kind / noise.rate over plan.seeds");
  add_common(orc, common);
  std::string orc_out;
  orc->add_option("-o,--out", orc_out, "output directory for oracle.csv, oracle_summary.csv")
      ->required();

  auto* sns = app.add_subcommand(
      "sensitivity", "NAR over plan.t0_w0_grid x plan.t1_w0_grid at noise.kind / noise.rate");
  add_common(sns, common);
  std::string sns_out;
  sns->add_option("-o,--out", sns_out,
                  "output directory for sensitivity.csv, sensitivity_summary.csv")
      ->required();

  auto* uni = app.add_subcommand("uniform", "uniform-noise sweep over plan.methods and plan.rates");
  add_common(uni, common);
  std::string uni_out;
  uni->add_option("-o,--out", uni_out,
                  "output directory for results.csv, summary.csv, composition.csv, manifest.csv")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const auto spec = nar::resolve_synthetic_spec(common.resolve());
      const auto splits = nar::generate_synthetic(spec);
      const fs::path dir(gen_out);
      write_output(dir / "train.csv", nar::dataset_to_csv(splits.train));
      write_output(dir / "val.csv", nar::dataset_to_csv(splits.val));
      write_output(dir / "test.csv", nar::dataset_to_csv(splits.test));
      log_line("wrote " + std::to_string(splits.train.size()) + '/' +
               std::to_string(splits.val.size()) + '/' + std::to_string(splits.test.size()) +
               " samples to " + gen_out);
    } else if (inj->parsed()) {
      const auto noise = nar::resolve_noise_spec(common.resolve());
      const auto ds = nar::load_dataset(inj_in);
      const auto rec = nar::inject(ds.labels, noise);
      for (const auto& w : rec.warnings) log_line("warning: " + w);
      write_output(inj_out, nar::dataset_to_csv(ds.with_labels(rec.noisy)));
      if (!inj_mask.empty()) write_output(inj_mask, nar::labels_to_csv(rec.mask));
      log_line("flipped " + std::to_string(rec.total_flips()) + " entries (" +
               std::to_string(rec.total_subtractive()) + " subtractive)");
    } else if (trn->parsed()) {
      const auto cfg = nar::resolve_train_config(common.resolve());
      const auto train_ds = nar::load_dataset(trn_train, nar::Split::train);
      const auto val_ds = nar::load_dataset(trn_val, nar::Split::val);
      const auto result = nar::train(train_ds, val_ds, cfg);
      nar::save_checkpoint(result.params, trn_out);
      if (!trn_log.empty()) {
        std::string log = "epoch,loss,val_map,retain,deactivate,flip\n";
        for (std::size_t e = 0; e < result.log.epoch_losses.size(); ++e) {
          const auto& sc = result.log.state_counts[e];
          log += std::to_string(e) + ',' + nar::io::format_double(result.log.epoch_losses[e]) +
                 ',' + nar::io::format_double(result.log.val_map[e]) + ',' +
                 std::to_string(sc.retain) + ',' + std::to_string(sc.deactivate) + ',' +
                 std::to_string(sc.flip) + '\n';
        }
        write_output(trn_log, log);
      }
      log_line("best epoch " + std::to_string(result.log.best_epoch) + ", val mAP " +
               nar::io::format_fixed(result.log.val_map[result.log.best_epoch], 4));
    } else if (evl->parsed()) {
      const auto params = nar::load_checkpoint(evl_model);
      const auto ds = nar::load_dataset(evl_data, nar::Split::test);
      const auto report = nar::evaluate(params, ds);
      std::string out = "class,ap\n";
      for (std::size_t c = 0; c < report.per_class_ap.size(); ++c) {
        const auto& ap = report.per_class_ap[c];
        out += std::to_string(c) + ',' + (ap ? nar::io::format_double(*ap) : std::string()) + '\n';
      }
      out += "macro," + nar::io::format_double(report.map_macro) + '\n';
      if (evl_out.empty()) {
        std::cout << out;
      } else {
        write_output(evl_out, out);
      }
    } else if (swp->parsed() || uni->parsed()) {
      const auto cfg = common.resolve();
      const auto plan = nar::resolve_plan(cfg);
      const auto data = nar::resolve_splits(cfg);
      const bool uniform = uni->parsed();
      const auto result = uniform ? nar::run_uniform(plan, data) : nar::run_sweep(plan, data);
      const fs::path dir(uniform ? uni_out : swp_out);
      write_output(dir / "results.csv", nar::results_csv(result));
      write_output(dir / "summary.csv", nar::summary_csv(result));
      write_output(dir / "manifest.csv", nar::manifest_csv(result));
      if (uniform) write_output(dir / "composition.csv", nar::uniform_composition_csv(result));
      log_line("wrote " + std::to_string(result.rows.size()) + " rows to " + dir.string());
      return report_sweep_failures(result);
    } else if (orc->parsed()) {
      const auto cfg = common.resolve();
      const auto noise = nar::resolve_noise_spec(cfg);
      const nar::OracleConfig oc{noise.kind, noise.rate, seeds_of(cfg),
                                 static_cast<std::size_t>(cfg.get_u64("plan.workers"))};
      const auto data = nar::resolve_splits(cfg);
      const auto result = nar::run_oracle(oc, data, nar::resolve_train_config(cfg));
      const fs::path dir(orc_out);
      write_output(dir / "oracle.csv", nar::oracle_csv(result));
      write_output(dir / "oracle_summary.csv", nar::oracle_summary_csv(result));
      for (const auto& row : result.rows) {
        if (!row.map_macro) {
          log_line("failed cell (" + std::string(nar::to_string(row.oracle)) + ", " +
                   std::string(nar::to_string(row.uncertain)) + ") seed " +
                   std::to_string(row.seed) + ": " + row.diagnostic);
          return kExitTraining;
        }
      }
    } else if (sns->parsed()) {
      const auto cfg = common.resolve();
      const auto noise = nar::resolve_noise_spec(cfg);
      const nar::SensitivityPlan sp{noise.kind,
                                    noise.rate,
                                    cfg.get_double_list("plan.t0_w0_grid"),
                                    cfg.get_double_list("plan.t1_w0_grid"),
                                    seeds_of(cfg),
                                    static_cast<std::size_t>(cfg.get_u64("plan.workers"))};
      const auto data = nar::resolve_splits(cfg);
      const auto result = nar::run_sensitivity(sp, data, nar::resolve_train_config(cfg));
      const fs::path dir(sns_out);
      write_output(dir / "sensitivity.csv", nar::sensitivity_csv(result));
      write_output(dir / "sensitivity_summary.csv", nar::sensitivity_summary_csv(result));
      for (const auto& row : result.rows) {
        if (row.status.rfind("skipped", 0) == 0) {
          log_line("t0_w0=" + nar::io::format_double(row.t0_w0) + " t1_w0=" +
                   nar::io::format_double(row.t1_w0) + ' ' + row.status);
        } else if (row.status != "ok") {
          log_line(row.status);
          return kExitTraining;
        }
      }
    }
  } catch (const nar::ConfigError& e) {
    log_line("configuration error: " + std::string(e.what()));
    return kExitConfig;
  } catch (const nar::FormatError& e) {
    log_line("input error: " + std::string(e.what()));
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    log_line("input error: " + std::string(e.what()));
    return kExitConfig;
  } catch (const nar::TrainingError& e) {
    log_line("training failed: " + std::string(e.what()));
    return kExitTraining;
  } catch (const std::exception& e) {
    log_line("error: " + std::string(e.what()));
    return kExitTraining;
  }
  return 0;
}
