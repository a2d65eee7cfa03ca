// eapo: synthesize or load data, pretrain, retrieve, adapt, evaluate.
//
//   eapo run-all --config experiment.json --out runs/a
//   eapo adapt --config experiment.json --k 10 --mode sft-only
//
// Log verbosity comes from EAPO_LOG_LEVEL (trace, debug, info, warn, error,
// off); default info. Diagnostics go to stderr, results to files only.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "eapo/error.hpp"
#include "eapo/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
  std::optional<std::string> mode;
};

eapo::ExperimentConfig resolve(const Overrides& o) {
  auto cfg = o.config.empty() ? eapo::ExperimentConfig::from_json(nlohmann::json::object())
                              : eapo::ExperimentConfig::load(o.config);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.seed) cfg.override_seed(*o.seed);
  if (o.k) cfg.finetune.k = *o.k;
  if (o.mode) cfg.finetune.mode = eapo::parse_finetune_mode(*o.mode);
  cfg.validate();
  return cfg;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("eapo");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("EAPO_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(lvl));
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Environment-adaptive preference optimization for rare-event classifiers"};
  app.set_version_flag("--version", std::string(eapo::kVersion));
  app.require_subcommand(1);

  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON) or a run manifest")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory (overrides the config)");
    sub->add_option("--seed", o.seed, "Set every seed (data, model, training)");
    sub->add_option("--k", o.k, "Neighbours retrieved per test input")->check(CLI::PositiveNumber);
    sub->add_option("--mode", o.mode, "Fine-tune mode")
        ->check(CLI::IsMember({"eapo", "sft-only", "sft_only"}));
  };

  auto* synth = app.add_subcommand("synth", "Write synthetic train/test tables");
  auto* pre = app.add_subcommand("pretrain", "Supervised pretraining");
  auto* adapt = app.add_subcommand("adapt", "Retrieve the local manifold and fine-tune");
  auto* eval = app.add_subcommand("eval", "Evaluate pretrained and adapted checkpoints");
  auto* all = app.add_subcommand("run-all", "Run every stage and write the manifest");
  for (auto* s : {synth, pre, adapt, eval, all}) add_common(s);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(o);
    if (synth->parsed()) {
      auto out = eapo::cmd_synth(cfg);
      spdlog::info("train table: {}", out.train.string());
      spdlog::info("test table: {}", out.test.string());
    } else if (pre->parsed()) {
      eapo::cmd_pretrain(cfg);
    } else if (adapt->parsed()) {
      eapo::cmd_adapt(cfg);
    } else if (eval->parsed()) {
      auto out = eapo::cmd_eval(cfg);
      for (const auto& f : out.files) spdlog::info("wrote {}", f.string());
    } else if (all->parsed()) {
      eapo::cmd_run_all(cfg);
    }
  } catch (const eapo::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return 2;
  }
  return 0;
}
