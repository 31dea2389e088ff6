// zscd: zero-shot scene change detection over exported embeddings and
// segment sets.

#include <CLI11.hpp>

#include <iostream>

#include "zscd/zscd.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<double> tau, alpha, beta;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string output;
  std::string dataset_tag = "custom";
  std::vector<double> sweep;
};

zscd::PipelineConfig build_config(const Overrides& o) {
  zscd::PipelineConfig cfg;
  cfg.cache_dir = zscd::default_cache_dir();
  if (!o.config.empty()) cfg = zscd::config_from_json(zscd::read_json_file(o.config), cfg);
  if (o.tau) cfg.change.tau = *o.tau;
  if (o.alpha) cfg.change.alpha = *o.alpha;
  if (o.beta) cfg.change.beta = *o.beta;
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (!o.output.empty()) cfg.output = o.output;
  if (!o.sweep.empty()) cfg.sweep = o.sweep;
  return cfg;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON config file (flags override it)");
  cmd->add_option("--tau", o.tau, "descriptor distance change threshold");
  cmd->add_option("--alpha", o.alpha, "segment / coarse-map overlap threshold");
  cmd->add_option("--beta", o.beta, "cross-image overlap confirmation threshold");
  cmd->add_option("--seed", o.seed, "RANSAC seed");
  cmd->add_option("--jobs", o.jobs, "pairs processed concurrently");
  cmd->add_option("--output", o.output, "output directory");
  cmd->add_option("--dataset-tag", o.dataset_tag, "VL-CMU-CD | Tsunami | GSV | custom");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot scene change detection"};
  app.require_subcommand(1);
  Overrides o;
  std::vector<std::string> inputs;
  std::string predictions, dataset, source, mask;

  auto* detect = app.add_subcommand("detect", "detect changes for pair manifests or dataset roots");
  add_common(detect, o);
  detect->add_option("inputs", inputs, "pair manifest, batch manifest or dataset root");

  auto* evaluate = app.add_subcommand("evaluate", "score predicted masks against ground truth");
  add_common(evaluate, o);
  evaluate->add_option("predictions", predictions, "directory of <pair_id>.png masks")->required();
  evaluate->add_option("dataset", dataset, "dataset root")->required();

  auto* sweep = app.add_subcommand("sweep", "evaluate a list of tau values with cached alignment");
  add_common(sweep, o);
  sweep->add_option("inputs", inputs, "pair manifest, batch manifest or dataset root");
  sweep->add_option("--sweep", o.sweep, "tau values (overrides the config list)")->delimiter(',');

  auto* overlay = app.add_subcommand("overlay", "tint changed pixels over the T1 image");
  add_common(overlay, o);
  overlay->add_option("source", source, "T1 image PNG or pair manifest")->required();
  overlay->add_option("mask", mask, "mask PNG")->required();

  CLI11_PARSE(app, argc, argv);

  zscd::PipelineConfig cfg;
  zscd::DatasetTag tag{};
  const int setup = zscd::run_guarded(std::cerr, [&] {
    cfg = build_config(o);
    tag = zscd::parse_dataset_tag(o.dataset_tag);
    return 0;
  });
  if (setup != 0) return setup;

  std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
  if (*detect) return zscd::cmd_detect(cfg, paths, tag, std::cout, std::cerr);
  if (*evaluate) return zscd::cmd_evaluate(cfg, predictions, dataset, tag, std::cout, std::cerr);
  if (*sweep) return zscd::cmd_sweep(cfg, paths, tag, std::cout, std::cerr);
  return zscd::cmd_overlay(cfg, source, mask, std::cout, std::cerr);
}
