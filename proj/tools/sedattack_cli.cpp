#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sedattack/error.hpp"
#include "sedattack/experiment.hpp"
#include "sedattack/runtime.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  long long seed = -1;
  int jobs = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (INI)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output root directory")->required();
  cmd->add_option("--seed", c.seed, "override the config seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--jobs", c.jobs, "parallel attack workers")->check(CLI::PositiveNumber);
}

sedattack::ExperimentConfig resolve(const Common& c) {
  auto cfg = sedattack::load_config(c.config);
  if (c.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(c.seed);
    cfg.train.seed = cfg.seed;
  }
  if (c.jobs > 0) cfg.jobs = c.jobs;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  sedattack::configure_allocator();
  CLI::App app{"Targeted adversarial edits against a frame-level sound event detector"};
  app.require_subcommand(1);

  Common synth, train, attack, defend, sweep, scale;
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::vector<int> k_values;

  auto* c_synth = app.add_subcommand("synth", "generate train/val/test scenes");
  add_common(c_synth, synth);
  auto* c_train = app.add_subcommand("train", "train the detector on the synthesized scenes");
  add_common(c_train, train);
  auto* c_attack = app.add_subcommand("attack", "run the attack campaign on the test scenes");
  add_common(c_attack, attack);
  auto* c_defend = app.add_subcommand("defend", "re-score stored attack runs behind each defense");
  add_common(c_defend, defend);
  auto* c_sweep = app.add_subcommand("sweep", "one campaign per alpha or tau value");
  add_common(c_sweep, sweep);
  c_sweep->add_option("--param", sweep_param, "alpha or tau (default from config)");
  c_sweep->add_option("--values", sweep_values, "values to sweep (default from config)")->delimiter(',');
  auto* c_scale = app.add_subcommand("scale-edits", "one campaign per number of simultaneous edits");
  add_common(c_scale, scale);
  c_scale->add_option("--k", k_values, "edit counts (default from config)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto log = [](const std::string& msg) { std::cerr << msg << "\n"; };
  std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (c_synth->parsed()) {
      sedattack::cmd_synth(resolve(synth), {synth.out}, log);
    } else if (c_train->parsed()) {
      sedattack::cmd_train(resolve(train), {train.out}, log);
    } else if (c_attack->parsed()) {
      sedattack::cmd_attack(resolve(attack), {attack.out}, log);
    } else if (c_defend->parsed()) {
      sedattack::cmd_defend(resolve(defend), {defend.out}, log);
    } else if (c_sweep->parsed()) {
      const auto cfg = resolve(sweep);
      sedattack::cmd_sweep(cfg, {sweep.out}, sweep_param.empty() ? cfg.sweep_parameter : sweep_param,
                           sweep_values.empty() ? cfg.sweep_values : sweep_values, log);
    } else if (c_scale->parsed()) {
      const auto cfg = resolve(scale);
      sedattack::cmd_scale_edits(cfg, {scale.out}, k_values.empty() ? cfg.scale_k : k_values, log);
    }
  } catch (const sedattack::ValidationError& e) {
    std::cerr << stage << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << stage << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
