#pragma once

// Reproducible experiment driver behind the command-line verbs. Every verb
// writes into its own subdirectory of the output root and refuses to run when
// that directory already exists.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sedattack/attack.hpp"
#include "sedattack/defense.hpp"
#include "sedattack/model.hpp"
#include "sedattack/scene.hpp"

namespace sedattack {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int jobs = 1;

  std::size_t train_scenes = 400;
  std::size_t val_scenes = 100;
  std::size_t test_scenes = 100;
  SceneOptions scene;

  TrainConfig train;

  AttackConfig attack;
  ScenarioConfig scenario;
  std::size_t scenarios = 50;

  std::vector<DefenseKind> defenses{DefenseKind::kNone, DefenseKind::kDownsample,
                                    DefenseKind::kGaussian, DefenseKind::kMeanSmooth,
                                    DefenseKind::kMedianSmooth};
  DefenseConfig defense;

  std::string sweep_parameter = "tau";
  std::vector<double> sweep_values{0.001, 0.005, 0.02, 0.1};

  std::vector<int> scale_k{1, 3, 5};
  double scale_edit_seconds = 2.0;

  void validate() const;
  // Every setting as INI text with sorted keys; parse_config reads it back.
  std::string canonical() const;
  // 16 hex digits over canonical() with seed and jobs excluded.
  std::string hash() const;
};

// INI text: top-level seed/jobs plus [dataset], [train], [attack],
// [scenario], [defense], [sweep] and [scale] sections. Unknown sections or
// keys and malformed values throw ValidationError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

std::vector<LabeledExample> to_examples(const std::vector<DatasetEntry>& entries,
                                        const MelFrontendConfig& frontend);
FrameScores evaluate_frames(const ModelParams& params, const std::vector<LabeledExample>& examples);

struct Layout {
  std::filesystem::path root;
  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path model() const { return root / "model"; }
  std::filesystem::path checkpoint() const { return model() / "model.ckpt"; }
  std::filesystem::path attack() const { return root / "attack"; }
  std::filesystem::path defend() const { return root / "defend"; }
  std::filesystem::path sweep(const std::string& param) const { return root / ("sweep_" + param); }
  std::filesystem::path scale() const { return root / "scale_edits"; }
};

using Logger = std::function<void(const std::string&)>;

void cmd_synth(const ExperimentConfig& cfg, const Layout& out, const Logger& log = {});
void cmd_train(const ExperimentConfig& cfg, const Layout& out, const Logger& log = {});
void cmd_attack(const ExperimentConfig& cfg, const Layout& out, const Logger& log = {});
void cmd_defend(const ExperimentConfig& cfg, const Layout& out, const Logger& log = {});
// parameter is "alpha" or "tau"; one campaign per value with fixed seeds.
void cmd_sweep(const ExperimentConfig& cfg, const Layout& out, const std::string& parameter,
               const std::vector<double>& values, const Logger& log = {});
void cmd_scale_edits(const ExperimentConfig& cfg, const Layout& out, const std::vector<int>& k_values,
                     const Logger& log = {});

}  // namespace sedattack
