#pragma once

// Reference frame-level detector: two 3x3 conv blocks with frequency pooling,
// a unidirectional GRU over time and a sigmoid readout per class.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sedattack/autodiff.hpp"
#include "sedattack/features.hpp"
#include "sedattack/grid.hpp"

namespace sedattack {

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::size_t kMelBins = 40;
inline constexpr std::size_t kConvChannels = 16;
inline constexpr std::size_t kGruInput = kConvChannels * kMelBins / 4;  // 160
inline constexpr std::size_t kGruHidden = 32;
inline constexpr double kActivityThreshold = 0.5;

struct ParamSpec {
  std::string name;
  ad::Shape shape;
};

// Parameter names and shapes in checkpoint order.
const std::vector<ParamSpec>& architecture();

enum ParamIndex : std::size_t {
  kConv1Weight, kConv1Bias, kConv2Weight, kConv2Bias,
  kGruWz, kGruUz, kGruBz,
  kGruWr, kGruUr, kGruBr,
  kGruWn, kGruUn, kGruBn,
  kReadoutWeight, kReadoutBias,
  kNumParams
};

// Values are kept float32-representable so checkpoints round-trip exactly.
class ModelParams {
 public:
  static ModelParams zeros();
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static ModelParams initialize(std::uint64_t seed);

  const ad::Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  ad::Tensor& operator[](std::size_t i) { return tensors_.at(i); }
  const ad::Tensor& get(std::string_view name) const;
  const std::vector<ad::Tensor>& tensors() const { return tensors_; }
  std::vector<ad::Tensor>& tensors() { return tensors_; }
  std::size_t parameter_count() const;
  void round_to_float();

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<ad::Tensor> tensors_;
};

// Pre-threshold outputs, entries clamped to [1e-7, 1 - 1e-7].
struct EventPosteriors {
  Grid<double> probs;
};

struct EventActivityMatrix {
  BinaryGrid active;
  friend bool operator==(const EventActivityMatrix&, const EventActivityMatrix&) = default;
};

// Places every parameter on the tape, as leaves when trainable.
std::vector<ad::Var> bind_params(ad::Tape& tape, const ModelParams& params, bool trainable);

// mel: [T, 40] -> unclamped sigmoid posteriors [T, C].
ad::Var forward(std::span<const ad::Var> params, ad::Var mel);

EventPosteriors forward(const ModelParams& params, const LogMelSpectrogram& mel);
EventPosteriors forward(const ModelParams& params, const ad::Tensor& mel);
EventPosteriors to_posteriors(const ad::Tensor& probs);

// active = probs > 0.5, strictly.
EventActivityMatrix binarize(const EventPosteriors& p);

struct LabeledExample {
  ad::Tensor mel;      // [T, 40]
  BinaryGrid labels;   // [T, C]
};

struct TrainConfig {
  int epochs = 30;
  double lr = 1e-3;
  int batch = 8;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Mean frame-wise BCE over every (example, frame, class) term, minimized with
// Adam. Deterministic given the seed. Throws NumericError on non-finite
// features or a non-finite loss.
TrainResult train(ModelParams params, std::span<const LabeledExample> data,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Mean BCE of the model over a dataset, no gradient.
double mean_loss(const ModelParams& params, std::span<const LabeledExample> data);

// Manifest of names, shapes and byte offsets followed by little-endian
// float32 payloads.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

struct FrameScores {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double f1() const;
  FrameScores& operator+=(const FrameScores& o);
};

// Frame-level counts of predicted vs reference activity.
FrameScores score_frames(const EventActivityMatrix& predicted, const BinaryGrid& reference);

}  // namespace sedattack
