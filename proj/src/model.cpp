#include "sedattack/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "sedattack/error.hpp"

namespace sedattack {

const std::vector<ParamSpec>& architecture() {
  static const std::vector<ParamSpec> specs = {
      {"conv1.weight", {kConvChannels, 1, 3, 3}},
      {"conv1.bias", {kConvChannels}},
      {"conv2.weight", {kConvChannels, kConvChannels, 3, 3}},
      {"conv2.bias", {kConvChannels}},
      {"gru.w_update", {kGruInput, kGruHidden}},
      {"gru.u_update", {kGruHidden, kGruHidden}},
      {"gru.b_update", {kGruHidden}},
      {"gru.w_reset", {kGruInput, kGruHidden}},
      {"gru.u_reset", {kGruHidden, kGruHidden}},
      {"gru.b_reset", {kGruHidden}},
      {"gru.w_candidate", {kGruInput, kGruHidden}},
      {"gru.u_candidate", {kGruHidden, kGruHidden}},
      {"gru.b_candidate", {kGruHidden}},
      {"readout.weight", {kGruHidden, kNumClasses}},
      {"readout.bias", {kNumClasses}},
  };
  return specs;
}

ModelParams ModelParams::zeros() {
  ModelParams p;
  for (const auto& spec : architecture()) p.tensors_.push_back(ad::Tensor::zeros(spec.shape));
  return p;
}

ModelParams ModelParams::initialize(std::uint64_t seed) {
  ModelParams p = zeros();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto& shape = architecture()[i].shape;
    if (shape.size() == 1) continue;
    // conv: Cin*9; matrices: rows
    const std::size_t fan_in = shape.size() == 4 ? shape[1] * 9 : shape[0];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : p.tensors_[i].values()) v = bound * unit(rng);
  }
  p.round_to_float();
  return p;
}

const ad::Tensor& ModelParams::get(std::string_view name) const {
  const auto& specs = architecture();
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (specs[i].name == name) return tensors_.at(i);
  throw ValidationError("unknown parameter: " + std::string(name));
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ModelParams::round_to_float() {
  for (auto& t : tensors_)
    for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

std::vector<ad::Var> bind_params(ad::Tape& tape, const ModelParams& params, bool trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(kNumParams);
  for (const auto& t : params.tensors()) vars.push_back(trainable ? tape.leaf(t) : tape.constant(t));
  return vars;
}

ad::Var forward(std::span<const ad::Var> p, ad::Var mel) {
  using namespace ad;
  if (p.size() != kNumParams) throw ShapeError("forward: expected " + std::to_string(kNumParams) + " parameters");
  const Tensor& m = mel.value();
  if (m.rank() != 2 || m.dim(1) != kMelBins) {
    throw ShapeError("forward: mel input must be [T, 40]");
  }
  const std::size_t frames = m.dim(0);

  Var x = reshape(mel, {1, frames, kMelBins});
  x = maxpool_freq(relu(conv2d(x, p[kConv1Weight], p[kConv1Bias])));
  x = maxpool_freq(relu(conv2d(x, p[kConv2Weight], p[kConv2Bias])));
  const Var seq = flatten_frames(x);  // [T, 160]

  const Var xz = add(matmul(seq, p[kGruWz]), p[kGruBz]);
  const Var xr = add(matmul(seq, p[kGruWr]), p[kGruBr]);
  const Var xn = add(matmul(seq, p[kGruWn]), p[kGruBn]);

  const Var hidden = gru_sequence(xz, xr, xn, p[kGruUz], p[kGruUr], p[kGruUn]);
  return sigmoid(add(matmul(hidden, p[kReadoutWeight]), p[kReadoutBias]));
}

EventPosteriors to_posteriors(const ad::Tensor& probs) {
  if (probs.rank() != 2) throw ShapeError("posteriors must be a matrix");
  std::vector<double> v(probs.values());
  for (double& x : v) x = ad::clamp_probability(x);
  return {Grid<double>(probs.dim(0), probs.dim(1), std::move(v))};
}

EventPosteriors forward(const ModelParams& params, const ad::Tensor& mel) {
  ad::Tape tape;
  const auto vars = bind_params(tape, params, false);
  return to_posteriors(forward(vars, tape.constant(mel)).value());
}

EventPosteriors forward(const ModelParams& params, const LogMelSpectrogram& mel) {
  return forward(params, mel.frames);
}

EventActivityMatrix binarize(const EventPosteriors& p) {
  BinaryGrid out(p.probs.rows(), p.probs.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = p.probs.data()[i] > kActivityThreshold;
  return {std::move(out)};
}

namespace {

ad::Tensor label_tensor(const BinaryGrid& labels) {
  std::vector<double> v(labels.data().begin(), labels.data().end());
  return ad::Tensor({labels.rows(), labels.cols()}, std::move(v));
}

void check_example(const LabeledExample& ex) {
  if (ex.mel.rank() != 2 || ex.mel.dim(1) != kMelBins || ex.labels.rows() != ex.mel.dim(0) ||
      ex.labels.cols() != kNumClasses) {
    throw ShapeError("training example labels are not aligned with its frames");
  }
  for (double v : ex.mel.values())
    if (!std::isfinite(v)) throw NumericError("training example has non-finite features");
}

}  // namespace

double mean_loss(const ModelParams& params, std::span<const LabeledExample> data) {
  double total = 0.0;
  std::size_t terms = 0;
  for (const auto& ex : data) {
    check_example(ex);
    const auto post = forward(params, ex.mel);
    for (std::size_t i = 0; i < post.probs.size(); ++i)
      total += ad::bce_term(post.probs.data()[i], ex.labels.data()[i]);
    terms += post.probs.size();
  }
  return terms ? total / static_cast<double>(terms) : 0.0;
}

TrainResult train(ModelParams params, std::span<const LabeledExample> data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  if (data.empty()) throw ValidationError("train: dataset is empty");
  if (cfg.epochs < 0 || cfg.batch <= 0 || !(cfg.lr > 0.0))
    throw ValidationError("train: epochs >= 0, batch > 0 and lr > 0 required");
  for (const auto& ex : data) check_example(ex);

  std::vector<ad::AdamState> states;
  for (const auto& t : params.tensors()) states.push_back(ad::AdamState::for_size(t.size()));

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<std::vector<double>> grads;
      for (const auto& t : params.tensors()) grads.emplace_back(t.size(), 0.0);
      std::size_t batch_terms = 0;
      for (std::size_t i = start; i < stop; ++i) batch_terms += data[order[i]].labels.size();

      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& ex = data[order[i]];
        ad::Tape tape;
        const auto vars = bind_params(tape, params, true);
        const ad::Var probs = forward(vars, tape.constant(ex.mel));
        const ad::Var loss =
            ad::scale(ad::bce(probs, label_tensor(ex.labels)), 1.0 / static_cast<double>(batch_terms));
        const double value = loss.value().item();
        if (!std::isfinite(value)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", example " + std::to_string(order[i]));
        }
        batch_loss += value;
        tape.backward(loss);
        for (std::size_t k = 0; k < kNumParams; ++k) {
          const auto g = tape.grad(vars[k]);
          for (std::size_t j = 0; j < g.size(); ++j) grads[k][j] += g[j];
        }
      }
      for (std::size_t k = 0; k < kNumParams; ++k)
        ad::adam_step(params[k].values(), grads[k], states[k], cfg.lr);
      epoch_total += batch_loss * static_cast<double>(stop - start);
    }
    const double epoch_mean = epoch_total / static_cast<double>(order.size());
    result.epoch_loss.push_back(epoch_mean);
    if (on_epoch) on_epoch(epoch, epoch_mean);
  }
  params.round_to_float();
  result.params = std::move(params);
  return result;
}

namespace {

constexpr std::string_view kCheckpointMagic = "SEDATTACK-CHECKPOINT 1";

std::string shape_text(const ad::Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ostringstream manifest;
  manifest << kCheckpointMagic << "\n" << "params " << kNumParams << "\n";
  std::size_t offset = 0;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    manifest << architecture()[i].name << " " << shape_text(params[i].shape()) << " " << offset << "\n";
    offset += params[i].size() * 4;
  }
  manifest << "payload " << offset << "\n";

  std::string payload;
  payload.reserve(offset);
  for (const auto& t : params.tensors()) {
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) payload.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  const std::string head = manifest.str();
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw FormatError("not a checkpoint file: " + path.string());
  }
  std::size_t count = 0;
  {
    std::string word;
    if (!std::getline(in, line)) throw FormatError("checkpoint manifest truncated");
    std::istringstream ls(line);
    if (!(ls >> word >> count) || word != "params") throw FormatError("checkpoint manifest malformed");
  }

  struct Entry {
    std::size_t index;
    ad::Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  std::vector<bool> seen(kNumParams, false);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw FormatError("checkpoint manifest truncated");
    std::istringstream ls(line);
    std::string name, dims;
    std::size_t offset = 0;
    if (!(ls >> name >> dims >> offset)) throw FormatError("checkpoint manifest line malformed: " + line);
    const auto& specs = architecture();
    auto it = std::find_if(specs.begin(), specs.end(), [&](const ParamSpec& s) { return s.name == name; });
    if (it == specs.end()) throw FormatError("checkpoint has unknown parameter: " + name);
    const std::size_t index = static_cast<std::size_t>(it - specs.begin());
    ad::Shape shape;
    std::istringstream ds(dims);
    std::string part;
    while (std::getline(ds, part, 'x')) shape.push_back(std::stoul(part));
    if (shape != it->shape) {
      throw ShapeError("checkpoint parameter " + name + " has shape " + dims + ", expected " +
                       shape_text(it->shape));
    }
    if (seen[index]) throw FormatError("checkpoint repeats parameter: " + name);
    seen[index] = true;
    entries.push_back({index, std::move(shape), offset});
  }
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (!seen[i]) throw FormatError("checkpoint is missing parameter: " + architecture()[i].name);
  }
  std::size_t payload_bytes = 0;
  {
    std::string word;
    if (!std::getline(in, line)) throw FormatError("checkpoint manifest truncated");
    std::istringstream ls(line);
    if (!(ls >> word >> payload_bytes) || word != "payload") throw FormatError("checkpoint manifest malformed");
  }
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() < payload_bytes) {
    throw FormatError("checkpoint payload truncated: " + std::to_string(payload.size()) + " of " +
                      std::to_string(payload_bytes) + " bytes");
  }

  ModelParams params = ModelParams::zeros();
  for (const auto& e : entries) {
    auto& values = params[e.index].values();
    if (e.offset + values.size() * 4 > payload.size()) {
      throw FormatError("checkpoint payload truncated in " + architecture()[e.index].name);
    }
    for (std::size_t j = 0; j < values.size(); ++j) {
      const auto* b = reinterpret_cast<const unsigned char*>(payload.data() + e.offset + 4 * j);
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) |
                                 (static_cast<std::uint32_t>(b[3]) << 24);
      values[j] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return params;
}

double FrameScores::f1() const {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

FrameScores& FrameScores::operator+=(const FrameScores& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

FrameScores score_frames(const EventActivityMatrix& predicted, const BinaryGrid& reference) {
  if (!predicted.active.same_shape(reference)) throw ShapeError("score_frames: shape mismatch");
  FrameScores s;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const bool p = predicted.active.data()[i] != 0, r = reference.data()[i] != 0;
    s.tp += p && r;
    s.fp += p && !r;
    s.fn += !p && r;
  }
  return s;
}

}  // namespace sedattack
