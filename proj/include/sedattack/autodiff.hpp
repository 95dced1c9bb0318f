#pragma once

// Reverse-mode differentiation over the fixed operation set used by the mel
// frontend and the reference detector, plus the Adam and sign optimizers.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sedattack::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

class Tape;

// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Records primitive applications in topological order. A tape is
// single-threaded and supports exactly one backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is wanted after backward.
  Var leaf(Tensor value);

  // Appends an op node. `fn` is dropped when no input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient buffer for accumulation inside backward functions.
  std::vector<double>& grad_buffer(std::size_t id);
  std::vector<double>& grad_buffer(Var v) { return grad_buffer(v.id); }

  // Gradient of the loss w.r.t. `v`; zeros when v was not reached.
  std::vector<double> grad(Var v) const;

  // Populates gradients of a scalar loss. Throws ShapeError for non-scalar
  // losses and Error when called a second time on the same tape.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Primitives. Shapes: matrices are [rows, cols]; feature maps are
// [channels, time, freq].
Var matmul(Var a, Var b);
// Element-wise sum; `b` may also be a rank-1 bias matching a's last extent.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var multiply(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
// Same values under a new shape with equal element count.
Var reshape(Var a, Shape shape);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
// log(max(a, floor)); gradient is zero where the floor is active.
Var log_floor(Var a, double floor);
// 3x3 kernels, stride 1, zero padding 1. x: [Cin, H, W], w: [Cout, Cin, 3, 3],
// bias: [Cout] -> [Cout, H, W].
Var conv2d(Var x, Var w, Var bias);
// Max over non-overlapping pairs along the last axis: [C, H, W] -> [C, H, W/2].
Var maxpool_freq(Var x);
// [C, T, F] -> [T, C*F], element (c, f) of frame t at column c*F + f.
Var flatten_frames(Var x);
// Row t of a matrix as a [1, cols] matrix.
Var row(Var x, std::size_t t);
// Stacks matrices with equal column counts along the row (time) axis.
Var concat_time(std::span<const Var> parts);
// GRU recurrence from h_0 = 0 over precomputed input projections
// xz, xr, xn: [T, H] with recurrent weights uz, ur, un: [H, H]:
//   z = sigmoid(xz_t + h uz), r = sigmoid(xr_t + h ur),
//   n = tanh(xn_t + (r * h) un), h' = (1 - z) n + z h.
// Returns every state, [T, H].
Var gru_sequence(Var xz, Var xr, Var xn, Var uz, Var ur, Var un);
// Summed binary cross entropy against a constant target in [0, 1]. Inputs to
// log are clamped to [kProbFloor, 1 - kProbFloor]; the optional weight
// selects or scales individual terms.
Var bce(Var pred, const Tensor& target);
Var bce(Var pred, const Tensor& target, const Tensor& weight);

inline constexpr double kProbFloor = 1e-7;

double clamp_probability(double p);
// Scalar BCE term with the same clamping as the bce primitive.
double bce_term(double pred, double target);

// Builds a scalar loss from leaves holding the given inputs.
using LossBuilder = std::function<Var(Tape&, std::span<const Var> inputs)>;

struct GradCheckOptions {
  double h = 1e-4;
  // 0 checks every element; otherwise a seeded random subset of this size.
  std::size_t max_probes = 0;
  std::uint64_t seed = 0;
};

// Max over probed elements of |analytic - central difference| /
// max(|analytic|, |cd|, 1e-8). Throws Error when fn is not deterministic.
double grad_check(const LossBuilder& fn, const std::vector<Tensor>& inputs,
                  const GradCheckOptions& options = {});

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_size(std::size_t n);
};

// Bias-corrected Adam update applied in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr);

// delta - beta * sign(grad), sign(0) = 0.
Tensor sign_step(const Tensor& delta, const Tensor& grad, double beta);

}  // namespace sedattack::ad
