#include "sedattack/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/Core>

#include "sedattack/error.hpp"

namespace sedattack::ad {

namespace {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Message construction is deferred until the check fails.
#define SEDATTACK_REQUIRE(cond, msg) \
  do {                               \
    if (!(cond)) throw ShapeError(msg); \
  } while (0)

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  SEDATTACK_REQUIRE(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Shorthand for unary element-wise ops whose derivative is a function of the
// input and output values.
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return a.tape->record(std::move(out), {a}, [a, deriv](Tape& t, std::size_t self) {
    const auto& gy = t.grad_buffer(self);
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(self);
    auto& gx = t.grad_buffer(a);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (auto d : shape_) SEDATTACK_REQUIRE(d > 0, "tensor extents must be positive");
  SEDATTACK_REQUIRE(shape_size(shape_) == values_.size(),
          "tensor of shape " + shape_str(shape_) + " given " + std::to_string(values_.size()) +
              " values");
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

double Tensor::item() const {
  SEDATTACK_REQUIRE(values_.size() == 1, "item() on non-scalar tensor " + shape_str(shape_));
  return values_[0];
}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape != this) throw Error("op mixes variables from different tapes");
    needs = needs || nodes_[v.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::vector<double> Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (backward_done_) throw Error("backward called twice on one tape; re-run the forward pass");
  if (nodes_.at(loss.id).value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " +
                     shape_str(nodes_[loss.id].value.shape()));
  }
  backward_done_ = true;
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }
}

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  SEDATTACK_REQUIRE(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(0),
                    "matmul: incompatible shapes " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  const Index m = static_cast<Index>(A.dim(0)), k = static_cast<Index>(A.dim(1)),
              n = static_cast<Index>(B.dim(1));
  Tensor C = Tensor::zeros({A.dim(0), B.dim(1)});
  MatMap(C.values().data(), m, n).noalias() =
      ConstMatMap(A.values().data(), m, k) * ConstMatMap(B.values().data(), k, n);
  return a.tape->record(std::move(C), {a, b}, [a, b, m, k, n](Tape& t, std::size_t self) {
    const ConstMatMap g(t.grad_buffer(self).data(), m, n);
    if (t.requires_grad(a)) {
      MatMap(t.grad_buffer(a).data(), m, k).noalias() +=
          g * ConstMatMap(t.value(b).values().data(), k, n).transpose();
    }
    if (t.requires_grad(b)) {
      MatMap(t.grad_buffer(b).data(), k, n).noalias() +=
          ConstMatMap(t.value(a).values().data(), m, k).transpose() * g;
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() == B.shape()) {
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
      const auto& g = t.grad_buffer(self);
      for (Var v : {a, b}) {
        if (!t.requires_grad(v)) continue;
        auto& gv = t.grad_buffer(v);
        for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
      }
    });
  }
  SEDATTACK_REQUIRE(B.rank() == 1 && B.dim(0) == A.shape().back(),
          "add: shape mismatch " + shape_str(A.shape()) + " + " + shape_str(B.shape()));
  const std::size_t n = B.size();
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i % n];
  return a.tape->record(std::move(out), {a, b}, [a, b, n](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same(A, B, "sub");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var multiply(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_same(A, B, "multiply");
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var sum(Var a) {
  const Tensor& A = a.value();
  const double s = std::accumulate(A.values().begin(), A.values().end(), 0.0);
  return a.tape->record(Tensor::scalar(s), {a}, [a](Tape& t, std::size_t self) {
    const double g = t.grad_buffer(self)[0];
    for (double& v : t.grad_buffer(a)) v += g;
  });
}

Var reshape(Var a, Shape shape) {
  const Tensor& A = a.value();
  SEDATTACK_REQUIRE(shape_size(shape) == A.size(),
          "reshape: " + shape_str(A.shape()) + " -> " + shape_str(shape) + " changes size");
  return a.tape->record(Tensor(std::move(shape), A.values()), {a}, [a](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log_floor(Var a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

namespace {

// Scratch reused across calls; the patch matrix of the widest layer is
// several megabytes.
std::vector<double>& scratch(int slot) {
  thread_local std::vector<double> buffers[2];
  return buffers[slot];
}

// Patch matrix [Cin*9, H*W] for 3x3 kernels with zero padding 1; row
// ci*9 + kh*3 + kw holds x[ci, h+kh-1, w+kw-1] at column h*W + w.
template <typename Fn>
void for_each_patch_run(std::size_t C, std::size_t H, std::size_t W, Fn&& fn) {
  // fn(patch_row, dst_offset, src_offset, length) for each contiguous run.
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t kh = 0; kh < 3; ++kh) {
      for (std::size_t kw = 0; kw < 3; ++kw) {
        const std::size_t row = c * 9 + kh * 3 + kw;
        const std::size_t w0 = kw == 0 ? 1 : 0, w1 = kw == 2 ? W - 1 : W;
        for (std::size_t h = 0; h < H; ++h) {
          if ((kh == 0 && h == 0) || (kh == 2 && h + 1 == H)) continue;
          const std::size_t hh = h + kh - 1;
          fn(row, h * W + w0, (c * H + hh) * W + w0 + kw - 1, w1 - w0);
        }
      }
    }
  }
}

const std::vector<double>& im2col(const Tensor& x) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), HW = H * W;
  std::vector<double>& cols = scratch(0);
  cols.assign(C * 9 * HW, 0.0);
  const double* src = x.values().data();
  for_each_patch_run(C, H, W, [&](std::size_t row, std::size_t d, std::size_t s, std::size_t len) {
    std::copy_n(src + s, len, cols.data() + row * HW + d);
  });
  return cols;
}

// Scatter-adds a patch-matrix gradient back onto [C, H, W].
void col2im_add(const double* cols, std::size_t C, std::size_t H, std::size_t W, double* dst) {
  const std::size_t HW = H * W;
  for_each_patch_run(C, H, W, [&](std::size_t row, std::size_t d, std::size_t s, std::size_t len) {
    const double* from = cols + row * HW + d;
    for (std::size_t i = 0; i < len; ++i) dst[s + i] += from[i];
  });
}

}  // namespace

Var conv2d(Var x, Var w, Var bias) {
  const Tensor& X = x.value();
  const Tensor& Wt = w.value();
  const Tensor& Bv = bias.value();
  if (X.rank() != 3) throw ShapeError("conv2d: input must be [C, H, W], got " + shape_str(X.shape()));
  if (Wt.rank() != 4 || Wt.dim(2) != 3 || Wt.dim(3) != 3 || Wt.dim(1) != X.dim(0)) {
    throw ShapeError("conv2d: kernel " + shape_str(Wt.shape()) + " incompatible with input " +
                     shape_str(X.shape()));
  }
  if (Bv.rank() != 1 || Bv.dim(0) != Wt.dim(0)) throw ShapeError("conv2d: bias must be [Cout]");
  const std::size_t cin = X.dim(0), H = X.dim(1), W = X.dim(2), cout = Wt.dim(0);
  const Index hw = static_cast<Index>(H * W), kk = static_cast<Index>(cin * 9),
              co = static_cast<Index>(cout);

  const std::vector<double>& cols = im2col(X);
  Tensor Y = Tensor::zeros({cout, H, W});
  MatMap y(Y.values().data(), co, hw);
  y.noalias() = ConstMatMap(Wt.values().data(), co, kk) * ConstMatMap(cols.data(), kk, hw);
  y.colwise() += Eigen::Map<const Eigen::VectorXd>(Bv.values().data(), co);

  return x.tape->record(
      std::move(Y), {x, w, bias}, [x, w, bias, cin, H, W, hw, kk, co](Tape& t, std::size_t self) {
        const ConstMatMap g(t.grad_buffer(self).data(), co, hw);
        if (t.requires_grad(bias)) {
          double* db = t.grad_buffer(bias).data();
          for (Index c = 0; c < co; ++c) {
            double s = 0.0;
            for (Index i = 0; i < hw; ++i) s += g(c, i);
            db[c] += s;
          }
        }
        if (t.requires_grad(w)) {
          const std::vector<double>& cols = im2col(t.value(x));
          MatMap(t.grad_buffer(w).data(), co, kk).noalias() += g * ConstMatMap(cols.data(), kk, hw).transpose();
        }
        if (t.requires_grad(x)) {
          std::vector<double>& buf = scratch(1);
          buf.resize(static_cast<std::size_t>(hw * kk));
          MatMap dcols(buf.data(), kk, hw);
          dcols.noalias() = ConstMatMap(t.value(w).values().data(), co, kk).transpose() * g;
          col2im_add(buf.data(), cin, H, W, t.grad_buffer(x).data());
        }
      });
}

Var gru_sequence(Var xz, Var xr, Var xn, Var uz, Var ur, Var un) {
  const Tensor& Xz = xz.value();
  SEDATTACK_REQUIRE(Xz.rank() == 2, "gru_sequence: projections must be [T, H]");
  const Index T = static_cast<Index>(Xz.dim(0)), H = static_cast<Index>(Xz.dim(1));
  SEDATTACK_REQUIRE(xr.shape() == Xz.shape() && xn.shape() == Xz.shape(),
                    "gru_sequence: projection shapes differ");
  for (Var u : {uz, ur, un}) {
    SEDATTACK_REQUIRE(u.value().rank() == 2 && u.value().dim(0) == Xz.dim(1) && u.value().dim(1) == Xz.dim(1),
                      "gru_sequence: recurrent weights must be [H, H]");
  }
  // Gates per step, kept for backward.
  auto z = std::make_shared<RowMatrix>(T, H);
  auto r = std::make_shared<RowMatrix>(T, H);
  auto n = std::make_shared<RowMatrix>(T, H);
  Tensor out = Tensor::zeros({Xz.dim(0), Xz.dim(1)});
  MatMap hs(out.values().data(), T, H);
  const ConstMatMap Uz(uz.value().values().data(), H, H), Ur(ur.value().values().data(), H, H),
      Un(un.value().values().data(), H, H);
  const ConstMatMap Pz(Xz.values().data(), T, H), Pr(xr.value().values().data(), T, H),
      Pn(xn.value().values().data(), T, H);
  Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(H);
  for (Index t = 0; t < T; ++t) {
    z->row(t) = (Pz.row(t) + h * Uz).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    r->row(t) = (Pr.row(t) + h * Ur).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    const Eigen::RowVectorXd rh = r->row(t).cwiseProduct(h);
    n->row(t) = (Pn.row(t) + rh * Un).unaryExpr([](double v) { return std::tanh(v); });
    h = n->row(t) + z->row(t).cwiseProduct(h - n->row(t));
    hs.row(t) = h;
  }

  return xz.tape->record(std::move(out), {xz, xr, xn, uz, ur, un},
                         [=](Tape& tp, std::size_t self) {
    const ConstMatMap g(tp.grad_buffer(self).data(), T, H);
    const ConstMatMap hs(tp.value(self).values().data(), T, H);
    const ConstMatMap Uz(tp.value(uz).values().data(), H, H), Ur(tp.value(ur).values().data(), H, H),
        Un(tp.value(un).values().data(), H, H);
    RowMatrix daz(T, H), dar(T, H), dan(T, H);
    RowMatrix hprev(T, H);
    Eigen::RowVectorXd dh = Eigen::RowVectorXd::Zero(H);
    for (Index t = T - 1; t >= 0; --t) {
      const Eigen::RowVectorXd hp = t > 0 ? Eigen::RowVectorXd(hs.row(t - 1)) : Eigen::RowVectorXd::Zero(H);
      hprev.row(t) = hp;
      dh += g.row(t);
      const auto zt = z->row(t), rt = r->row(t), nt = n->row(t);
      const Eigen::RowVectorXd dn = dh.cwiseProduct((1.0 - zt.array()).matrix());
      const Eigen::RowVectorXd dz = dh.cwiseProduct(hp - nt);
      Eigen::RowVectorXd dhp = dh.cwiseProduct(zt);
      dan.row(t) = dn.array() * (1.0 - nt.array().square());
      const Eigen::RowVectorXd drh = dan.row(t) * Un.transpose();
      const Eigen::RowVectorXd dr = drh.cwiseProduct(hp);
      dhp += drh.cwiseProduct(rt);
      daz.row(t) = dz.array() * zt.array() * (1.0 - zt.array());
      dar.row(t) = dr.array() * rt.array() * (1.0 - rt.array());
      dhp.noalias() += daz.row(t) * Uz.transpose();
      dhp.noalias() += dar.row(t) * Ur.transpose();
      dh = dhp;
    }
    if (tp.requires_grad(xz)) MatMap(tp.grad_buffer(xz).data(), T, H) += daz;
    if (tp.requires_grad(xr)) MatMap(tp.grad_buffer(xr).data(), T, H) += dar;
    if (tp.requires_grad(xn)) MatMap(tp.grad_buffer(xn).data(), T, H) += dan;
    if (tp.requires_grad(uz)) MatMap(tp.grad_buffer(uz).data(), H, H).noalias() += hprev.transpose() * daz;
    if (tp.requires_grad(ur)) MatMap(tp.grad_buffer(ur).data(), H, H).noalias() += hprev.transpose() * dar;
    if (tp.requires_grad(un)) {
      const RowMatrix rh = r->cwiseProduct(hprev);
      MatMap(tp.grad_buffer(un).data(), H, H).noalias() += rh.transpose() * dan;
    }
  });
}

Var maxpool_freq(Var x) {
  const Tensor& X = x.value();
  SEDATTACK_REQUIRE(X.rank() == 3 && X.dim(2) >= 2, "maxpool_freq: input must be [C, H, W>=2]");
  const std::size_t rows = X.dim(0) * X.dim(1), win = X.dim(2), wout = win / 2;
  Tensor Y = Tensor::zeros({X.dim(0), X.dim(1), wout});
  std::vector<std::uint32_t> argmax(Y.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < wout; ++c) {
      const std::size_t i0 = r * win + 2 * c;
      const std::size_t pick = X[i0 + 1] > X[i0] ? i0 + 1 : i0;
      Y[r * wout + c] = X[pick];
      argmax[r * wout + c] = static_cast<std::uint32_t>(pick);
    }
  }
  return x.tape->record(std::move(Y), {x}, [x, argmax = std::move(argmax)](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
  });
}

Var flatten_frames(Var x) {
  const Tensor& X = x.value();
  SEDATTACK_REQUIRE(X.rank() == 3, "flatten_frames: input must be [C, T, F]");
  const std::size_t C = X.dim(0), T = X.dim(1), F = X.dim(2);
  Tensor Y = Tensor::zeros({T, C * F});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < F; ++f) Y[t * C * F + c * F + f] = X[(c * T + t) * F + f];
  return x.tape->record(std::move(Y), {x}, [x, C, T, F](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_buffer(self);
    auto& gx = tp.grad_buffer(x);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) gx[(c * T + t) * F + f] += g[t * C * F + c * F + f];
  });
}

Var row(Var x, std::size_t t) {
  const Tensor& X = x.value();
  SEDATTACK_REQUIRE(X.rank() == 2 && t < X.dim(0), "row: index out of range");
  const std::size_t n = X.dim(1);
  Tensor Y({1, n}, std::vector<double>(X.values().begin() + t * n, X.values().begin() + (t + 1) * n));
  return x.tape->record(std::move(Y), {x}, [x, t, n](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_buffer(self);
    auto& gx = tp.grad_buffer(x);
    for (std::size_t j = 0; j < n; ++j) gx[t * n + j] += g[j];
  });
}

Var concat_time(std::span<const Var> parts) {
  SEDATTACK_REQUIRE(!parts.empty(), "concat_time: no inputs");
  const std::size_t n = parts.front().value().shape().back();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    SEDATTACK_REQUIRE(v.rank() == 2 && v.dim(1) == n, "concat_time: column mismatch");
    rows += v.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * n);
  for (const Var& p : parts) {
    const auto& v = p.value().values();
    out.insert(out.end(), v.begin(), v.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape->record(
      Tensor({rows, n}, std::move(out)), parts, [inputs](Tape& t, std::size_t self) {
        const auto& g = t.grad_buffer(self);
        std::size_t offset = 0;
        for (const Var& p : inputs) {
          const std::size_t len = t.value(p).size();
          if (t.requires_grad(p)) {
            auto& gp = t.grad_buffer(p);
            for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
          }
          offset += len;
        }
      });
}

double clamp_probability(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

double bce_term(double pred, double target) {
  const double p = clamp_probability(pred);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

Var bce(Var pred, const Tensor& target) {
  return bce(pred, target, Tensor(target.shape(), std::vector<double>(target.size(), 1.0)));
}

Var bce(Var pred, const Tensor& target, const Tensor& weight) {
  const Tensor& P = pred.value();
  require_same(P, target, "bce");
  require_same(P, weight, "bce weight");
  for (double y : target.values()) {
    if (!(y >= 0.0 && y <= 1.0)) throw ValidationError("bce: target outside [0, 1]");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (weight[i] != 0.0) loss += weight[i] * bce_term(P[i], target[i]);
  }
  // The derivative is taken at the clamped probability and passed through the
  // clamp so saturated outputs still receive a signal.
  return pred.tape->record(Tensor::scalar(loss), {pred},
                           [pred, target, weight](Tape& t, std::size_t self) {
                             const double g = t.grad_buffer(self)[0];
                             const Tensor& P = t.value(pred);
                             auto& gp = t.grad_buffer(pred);
                             for (std::size_t i = 0; i < P.size(); ++i) {
                               if (weight[i] == 0.0) continue;
                               const double p = clamp_probability(P[i]);
                               const double y = target[i];
                               gp[i] += g * weight[i] * (-y / p + (1.0 - y) / (1.0 - p));
                             }
                           });
}

double grad_check(const LossBuilder& fn, const std::vector<Tensor>& inputs,
                  const GradCheckOptions& options) {
  if (!(options.h > 0.0)) throw ValidationError("grad_check: h must be positive");

  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.push_back(tape.leaf(x));
    return fn(tape, leaves).value().item();
  };

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
  const Var loss = fn(tape, leaves);
  const double base = loss.value().item();
  tape.backward(loss);
  if (evaluate(inputs) != base) throw Error("grad_check: loss function is not deterministic");

  std::vector<std::pair<std::size_t, std::size_t>> probes;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i) probes.emplace_back(k, i);
  if (options.max_probes > 0 && options.max_probes < probes.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(probes.begin(), probes.end(), rng);
    probes.resize(options.max_probes);
  }

  std::vector<std::vector<double>> analytic;
  for (const Var& v : leaves) analytic.push_back(tape.grad(v));

  double worst = 0.0;
  std::vector<Tensor> work = inputs;
  for (auto [k, i] : probes) {
    const double x0 = work[k][i];
    work[k][i] = x0 + options.h;
    const double up = evaluate(work);
    work[k][i] = x0 - options.h;
    const double down = evaluate(work);
    work[k][i] = x0;
    const double cd = (up - down) / (2.0 * options.h);
    const double a = analytic[k][i];
    const double denom = std::max({std::abs(a), std::abs(cd), 1e-8});
    worst = std::max(worst, std::abs(a - cd) / denom);
  }
  return worst;
}

AdamState AdamState::for_size(std::size_t n) {
  AdamState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  if (!(lr > 0.0)) throw ValidationError("adam_step: learning rate must be positive");
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
  }
}

Tensor sign_step(const Tensor& delta, const Tensor& grad, double beta) {
  require_same(delta, grad, "sign_step");
  Tensor out = delta;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double g = grad[i];
    out[i] -= beta * static_cast<double>((g > 0.0) - (g < 0.0));
  }
  return out;
}

}  // namespace sedattack::ad
