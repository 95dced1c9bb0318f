#include <doctest.h>

#include <cmath>
#include <random>

#include "sedattack/autodiff.hpp"
#include "sedattack/error.hpp"
#include "grad_cases.hpp"
#include "support.hpp"

using namespace sedattack;
using namespace sedattack::ad;

namespace {

double naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t co, std::size_t h,
                  std::size_t ww) {
  const std::size_t cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  double acc = b[co];
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const long long y = static_cast<long long>(h) + dy, xx = static_cast<long long>(ww) + dx;
        if (y < 0 || xx < 0 || y >= static_cast<long long>(H) || xx >= static_cast<long long>(W)) continue;
        acc += x[(ci * H + y) * W + xx] * w[((co * cin + ci) * 3 + (dy + 1)) * 3 + (dx + 1)];
      }
  return acc;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("reference values of primitives") {
    Tape tape;
    CHECK(sigmoid(tape.constant(Tensor::scalar(0.0))).value().item() == 0.5);
    CHECK(bce(tape.constant(Tensor::scalar(0.5)), Tensor::scalar(1.0)).value().item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    const Var x = tape.constant(Tensor({1, 5, 5}, std::vector<double>(25, 1.0)));
    const Var w = tape.constant(Tensor({1, 1, 3, 3}, std::vector<double>(9, 1.0)));
    const Var b = tape.constant(Tensor({1}, {0.0}));
    const Tensor y = conv2d(x, w, b).value();
    CHECK(y.shape() == Shape{1, 5, 5});
    CHECK(y[2 * 5 + 2] == 9.0);
    CHECK(y[0] == 4.0);
    CHECK(y[2] == 6.0);
  }

  TEST_CASE("bce clamps probabilities at the floor") {
    CHECK(clamp_probability(0.0) == kProbFloor);
    CHECK(clamp_probability(1.0) == 1.0 - kProbFloor);
    CHECK(std::isfinite(bce_term(0.0, 1.0)));
    CHECK(bce_term(0.0, 1.0) == doctest::Approx(-std::log(kProbFloor)));
    Tape tape;
    CHECK_THROWS_AS(bce(tape.constant(Tensor::scalar(0.5)), Tensor::scalar(1.5)), ValidationError);
  }

  TEST_CASE("closed-form derivatives") {
    {
      Tape tape;
      const Var x = tape.leaf(Tensor::scalar(0.0));
      tape.backward(sum(sigmoid(x)));
      CHECK(tape.grad(x)[0] == doctest::Approx(0.25).epsilon(1e-12));
    }
    {
      Tape tape;
      const Var z = tape.leaf(Tensor::scalar(0.0));
      tape.backward(bce(sigmoid(z), Tensor::scalar(1.0)));
      CHECK(tape.grad(z)[0] == doctest::Approx(-0.5).epsilon(1e-12));
    }
  }

  TEST_CASE("matmul composed with bce matches finite differences") {
    std::mt19937_64 rng(1);
    const Tensor a = testing::random_tensor({4, 3}, rng), b = testing::random_tensor({3, 2}, rng);
    const Tensor t({4, 2}, {1, 0, 0, 1, 1, 1, 0, 0});
    const double err = grad_check(
        [&](Tape&, std::span<const Var> in) { return bce(sigmoid(matmul(in[0], in[1])), t); }, {a, b});
    CHECK(err < 1e-4);
  }

  TEST_CASE("matmul agrees with the triple loop") {
    std::mt19937_64 rng(2);
    const Tensor a = testing::random_tensor({5, 7}, rng), b = testing::random_tensor({7, 3}, rng);
    Tape tape;
    const Tensor c = matmul(tape.constant(a), tape.constant(b)).value();
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 7; ++k) s += a[i * 7 + k] * b[k * 3 + j];
        CHECK(c[i * 3 + j] == doctest::Approx(s).epsilon(1e-12));
      }
    CHECK_THROWS_AS(matmul(tape.constant(a), tape.constant(a)), ShapeError);
  }

  TEST_CASE("conv2d agrees with direct convolution") {
    std::mt19937_64 rng(3);
    const Tensor x = testing::random_tensor({3, 6, 5}, rng);
    const Tensor w = testing::random_tensor({4, 3, 3, 3}, rng);
    const Tensor b = testing::random_tensor({4}, rng);
    Tape tape;
    const Tensor y = conv2d(tape.constant(x), tape.constant(w), tape.constant(b)).value();
    REQUIRE(y.shape() == Shape{4, 6, 5});
    for (std::size_t co = 0; co < 4; ++co)
      for (std::size_t h = 0; h < 6; ++h)
        for (std::size_t ww = 0; ww < 5; ++ww)
          CHECK(y[(co * 6 + h) * 5 + ww] == doctest::Approx(naive_conv(x, w, b, co, h, ww)).epsilon(1e-12));
  }

  TEST_CASE("gru_sequence agrees with the step-wise composition") {
    std::mt19937_64 rng(4);
    const std::size_t T = 6, H = 5;
    std::vector<Tensor> in;
    for (int i = 0; i < 3; ++i) in.push_back(testing::random_tensor({T, H}, rng));
    for (int i = 0; i < 3; ++i) in.push_back(testing::random_tensor({H, H}, rng, -0.5, 0.5));

    Tape tape;
    std::vector<Var> v;
    for (const auto& t : in) v.push_back(tape.constant(t));
    const Tensor fused = gru_sequence(v[0], v[1], v[2], v[3], v[4], v[5]).value();

    Var h = tape.constant(Tensor::zeros({1, H}));
    const Var one = tape.constant(Tensor({1, H}, std::vector<double>(H, 1.0)));
    std::vector<Var> states;
    for (std::size_t t = 0; t < T; ++t) {
      const Var z = sigmoid(add(row(v[0], t), matmul(h, v[3])));
      const Var r = sigmoid(add(row(v[1], t), matmul(h, v[4])));
      const Var n = tanh(add(row(v[2], t), matmul(multiply(r, h), v[5])));
      h = add(multiply(sub(one, z), n), multiply(z, h));
      states.push_back(h);
    }
    const Tensor composed = concat_time(states).value();
    REQUIRE(fused.shape() == composed.shape());
    for (std::size_t i = 0; i < fused.size(); ++i) CHECK(fused[i] == doctest::Approx(composed[i]).epsilon(1e-12));
  }

  TEST_CASE("gradient of every primitive matches central differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CAPTURE(seed);
      for (const auto& c : testing::primitive_grad_cases(seed)) {
        CAPTURE(c.name);
        CHECK(grad_check(c.fn, c.inputs) < 1e-4);
      }
    }
  }

  TEST_CASE("grad_check of a linear function is exact") {
    const double err = grad_check([](Tape&, std::span<const Var> v) { return sum(scale(v[0], 3.0)); },
                                  {Tensor({3}, {0.2, -1.0, 4.0})});
    CHECK(err <= 1e-10);
  }

  TEST_CASE("gradients accumulate over shared branches") {
    for (int k = 1; k <= 4; ++k) {
      Tape tape;
      const Var x = tape.leaf(Tensor({3}, {0.3, -0.2, 0.9}));
      Var total = sigmoid(x);
      for (int i = 1; i < k; ++i) total = add(total, sigmoid(x));
      tape.backward(sum(total));
      Tape single;
      const Var y = single.leaf(Tensor({3}, {0.3, -0.2, 0.9}));
      single.backward(sum(sigmoid(y)));
      const auto g = tape.grad(x), g1 = single.grad(y);
      for (std::size_t i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(k * g1[i]).epsilon(1e-14));
    }
  }

  TEST_CASE("backward contract errors") {
    Tape tape;
    const Var x = tape.leaf(Tensor({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
    const Var s = sum(x);
    tape.backward(s);
    CHECK_THROWS_AS(tape.backward(s), Error);
    Tape other;
    const Var y = other.leaf(Tensor({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(add(x, y), Error);
  }

  TEST_CASE("adam first step, zero gradient and shapes") {
    std::vector<double> p(5, 0.3);
    const std::vector<double> g(5, 1.0);
    AdamState st = AdamState::for_size(5);
    adam_step(p, g, st, 1e-3);
    CHECK(st.step_count == 1);
    for (double v : p) CHECK(v == doctest::Approx(0.3 - 1e-3).epsilon(1e-9));

    std::vector<double> q(3, 0.7);
    AdamState zs = AdamState::for_size(3);
    adam_step(q, std::vector<double>(3, 0.0), zs, 1e-3);
    CHECK(zs.step_count == 1);
    CHECK(q == std::vector<double>(3, 0.7));
    CHECK(zs.first_moment.size() == 3);

    std::vector<double> bad(2, 0.0);
    CHECK_THROWS_AS(adam_step(bad, g, st, 1e-3), ShapeError);
    CHECK_THROWS_AS(adam_step(p, g, st, 0.0), ValidationError);
  }

  TEST_CASE("adam decreases a quadratic") {
    std::vector<double> w{1.0};
    AdamState st = AdamState::for_size(1);
    std::vector<double> f;
    for (int i = 0; i < 100; ++i) {
      f.push_back(w[0] * w[0]);
      const std::vector<double> g{2.0 * w[0]};
      adam_step(w, g, st, 1e-2);
    }
    CHECK(std::abs(w[0]) < 1.0);
    for (std::size_t i = 90; i < f.size(); ++i) CHECK(f[i] < f[i - 1]);
  }

  TEST_CASE("sign step arithmetic") {
    const Tensor d({3}, {0.01, 0.01, -0.3});
    const Tensor out = sign_step(d, Tensor({3}, {5.0, 0.0, -2.0}), 0.001);
    CHECK(out.shape() == d.shape());
    CHECK(out[0] == doctest::Approx(0.009).epsilon(1e-12));
    CHECK(out[1] == 0.01);
    CHECK(out[2] == doctest::Approx(-0.299).epsilon(1e-12));
  }
}
