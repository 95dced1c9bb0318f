#pragma once

#include <random>
#include <string>
#include <vector>

#include "sedattack/autodiff.hpp"
#include "support.hpp"

namespace testing {

struct GradCase {
  std::string name;
  sedattack::ad::LossBuilder fn;
  std::vector<sedattack::ad::Tensor> inputs;
};

// Projects an op output onto fixed random weights so every element carries a
// distinct gradient.
inline sedattack::ad::Var project(sedattack::ad::Var y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return sedattack::ad::sum(sedattack::ad::multiply(y, y.tape->constant(random_tensor(y.shape(), rng))));
}

// One scalar loss per differentiable primitive, inputs drawn from the seed.
inline std::vector<GradCase> primitive_grad_cases(std::uint64_t seed) {
  using namespace sedattack::ad;
  using Args = std::span<const Var>;
  std::mt19937_64 rng(seed);
  auto t = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(s, rng, lo, hi); };
  std::vector<GradCase> cases;
  cases.push_back({"matmul", [](Tape&, Args v) { return project(matmul(v[0], v[1])); }, {t({3, 4}), t({4, 2})}});
  cases.push_back({"add", [](Tape&, Args v) { return project(add(v[0], v[1])); }, {t({3, 4}), t({3, 4})}});
  cases.push_back({"add bias", [](Tape&, Args v) { return project(add(v[0], v[1])); }, {t({3, 4}), t({4})}});
  cases.push_back({"sub", [](Tape&, Args v) { return project(sub(v[0], v[1])); }, {t({2, 3}), t({2, 3})}});
  cases.push_back({"multiply", [](Tape&, Args v) { return project(multiply(v[0], v[1])); }, {t({2, 3}), t({2, 3})}});
  cases.push_back({"scale", [](Tape&, Args v) { return project(scale(v[0], -2.5)); }, {t({5})}});
  cases.push_back({"sum", [](Tape&, Args v) { return scale(sum(v[0]), 0.7); }, {t({3, 2})}});
  cases.push_back({"reshape", [](Tape&, Args v) { return project(reshape(v[0], {3, 2})); }, {t({6})}});
  cases.push_back({"sigmoid", [](Tape&, Args v) { return project(sigmoid(v[0])); }, {t({7}, -3, 3)}});
  cases.push_back({"tanh", [](Tape&, Args v) { return project(tanh(v[0])); }, {t({7}, -2, 2)}});
  cases.push_back({"relu", [](Tape&, Args v) { return project(relu(v[0])); }, {t({9})}});
  cases.push_back({"log_floor", [](Tape&, Args v) { return project(log_floor(v[0], 1e-10)); }, {t({6}, 0.1, 2.0)}});
  cases.push_back({"conv2d", [](Tape&, Args v) { return project(conv2d(v[0], v[1], v[2])); },
                   {t({2, 4, 6}), t({3, 2, 3, 3}), t({3})}});
  cases.push_back({"maxpool_freq", [](Tape&, Args v) { return project(maxpool_freq(v[0])); }, {t({2, 3, 6})}});
  cases.push_back({"flatten_frames", [](Tape&, Args v) { return project(flatten_frames(v[0])); }, {t({2, 3, 4})}});
  cases.push_back({"row", [](Tape&, Args v) { return project(row(v[0], 2)); }, {t({4, 3})}});
  cases.push_back({"concat_time",
                   [](Tape&, Args v) {
                     const Var parts[] = {v[0], v[1]};
                     return project(concat_time(parts));
                   },
                   {t({2, 3}), t({1, 3})}});
  cases.push_back({"gru_sequence",
                   [](Tape&, Args v) { return project(gru_sequence(v[0], v[1], v[2], v[3], v[4], v[5])); },
                   {t({5, 4}), t({5, 4}), t({5, 4}), t({4, 4}, -0.5, 0.5), t({4, 4}, -0.5, 0.5),
                    t({4, 4}, -0.5, 0.5)}});
  const Tensor target = t({2, 3}, 0.0, 1.0);
  const Tensor weight({2, 3}, {1, 0, 1, 2, 1, 0});
  cases.push_back({"bce", [target](Tape&, Args v) { return bce(v[0], target); }, {t({2, 3}, 0.05, 0.95)}});
  cases.push_back({"bce weighted", [target, weight](Tape&, Args v) { return bce(v[0], target, weight); },
                   {t({2, 3}, 0.05, 0.95)}});
  return cases;
}

}  // namespace testing
