#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "sedattack/autodiff.hpp"
#include "sedattack/model.hpp"
#include "sedattack/scene.hpp"
#include "sedattack/seed.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sedattack_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline sedattack::ad::Tensor random_tensor(sedattack::ad::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                           double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(sedattack::ad::shape_size(shape));
  for (double& x : v) x = u(rng);
  return sedattack::ad::Tensor(std::move(shape), std::move(v));
}

inline std::vector<double> sine(double freq, double amp, std::size_t n, int sr) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sr);
  return out;
}

// Small model trained for a few epochs; cached per process.
inline const sedattack::ModelParams& quick_model() {
  static const sedattack::ModelParams params = [] {
    sedattack::SceneOptions opt;
    const auto scenes = sedattack::make_dataset(7, 48, opt);
    std::vector<sedattack::LabeledExample> data;
    for (const auto& s : scenes) {
      data.push_back({sedattack::frontend(s.audio, opt.frontend).frames, s.label.active});
    }
    sedattack::TrainConfig cfg;
    cfg.epochs = 6;
    cfg.seed = 3;
    return sedattack::train(sedattack::ModelParams::initialize(11), data, cfg).params;
  }();
  return params;
}

}  // namespace testing
