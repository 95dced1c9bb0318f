#include "sedattack/target.hpp"

#include <cmath>

#include "sedattack/error.hpp"

namespace sedattack {

namespace {
constexpr double kFrameSlack = 1e-9;
}

void TargetEdit::validate(double clip_seconds) const {
  if (class_id < 0 || class_id >= static_cast<int>(kNumClasses))
    throw ValidationError("edit class must be in [0, " + std::to_string(kNumClasses - 1) + "]");
  if (!(start >= 0.0 && start < end && end <= clip_seconds + kFrameSlack)) {
    throw ValidationError("edit interval must satisfy 0 <= start < end <= clip length");
  }
  if (value != EditValue::kMute && value != EditValue::kMirage)
    throw ValidationError("edit value must be 0 (mute) or 1 (mirage)");
}

FrameInterval edits_to_frames(const TargetEdit& edit, const MelFrontendConfig& frontend,
                              std::size_t num_frames) {
  const double fps = frontend.frames_per_second();
  const double lo = std::floor(edit.start * fps + kFrameSlack);
  const double hi = std::ceil(edit.end * fps - kFrameSlack) - 1.0;
  if (lo < 0.0 || hi < lo) {
    throw ValidationError("edit [" + std::to_string(edit.start) + ", " + std::to_string(edit.end) +
                          ") covers no frame");
  }
  if (hi >= static_cast<double>(num_frames)) throw ValidationError("edit extends past the last frame");
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

std::size_t TargetRegion::size() const {
  std::size_t n = 0;
  for (auto v : member.data()) n += v;
  return n;
}

std::vector<TargetPair> TargetRegion::pairs() const {
  std::vector<TargetPair> out;
  for (std::size_t t = 0; t < member.rows(); ++t)
    for (std::size_t c = 0; c < member.cols(); ++c)
      if (member(t, c)) out.push_back({t, c});
  return out;
}

TargetSpec build_target(const std::vector<TargetEdit>& edits, const EventActivityMatrix& y_hat,
                        const MelFrontendConfig& frontend) {
  const std::size_t frames = y_hat.active.rows(), classes = y_hat.active.cols();
  TargetSpec spec{{BinaryGrid(frames, classes, 0)}, {y_hat.active}};
  for (const auto& e : edits) {
    if (e.class_id < 0 || static_cast<std::size_t>(e.class_id) >= classes)
      throw ValidationError("edit class outside the output grid");
    const FrameInterval iv = edits_to_frames(e, frontend, frames);
    const auto v = static_cast<std::uint8_t>(e.value);
    for (std::size_t t = iv.first; t <= iv.last; ++t) {
      auto& m = spec.region.member(t, e.class_id);
      auto& y = spec.labels.y_star(t, e.class_id);
      if (m && y != v) {
        throw ValidationError("conflicting edits on frame " + std::to_string(t) + ", class " +
                              std::to_string(e.class_id));
      }
      m = 1;
      y = v;
    }
  }
  return spec;
}

}  // namespace sedattack
