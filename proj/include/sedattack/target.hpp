#pragma once

// Edits requested by the adversary and the (frame, class) target region they
// induce on the detector's output grid.

#include <vector>

#include "sedattack/features.hpp"
#include "sedattack/grid.hpp"
#include "sedattack/model.hpp"

namespace sedattack {

enum class EditValue : int { kMute = 0, kMirage = 1 };

struct TargetEdit {
  int class_id = 0;
  double start = 0.0;  // seconds, inclusive
  double end = 0.0;    // seconds, exclusive
  EditValue value = EditValue::kMirage;

  // Throws ValidationError unless 0 <= start < end <= clip_seconds.
  void validate(double clip_seconds) const;
  friend bool operator==(const TargetEdit&, const TargetEdit&) = default;
};

// Inclusive frame range.
struct FrameInterval {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t size() const { return last - first + 1; }
  friend bool operator==(const FrameInterval&, const FrameInterval&) = default;
};

// first = floor(start * fps), last = ceil(end * fps) - 1. A 1e-9 slack absorbs
// rounding in start and end so frame-aligned times map to their own frame.
// Throws ValidationError when the interval is empty or exceeds num_frames.
FrameInterval edits_to_frames(const TargetEdit& edit, const MelFrontendConfig& frontend,
                              std::size_t num_frames);

struct TargetPair {
  std::size_t frame;
  std::size_t cls;
  friend bool operator==(const TargetPair&, const TargetPair&) = default;
};

struct TargetRegion {
  BinaryGrid member;  // 1 on target pairs
  std::size_t size() const;
  std::vector<TargetPair> pairs() const;
  bool contains(std::size_t t, std::size_t c) const { return member(t, c) != 0; }
};

// Target values on the region, clean binarized outputs elsewhere.
struct TargetLabelMatrix {
  BinaryGrid y_star;
};

struct TargetSpec {
  TargetRegion region;
  TargetLabelMatrix labels;
};

// Throws ValidationError when two edits demand different values for the same
// pair.
TargetSpec build_target(const std::vector<TargetEdit>& edits, const EventActivityMatrix& y_hat,
                        const MelFrontendConfig& frontend);

}  // namespace sedattack
