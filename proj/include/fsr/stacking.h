#pragma once

// Frame stacking: re-segment a T x d feature sequence into super frames of
// fs consecutive frames (fs * d values each), advancing `step` frames at a
// time. step == fs is the non-overlapping layout used for training and
// decoding; step < fs gives the overlapping, DNN-style sliding window.

#include <cstddef>
#include <span>

#include "fsr/types.h"

namespace fsr {

struct StackConfig {
  int fs = 1;
  int step = 1;

  static StackConfig non_overlapping(int fs) { return {fs, fs}; }
  bool is_non_overlapping() const { return step == fs; }
  // Throws std::invalid_argument unless 1 <= step <= fs.
  void validate() const;
};

struct StackedSequence {
  RowMatrix super_frames;  // M x (fs * d)
  LabelSequence labels;    // empty, or M middle-frame labels
  std::size_t source_len = 0;
  StackConfig cfg;

  std::size_t size() const {
    return static_cast<std::size_t>(super_frames.rows());
  }
};

// Number of super frames for a T-frame input: 0 for T == 0, 1 for T <= fs,
// otherwise ceil((T - fs) / step) + 1. Frames past the end are padded.
std::size_t stacked_length(std::size_t num_frames, const StackConfig& cfg);

// Super frame j concatenates frames [j*step, j*step + fs); indices beyond
// T - 1 repeat frame T - 1.
StackedSequence stack(const FeatureMatrix& feats, const StackConfig& cfg);

// Label of super frame j is labels[min(j*step + (fs-1)/2, T-1)].
LabelSequence middle_label(std::span<const StateId> labels,
                           const StackConfig& cfg);

// Stacks features and attaches middle labels; labels.size() must equal T.
StackedSequence stack_with_labels(const FeatureMatrix& feats,
                                  std::span<const StateId> labels,
                                  const StackConfig& cfg);

}  // namespace fsr
