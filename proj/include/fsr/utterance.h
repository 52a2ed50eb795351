#pragma once

#include <string>

#include "fsr/types.h"

namespace fsr {

// Features with a frame-level state alignment and the word transcript.
struct AlignedUtterance {
  std::string id;
  FeatureMatrix features;
  LabelSequence labels;
  WordSequence transcript;

  std::size_t num_frames() const {
    return static_cast<std::size_t>(features.rows());
  }
  bool operator==(const AlignedUtterance&) const = default;
};

}  // namespace fsr
