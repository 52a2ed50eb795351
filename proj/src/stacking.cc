#include "fsr/stacking.h"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fsr {

void StackConfig::validate() const {
  if (fs < 1 || step < 1 || step > fs) {
    throw std::invalid_argument("stack config requires 1 <= step <= fs (fs=" +
                                std::to_string(fs) +
                                ", step=" + std::to_string(step) + ")");
  }
}

std::size_t stacked_length(std::size_t num_frames, const StackConfig& cfg) {
  cfg.validate();
  const auto fs = static_cast<std::size_t>(cfg.fs);
  const auto step = static_cast<std::size_t>(cfg.step);
  if (num_frames == 0) return 0;
  if (num_frames <= fs) return 1;
  return (num_frames - fs + step - 1) / step + 1;
}

StackedSequence stack(const FeatureMatrix& feats, const StackConfig& cfg) {
  const std::size_t t_len = static_cast<std::size_t>(feats.rows());
  const std::size_t m = stacked_length(t_len, cfg);
  const Eigen::Index d = feats.cols();

  StackedSequence out;
  out.cfg = cfg;
  out.source_len = t_len;
  out.super_frames.resize(static_cast<Eigen::Index>(m), cfg.fs * d);
  for (std::size_t j = 0; j < m; ++j) {
    for (int k = 0; k < cfg.fs; ++k) {
      const std::size_t src = std::min(j * cfg.step + k, t_len - 1);
      out.super_frames.block(static_cast<Eigen::Index>(j), k * d, 1, d) =
          feats.row(static_cast<Eigen::Index>(src));
    }
  }
  return out;
}

LabelSequence middle_label(std::span<const StateId> labels,
                           const StackConfig& cfg) {
  const std::size_t t_len = labels.size();
  const std::size_t m = stacked_length(t_len, cfg);
  const std::size_t mid = static_cast<std::size_t>((cfg.fs - 1) / 2);
  LabelSequence out(m);
  for (std::size_t j = 0; j < m; ++j) {
    out[j] = labels[std::min(j * cfg.step + mid, t_len - 1)];
  }
  return out;
}

StackedSequence stack_with_labels(const FeatureMatrix& feats,
                                  std::span<const StateId> labels,
                                  const StackConfig& cfg) {
  if (labels.size() != static_cast<std::size_t>(feats.rows())) {
    throw std::invalid_argument("label count " + std::to_string(labels.size()) +
                                " != frame count " +
                                std::to_string(feats.rows()));
  }
  StackedSequence out = stack(feats, cfg);
  out.labels = middle_label(labels, cfg);
  return out;
}

}  // namespace fsr
