#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace fsr {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// T x d, one acoustic feature vector per row.
using FeatureMatrix = RowMatrix;

// Acoustic-model output class (tied HMM state).
using StateId = std::uint32_t;
using WordId = std::uint32_t;

using LabelSequence = std::vector<StateId>;
using WordSequence = std::vector<WordId>;

}  // namespace fsr
