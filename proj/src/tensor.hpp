// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

namespace tunlm {

// Activations are row-major with one row per token position and one column
// per feature; biases are stored as 1xN rows.
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace tunlm
