#pragma once

#include <Eigen/Dense>

namespace edora {

using Scalar = double;
using Index = Eigen::Index;

// Row-major storage so a Matrix serializes as a flat row-major payload.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace edora
