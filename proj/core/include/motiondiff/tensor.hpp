#pragma once

#include <Eigen/Dense>

namespace motiondiff {

// Activations are stored as (batch * frames) x channels, row-major so that the
// frames of one clip form a contiguous block of rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

}  // namespace motiondiff
