#pragma once

#include <Eigen/Dense>

namespace pdml {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;

}  // namespace pdml
