#pragma once

#include <Eigen/Dense>

namespace sbrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace sbrl
