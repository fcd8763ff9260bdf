#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace hilbertda {

/** Dense linear operator on R^n, row index = output coordinate. */
using DenseOp = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/** Base class of all errors thrown by this library. */
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hilbertda
