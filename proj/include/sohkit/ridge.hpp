#pragma once

// Closed-form ridge regression with an unpenalized intercept:
//   minimize  sum_r ||y_r - W^T x_r - b||^2 + lambda * ||W||_F^2
// Columns of Y are independent targets sharing one design.

#include <Eigen/Dense>

namespace sohkit {

struct RidgeFit {
  Eigen::MatrixXd weights;  // p x m
  Eigen::RowVectorXd bias;  // m
};

// lambda == 0 requires a full-column-rank centered design, otherwise
// SingularSystemError. Uses the dual (n x n) system when n < p.
RidgeFit fit_ridge(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda);

}  // namespace sohkit
