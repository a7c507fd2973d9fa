#include "sohkit/ridge.hpp"

#include <cmath>
#include <string>

#include "sohkit/error.hpp"
#include "sohkit/numfmt.hpp"

namespace sohkit {

RidgeFit fit_ridge(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw PreconditionError("ridge penalty must be a finite value >= 0, got " +
                            format_double(lambda));
  }
  if (x.rows() != y.rows() || x.rows() == 0) {
    throw PreconditionError("ridge: design has " + std::to_string(x.rows()) +
                            " rows, targets have " + std::to_string(y.rows()));
  }

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const Eigen::RowVectorXd y_mean = y.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::MatrixXd yc = y.rowwise() - y_mean;
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();

  RidgeFit fit;
  if (p == 0) {
    fit.weights = Eigen::MatrixXd::Zero(0, y.cols());
    fit.bias = y_mean;
    return fit;
  }

  if (lambda == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
    if (qr.rank() < p) {
      throw SingularSystemError("normal equations are singular (design rank " +
                                std::to_string(qr.rank()) + " < " + std::to_string(p) +
                                " columns); use a ridge penalty > 0");
    }
    fit.weights = qr.solve(yc);
  } else if (n >= p) {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += lambda;
    fit.weights = gram.ldlt().solve(xc.transpose() * yc);
  } else {
    Eigen::MatrixXd kernel = xc * xc.transpose();
    kernel.diagonal().array() += lambda;
    fit.weights = xc.transpose() * kernel.ldlt().solve(yc);
  }
  fit.bias = y_mean - x_mean * fit.weights;
  return fit;
}

}  // namespace sohkit
