#pragma once

#include "hypalign/geometry.hpp"
#include "hypalign/point_cloud.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace testing_support {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Uniform direction, radius uniform in [0, max_norm].
inline VectorXd random_ball_point(std::mt19937_64& rng, int d, double max_norm = 0.9) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, max_norm);
  VectorXd v(d);
  for (int k = 0; k < d; ++k) v[k] = normal(rng);
  return v.normalized() * unif(rng);
}

inline VectorXd random_vector(std::mt19937_64& rng, int d, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  VectorXd v(d);
  for (int k = 0; k < d; ++k) v[k] = normal(rng);
  return v;
}

// Haar-ish rotation from a Householder QR with sign fix, independent of the
// library's retraction code.
inline MatrixXd random_rotation(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> normal;
  MatrixXd G(d, d);
  for (int i = 0; i < d * d; ++i) G.data()[i] = normal(rng);
  Eigen::HouseholderQR<MatrixXd> qr(G);
  MatrixXd Q = qr.householderQ();
  const MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < d; ++k) {
    if (R(k, k) < 0) Q.col(k) *= -1.0;
  }
  if (Q.determinant() < 0) Q.col(0) *= -1.0;
  return Q;
}

inline hypalign::PointCloud random_cloud(std::mt19937_64& rng, int n, int d,
                                         double max_norm = 0.8,
                                         const std::string& prefix = "p") {
  hypalign::Points pts(n, d);
  std::vector<std::string> labels;
  for (int i = 0; i < n; ++i) {
    pts.row(i) = random_ball_point(rng, d, max_norm).transpose();
    labels.push_back(prefix + std::to_string(i));
  }
  return hypalign::PointCloud::uniform(std::move(labels), std::move(pts));
}

// Closed-form hyperbolic distance with std::acosh, used as an oracle.
inline double oracle_distance(const VectorXd& u, const VectorXd& v) {
  const double arg =
      1.0 + 2.0 * (u - v).squaredNorm() / ((1.0 - u.squaredNorm()) * (1.0 - v.squaredNorm()));
  return std::acosh(arg);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// Relative error of two gradient vectors in the max norm.
inline double relative_error(const MatrixXd& a, const MatrixXd& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-12});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

// Central finite differences of f with respect to every entry of x.
inline MatrixXd numeric_gradient(const std::function<double(const MatrixXd&)>& f, MatrixXd x,
                                 double h = 1e-5) {
  MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double fp = f(x);
    x.data()[i] = keep - h;
    const double fm = f(x);
    x.data()[i] = keep;
    g.data()[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace testing_support
