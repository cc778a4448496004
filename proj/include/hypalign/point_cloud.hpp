#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace hypalign {

/// Row-major n x d storage: row(i).transpose() is a contiguous column vector.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labeled discrete measure on the Poincare ball.
struct PointCloud {
  std::vector<std::string> labels;
  Points points;
  Eigen::VectorXd weights;

  /// Uniform weights 1/n.
  static PointCloud uniform(std::vector<std::string> labels, Points points);

  std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }

  auto point(std::size_t i) const { return points.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Throws std::invalid_argument when lengths disagree, weights are not a
  /// probability vector (tolerance 1e-9) or any point is outside the ball.
  void validate() const;
};

}  // namespace hypalign
