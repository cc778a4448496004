#include "hypalign/point_cloud.hpp"

#include <cmath>
#include <stdexcept>

namespace hypalign {

PointCloud PointCloud::uniform(std::vector<std::string> labels, Points points) {
  PointCloud cloud;
  const auto n = points.rows();
  cloud.labels = std::move(labels);
  cloud.points = std::move(points);
  cloud.weights = Eigen::VectorXd::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  return cloud;
}

void PointCloud::validate() const {
  if (labels.size() != size() || weights.size() != points.rows()) {
    throw std::invalid_argument("point cloud: labels, points and weights disagree in length");
  }
  if (size() == 0) throw std::invalid_argument("point cloud is empty");
  if (dim() < 1) throw std::invalid_argument("point cloud dimension must be >= 1");
  if (!points.allFinite()) throw std::invalid_argument("point cloud has non-finite coordinates");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("point cloud weights must be nonnegative and sum to 1");
  }
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (!(points.row(i).squaredNorm() < 1.0)) {
      throw std::invalid_argument("point '" + labels[static_cast<std::size_t>(i)] +
                                  "' lies outside the unit ball");
    }
  }
}

}  // namespace hypalign
