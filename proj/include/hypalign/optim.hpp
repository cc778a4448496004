#pragma once

#include "hypalign/geometry.hpp"

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace hypalign::optim {

using Matrix = Eigen::MatrixXd;

enum class Manifold {
  /// Column vector in the open unit ball.
  ball,
  /// Square matrix in SO(d).
  stiefel_special,
  euclidean,
};

/// Mutable view of one parameter tensor living on a manifold.
struct ParamView {
  Manifold manifold;
  Eigen::Map<Matrix> value;
};

/// Euclidean gradient to Riemannian gradient: (1 - |p|^2)^2 / 4 scaling on the
/// ball, tangent projection G - P sym(P^T G) on SO(d), identity otherwise.
Matrix riemannian_grad(Manifold manifold, const Matrix& point, const Matrix& egrad);

/// Moves `point` along `step`: exp map + boundary guard on the ball, QR
/// retraction with positive R diagonal and det +1 on SO(d), addition otherwise.
/// A zero step returns the point bit for bit.
Matrix retract(Manifold manifold, const Matrix& point, const Matrix& step,
               double margin = geometry::kDefaultMargin);

enum class OptimizerKind { radam, rsgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// One update of every parameter from its Euclidean gradient.
  virtual void step(std::span<ParamView> params, std::span<const Matrix> grads) = 0;
  virtual int steps_taken() const = 0;
};

/// p <- retract(p, -lr * rgrad(p)).
class Rsgd final : public Optimizer {
 public:
  explicit Rsgd(double lr, double margin = geometry::kDefaultMargin);
  void step(std::span<ParamView> params, std::span<const Matrix> grads) override;
  int steps_taken() const override { return t_; }

 private:
  double lr_;
  double margin_;
  int t_ = 0;
};

/// Riemannian Adam. First moments are kept per coordinate and reused across
/// steps without parallel transport; second moments are one scalar (squared
/// Riemannian norm) per ball/SO(d) tensor and per coordinate for Euclidean
/// tensors.
class Radam final : public Optimizer {
 public:
  explicit Radam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                 double margin = geometry::kDefaultMargin);
  void step(std::span<ParamView> params, std::span<const Matrix> grads) override;
  int steps_taken() const override { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  double margin_;
  int t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr);

}  // namespace hypalign::optim
