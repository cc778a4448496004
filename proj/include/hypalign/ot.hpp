#pragma once

#include "hypalign/errors.hpp"
#include "hypalign/geometry.hpp"
#include "hypalign/point_cloud.hpp"

#include <Eigen/Dense>

#include <optional>

namespace hypalign::ot {

using geometry::CostKind;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SinkhornConfig {
  double epsilon = 1.0;
  int max_iters = 2000;
  /// Stop once the L-infinity row-marginal violation drops below this.
  double tolerance = 1e-6;
  /// Log-sum-exp updates on dual potentials. The scaling form is used only
  /// when this is false and epsilon >= 0.05 * median(C).
  bool log_domain = true;

  void validate() const;
};

/// Transport plan with its prescribed marginals.
struct Coupling {
  Matrix plan;
  Vector a;
  Vector b;

  /// max(|plan 1 - a|_inf, |plan^T 1 - b|_inf)
  double marginal_violation() const;
  /// Column index of the largest entry of every row (first on ties).
  std::vector<std::size_t> row_argmax() const;
};

/// Dual potentials f (rows) and g (columns), in cost units.
struct Potentials {
  Vector f;
  Vector g;
};

struct SinkhornResult {
  Coupling coupling;
  Potentials potentials;
  /// sum_ij C_ij pi_ij
  double transport_cost = 0.0;
  /// Entropic objective <C, pi> + eps KL(pi | a b^T), evaluated through the
  /// dual: <a, f> + <b, g> - eps (sum(pi) - 1).
  double objective = 0.0;
  int iterations = 0;
  /// False when max_iters was reached before the tolerance.
  bool converged = false;
  bool used_log_domain = true;
};

/// C_ij = ground_cost(x_i, y_j, kind). Throws on dimension mismatch.
Matrix cost_matrix(const PointCloud& X, const PointCloud& Y, CostKind kind);

/// Entropic OT between weight vectors a, b for the cost matrix C. `warm`
/// seeds the potentials. Throws std::invalid_argument on malformed input and
/// NumericalError when the kernel produces NaN.
SinkhornResult sinkhorn(const Matrix& C, const Vector& a, const Vector& b,
                        const SinkhornConfig& cfg, const Potentials* warm = nullptr);

/// Warm-start cache for the three problems of a divergence evaluation.
struct DivergenceWarmStart {
  std::optional<Potentials> xy;
  std::optional<Potentials> xx;
  std::optional<Potentials> yy;
};

struct DivergenceResult {
  double value = 0.0;
  /// d value / d y_j, one row per point of Y.
  Points grad_y;
  SinkhornResult xy;
  SinkhornResult xx;
  SinkhornResult yy;
  bool converged() const { return xy.converged && xx.converged && yy.converged; }
};

/// W(X, Y) - (W(X, X) + W(Y, Y)) / 2 with W the entropic objective, and its
/// gradient in Y's coordinates computed from the converged plans.
DivergenceResult sinkhorn_divergence(const PointCloud& X, const PointCloud& Y, CostKind kind,
                                     const SinkhornConfig& cfg,
                                     DivergenceWarmStart* warm = nullptr);

/// Geometric epsilon decay eps_t = eps0 * decay^t for t = 0..steps.
struct AnnealSchedule {
  double epsilon0 = 10.0;
  double decay = 0.99;
  int steps = 200;

  /// Decay chosen so that eps_steps = epsilon_final.
  static AnnealSchedule to_final(double epsilon0, double epsilon_final, int steps);
  void validate() const;
};

double anneal(const AnnealSchedule& s, int t);

}  // namespace hypalign::ot
