#pragma once

// Poincare-ball kernels (curvature -1). Points are Eigen column vectors with
// Euclidean norm strictly below one.

#include "hypalign/errors.hpp"

#include <Eigen/Dense>

#include <string>
#include <string_view>

namespace hypalign::geometry {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Default boundary guard: points are kept at norm <= 1 - kDefaultMargin.
inline constexpr double kDefaultMargin = 1e-5;

/// Tangent/ball norms below this are treated as zero by exp/log.
inline constexpr double kTinyNorm = 1e-12;

/// Ground costs usable for transport between ball points.
enum class CostKind {
  dist,
  dist_squared,
  neg_cosh,
  neg_log_one_plus_cosh,
  log_cosh,
  neg_log_cosh,
  euclidean_squared,
};

std::string_view to_string(CostKind kind);
/// Throws std::invalid_argument on an unknown name.
CostKind parse_cost_kind(std::string_view name);

/// Radially rescales `x` onto the sphere of radius 1 - margin when it lies
/// outside it. margin must be in (0, 1e-2].
Vector project_to_ball(const VectorRef& x, double margin = kDefaultMargin);

/// Mobius addition u (+) v, boundary guarded.
Vector mobius_add(const VectorRef& u, const VectorRef& v,
                  double margin = kDefaultMargin);

double poincare_distance(const VectorRef& u, const VectorRef& v);
double poincare_norm(const VectorRef& u);

/// lambda_p = 2 / (1 - |p|^2).
double conformal_factor(const VectorRef& p);

Vector exp_map(const VectorRef& p, const VectorRef& u,
               double margin = kDefaultMargin);
Vector log_map(const VectorRef& p, const VectorRef& v);

/// exp/log at the origin: tanh(|u|) u/|u| and artanh(|x|) x/|x|.
Vector exp0(const VectorRef& u, double margin = kDefaultMargin);
Vector log0(const VectorRef& x);

/// T(x) = P (v (+) x) with P special orthogonal.
Vector apply_isometry(const Matrix& P, const VectorRef& v, const VectorRef& x,
                      double margin = kDefaultMargin);

/// True when P^T P = I and det P = +1 within `tol`.
bool is_special_orthogonal(const Matrix& P, double tol = 1e-8);

double ground_cost(const VectorRef& u, const VectorRef& v, CostKind kind);

/// Gradient of ground_cost(u, v, kind) with respect to u. Costs are symmetric,
/// so the gradient in v is ground_cost_grad(v, u, kind). At u == v the
/// non-smooth `dist` cost returns the zero subgradient.
Vector ground_cost_grad(const VectorRef& u, const VectorRef& v, CostKind kind);

// Vector-Jacobian products used by reverse-mode differentiation. Each takes
// the forward inputs and an upstream gradient and returns the gradient with
// respect to the named input. The guarded variants include the Jacobian of
// project_to_ball applied to the raw result.

struct MobiusAddGrad {
  Vector du;
  Vector dv;
};
MobiusAddGrad mobius_add_vjp(const VectorRef& u, const VectorRef& v,
                             const VectorRef& upstream,
                             double margin = kDefaultMargin);

Vector exp0_vjp(const VectorRef& u, const VectorRef& upstream,
                double margin = kDefaultMargin);
Vector log0_vjp(const VectorRef& x, const VectorRef& upstream);
Vector project_to_ball_vjp(const VectorRef& x, const VectorRef& upstream,
                           double margin = kDefaultMargin);

namespace detail {

// Unchecked kernels; callers guarantee finite, dimension-matched input.

/// Raw Mobius addition without boundary projection.
Vector mobius_add_raw(const VectorRef& u, const VectorRef& v);

/// 2|u - v|^2 / ((1 - |u|^2)(1 - |v|^2)), i.e. cosh(d) - 1.
double cosh_distance_minus_one(const VectorRef& u, const VectorRef& v);

/// arccosh(1 + t) evaluated without cancellation for small t.
double acosh1p(double t);

double cost_from_parts(double cosh_minus_one, double euclid_sq, CostKind kind);

/// Derivative of a hyperbolic cost with respect to cosh(d) - 1. Infinite for
/// `dist` at zero distance; not defined for euclidean_squared.
double cost_slope(double cosh_minus_one, CostKind kind);

void check_finite(const VectorRef& x, const char* what);
void check_inside(const VectorRef& x, const char* what);
void check_same_dim(const VectorRef& u, const VectorRef& v);

}  // namespace detail

}  // namespace hypalign::geometry
