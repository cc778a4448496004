#include "hypalign/geometry.hpp"

#include "hypalign/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace hypalign::geometry {

namespace {

// Largest norm fed to artanh when rounding pushes a value onto the boundary.
constexpr double kArtanhCap = 1.0 - 1e-15;

void check_margin(double margin) {
  if (!(margin > 0.0 && margin <= 1e-2)) {
    throw std::invalid_argument("boundary margin must lie in (0, 1e-2], got " +
                                std::to_string(margin));
  }
}

// Jacobian-vector product of the radial map x -> h(|x|) x/|x|, whose
// Jacobian (h/r) I + (h' - h/r) xhat xhat^T is symmetric.
Vector radial_vjp(const VectorRef& x, const VectorRef& g, double h_over_r,
                  double h_prime) {
  const double r = x.norm();
  if (r < kTinyNorm) {
    return h_prime * g;
  }
  const Vector xhat = x / r;
  return h_over_r * g + (h_prime - h_over_r) * xhat.dot(g) * xhat;
}

}  // namespace

std::string_view to_string(CostKind kind) {
  switch (kind) {
    case CostKind::dist: return "dist";
    case CostKind::dist_squared: return "dist_squared";
    case CostKind::neg_cosh: return "neg_cosh";
    case CostKind::neg_log_one_plus_cosh: return "neg_log_one_plus_cosh";
    case CostKind::log_cosh: return "log_cosh";
    case CostKind::neg_log_cosh: return "neg_log_cosh";
    case CostKind::euclidean_squared: return "euclidean_squared";
  }
  throw std::invalid_argument("unknown cost kind");
}

CostKind parse_cost_kind(std::string_view name) {
  for (auto kind : {CostKind::dist, CostKind::dist_squared, CostKind::neg_cosh,
                    CostKind::neg_log_one_plus_cosh, CostKind::log_cosh,
                    CostKind::neg_log_cosh, CostKind::euclidean_squared}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown cost kind '" + std::string(name) + "'");
}

namespace detail {

void check_finite(const VectorRef& x, const char* what) {
  if (!x.allFinite()) {
    throw NumericalError(std::string(what) + " has non-finite entries");
  }
}

void check_inside(const VectorRef& x, const char* what) {
  check_finite(x, what);
  if (!(x.squaredNorm() < 1.0)) {
    throw std::domain_error(std::string(what) +
                            " lies on or outside the unit ball");
  }
}

void check_same_dim(const VectorRef& u, const VectorRef& v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("dimension mismatch: " +
                                std::to_string(u.size()) + " vs " +
                                std::to_string(v.size()));
  }
  if (u.size() == 0) {
    throw std::invalid_argument("points must have dimension >= 1");
  }
}

Vector mobius_add_raw(const VectorRef& u, const VectorRef& v) {
  const double uv = u.dot(v);
  const double uu = u.squaredNorm();
  const double vv = v.squaredNorm();
  const double num_u = 1.0 + 2.0 * uv + vv;
  const double num_v = 1.0 - uu;
  const double den = 1.0 + 2.0 * uv + uu * vv;
  return (num_u * u + num_v * v) / den;
}

double cosh_distance_minus_one(const VectorRef& u, const VectorRef& v) {
  const double alpha = 1.0 - u.squaredNorm();
  const double beta = 1.0 - v.squaredNorm();
  return 2.0 * (u - v).squaredNorm() / (alpha * beta);
}

double acosh1p(double t) {
  if (!(t > 0.0)) return 0.0;
  return std::log1p(t + std::sqrt(t * (t + 2.0)));
}

double cost_from_parts(double t, double euclid_sq, CostKind kind) {
  switch (kind) {
    case CostKind::dist: return acosh1p(t);
    case CostKind::dist_squared: {
      const double d = acosh1p(t);
      return d * d;
    }
    case CostKind::neg_cosh: return -(1.0 + t);
    case CostKind::neg_log_one_plus_cosh: return -std::log(2.0 + t);
    case CostKind::log_cosh: return std::log1p(t);
    case CostKind::neg_log_cosh: return -std::log1p(t);
    case CostKind::euclidean_squared: return euclid_sq;
  }
  throw std::invalid_argument("unknown cost kind");
}

double cost_slope(double t, CostKind kind) {
  switch (kind) {
    case CostKind::dist:
      return t > 0.0 ? 1.0 / std::sqrt(t * (t + 2.0))
                     : std::numeric_limits<double>::infinity();
    case CostKind::dist_squared: {
      const double d = acosh1p(t);
      return d < 1e-8 ? 2.0 : 2.0 * d / std::sqrt(t * (t + 2.0));
    }
    case CostKind::neg_cosh: return -1.0;
    case CostKind::neg_log_one_plus_cosh: return -1.0 / (2.0 + t);
    case CostKind::log_cosh: return 1.0 / (1.0 + t);
    case CostKind::neg_log_cosh: return -1.0 / (1.0 + t);
    case CostKind::euclidean_squared: break;
  }
  throw std::invalid_argument("cost_slope: not a hyperbolic cost");
}

}  // namespace detail

Vector project_to_ball(const VectorRef& x, double margin) {
  check_margin(margin);
  detail::check_finite(x, "point");
  const double r = x.norm();
  const double rmax = 1.0 - margin;
  if (r <= rmax) return x;
  return x * (rmax / r);
}

Vector mobius_add(const VectorRef& u, const VectorRef& v, double margin) {
  detail::check_same_dim(u, v);
  detail::check_finite(u, "u");
  detail::check_finite(v, "v");
  return project_to_ball(detail::mobius_add_raw(u, v), margin);
}

double poincare_distance(const VectorRef& u, const VectorRef& v) {
  detail::check_same_dim(u, v);
  detail::check_inside(u, "u");
  detail::check_inside(v, "v");
  return detail::acosh1p(detail::cosh_distance_minus_one(u, v));
}

double poincare_norm(const VectorRef& u) {
  detail::check_inside(u, "u");
  return 2.0 * std::atanh(u.norm());
}

double conformal_factor(const VectorRef& p) {
  detail::check_inside(p, "p");
  return 2.0 / (1.0 - p.squaredNorm());
}

Vector exp_map(const VectorRef& p, const VectorRef& u, double margin) {
  detail::check_same_dim(p, u);
  detail::check_inside(p, "p");
  detail::check_finite(u, "tangent");
  const double un = u.norm();
  if (un < kTinyNorm) return project_to_ball(p, margin);
  const double half_lambda = 1.0 / (1.0 - p.squaredNorm());
  const Vector step =
      project_to_ball(std::tanh(half_lambda * un) * (u / un), margin);
  return project_to_ball(detail::mobius_add_raw(p, step), margin);
}

Vector log_map(const VectorRef& p, const VectorRef& v) {
  detail::check_same_dim(p, v);
  detail::check_inside(p, "p");
  detail::check_inside(v, "v");
  const Vector w = detail::mobius_add_raw(-p, v);
  const double wn = w.norm();
  if (wn < kTinyNorm) return Vector::Zero(p.size());
  const double scale = (1.0 - p.squaredNorm()) * std::atanh(std::min(wn, kArtanhCap));
  return scale * (w / wn);
}

Vector exp0(const VectorRef& u, double margin) {
  detail::check_finite(u, "tangent");
  const double un = u.norm();
  if (un < kTinyNorm) return u;
  return project_to_ball(std::tanh(un) * (u / un), margin);
}

Vector log0(const VectorRef& x) {
  detail::check_inside(x, "x");
  const double xn = x.norm();
  if (xn < kTinyNorm) return x;
  return std::atanh(std::min(xn, kArtanhCap)) * (x / xn);
}

bool is_special_orthogonal(const Matrix& P, double tol) {
  if (P.rows() != P.cols() || P.rows() == 0 || !P.allFinite()) return false;
  const Matrix gram = P.transpose() * P;
  if ((gram - Matrix::Identity(P.rows(), P.cols())).cwiseAbs().maxCoeff() > tol) {
    return false;
  }
  return std::abs(P.determinant() - 1.0) <= tol;
}

Vector apply_isometry(const Matrix& P, const VectorRef& v, const VectorRef& x,
                      double margin) {
  if (P.rows() != x.size()) {
    throw std::invalid_argument("isometry matrix does not match point dimension");
  }
  if (!is_special_orthogonal(P)) {
    throw std::invalid_argument("isometry matrix is not special orthogonal");
  }
  return project_to_ball(P * mobius_add(v, x, margin), margin);
}

double ground_cost(const VectorRef& u, const VectorRef& v, CostKind kind) {
  detail::check_same_dim(u, v);
  detail::check_inside(u, "u");
  detail::check_inside(v, "v");
  const double euclid_sq = (u - v).squaredNorm();
  const double t = kind == CostKind::euclidean_squared
                       ? 0.0
                       : detail::cosh_distance_minus_one(u, v);
  return detail::cost_from_parts(t, euclid_sq, kind);
}

Vector ground_cost_grad(const VectorRef& u, const VectorRef& v, CostKind kind) {
  detail::check_same_dim(u, v);
  if (kind == CostKind::euclidean_squared) return 2.0 * (u - v);

  const double alpha = 1.0 - u.squaredNorm();
  const double beta = 1.0 - v.squaredNorm();
  const Vector diff = u - v;
  const double delta = diff.squaredNorm();
  const double t = 2.0 * delta / (alpha * beta);
  // d(cosh d)/du
  const Vector dgamma = (4.0 / (alpha * beta)) * (diff + (delta / alpha) * u);

  if (kind == CostKind::dist && !(t > 0.0)) return Vector::Zero(u.size());
  const double outer = detail::cost_slope(t, kind);
  return outer * dgamma;
}

MobiusAddGrad mobius_add_vjp(const VectorRef& u, const VectorRef& v,
                             const VectorRef& upstream, double margin) {
  const double uv = u.dot(v);
  const double uu = u.squaredNorm();
  const double vv = v.squaredNorm();
  const double a = 1.0 + 2.0 * uv + vv;
  const double b = 1.0 - uu;
  const double den = 1.0 + 2.0 * uv + uu * vv;
  const Vector num = a * u + b * v;
  const Vector g = project_to_ball_vjp(num / den, upstream, margin);

  const double gu = g.dot(u);
  const double gv = g.dot(v);
  const double gn = g.dot(num) / (den * den);

  MobiusAddGrad out;
  out.du = (a * g + 2.0 * gu * v - 2.0 * gv * u) / den -
           gn * (2.0 * v + 2.0 * vv * u);
  out.dv = (b * g + 2.0 * gu * (u + v)) / den - gn * (2.0 * u + 2.0 * uu * v);
  return out;
}

Vector exp0_vjp(const VectorRef& u, const VectorRef& upstream, double margin) {
  const double r = u.norm();
  if (r < kTinyNorm) return upstream;
  const double th = std::tanh(r);
  const Vector y = th * (u / r);
  const Vector g = project_to_ball_vjp(y, upstream, margin);
  return radial_vjp(u, g, th / r, 1.0 - th * th);
}

Vector log0_vjp(const VectorRef& x, const VectorRef& upstream) {
  const double r = std::min(x.norm(), kArtanhCap);
  if (r < kTinyNorm) return upstream;
  return radial_vjp(x, upstream, std::atanh(r) / r, 1.0 / (1.0 - r * r));
}

Vector project_to_ball_vjp(const VectorRef& x, const VectorRef& upstream,
                           double margin) {
  const double r = x.norm();
  const double rmax = 1.0 - margin;
  if (r <= rmax) return upstream;
  const Vector xhat = x / r;
  return (rmax / r) * (upstream - xhat.dot(upstream) * xhat);
}

}  // namespace hypalign::geometry
