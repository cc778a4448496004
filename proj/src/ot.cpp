#include "hypalign/ot.hpp"

#include "hypalign/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace hypalign::ot {

namespace gd = geometry::detail;

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("sinkhorn epsilon must be positive and finite");
  }
  if (max_iters < 1) throw std::invalid_argument("sinkhorn max_iters must be >= 1");
  if (!(tolerance > 0.0)) throw std::invalid_argument("sinkhorn tolerance must be positive");
}

double Coupling::marginal_violation() const {
  const double rows = (plan.rowwise().sum() - a).cwiseAbs().maxCoeff();
  const double cols = (plan.colwise().sum().transpose() - b).cwiseAbs().maxCoeff();
  return std::max(rows, cols);
}

std::vector<std::size_t> Coupling::row_argmax() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(plan.rows()));
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    Eigen::Index j = 0;
    plan.row(i).maxCoeff(&j);
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(j);
  }
  return out;
}

Matrix cost_matrix(const PointCloud& X, const PointCloud& Y, CostKind kind) {
  if (X.dim() != Y.dim()) {
    throw std::invalid_argument("cost_matrix: dimension mismatch " + std::to_string(X.dim()) +
                                " vs " + std::to_string(Y.dim()));
  }
  const auto n = static_cast<Eigen::Index>(X.size());
  const auto m = static_cast<Eigen::Index>(Y.size());
  Matrix C(n, m);
  parallel_for(X.size(), [&](std::size_t i) {
    const auto x = X.point(i);
    const double alpha = 1.0 - x.squaredNorm();
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto y = Y.points.row(j);
      const double euclid_sq = (x.transpose() - y).squaredNorm();
      const double t = 2.0 * euclid_sq / (alpha * (1.0 - y.squaredNorm()));
      C(static_cast<Eigen::Index>(i), j) = gd::cost_from_parts(t, euclid_sq, kind);
    }
  });
  return C;
}

namespace {

void check_simplex(const Vector& w, const char* name) {
  if (w.size() == 0) throw std::invalid_argument(std::string(name) + " is empty");
  if (!w.allFinite() || (w.array() < 0.0).any() || std::abs(w.sum() - 1.0) > 1e-8) {
    throw std::invalid_argument(std::string(name) + " is not a probability vector");
  }
}

double median_abs(const Matrix& C) {
  std::vector<double> v(C.data(), C.data() + C.size());
  for (double& x : v) x = std::abs(x);
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

// log sum_k exp(terms_k), stable for -inf entries.
double log_sum_exp(const double* terms, Eigen::Index count) {
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < count; ++k) hi = std::max(hi, terms[k]);
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (Eigen::Index k = 0; k < count; ++k) sum += std::exp(terms[k] - hi);
  return hi + std::log(sum);
}

// lse_i = log sum_j exp(log_w_j + (pot_j - Crow_i(j)) / eps) for every row i of
// `rows` (stored column-major as the transpose, so each row is contiguous).
void soft_min(const Matrix& rows_t, const Vector& log_w, const Vector& pot, double eps,
              Vector& out) {
  const Eigen::Index count = rows_t.rows();
  parallel_for(static_cast<std::size_t>(rows_t.cols()), [&](std::size_t i) {
    const auto col = rows_t.col(static_cast<Eigen::Index>(i));
    std::vector<double> terms(static_cast<std::size_t>(count));
    for (Eigen::Index k = 0; k < count; ++k) {
      terms[static_cast<std::size_t>(k)] = log_w[k] + (pot[k] - col[k]) / eps;
    }
    out[static_cast<Eigen::Index>(i)] = log_sum_exp(terms.data(), count);
  });
}

Matrix plan_from_potentials(const Matrix& C, const Vector& log_a, const Vector& log_b,
                            const Potentials& pot, double eps) {
  Matrix plan(C.rows(), C.cols());
  for (Eigen::Index j = 0; j < C.cols(); ++j) {
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
      plan(i, j) = std::exp(log_a[i] + log_b[j] + (pot.f[i] + pot.g[j] - C(i, j)) / eps);
    }
  }
  return plan;
}

void solve_log_domain(const Matrix& C, const Vector& a, const Vector& b,
                      const SinkhornConfig& cfg, SinkhornResult& res) {
  const double eps = cfg.epsilon;
  const Vector log_a = a.array().log().matrix();
  const Vector log_b = b.array().log().matrix();
  const Matrix Ct = C.transpose();
  Vector& f = res.potentials.f;
  Vector& g = res.potentials.g;
  Vector lse_rows(C.rows());
  Vector lse_cols(C.cols());

  res.converged = false;
  for (res.iterations = 0; res.iterations < cfg.max_iters; ++res.iterations) {
    soft_min(Ct, log_b, g, eps, lse_rows);
    double violation = 0.0;
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
      // Capped so a poor warm start reads as a large violation, not an overflow.
      const double log_ratio = std::min(f[i] / eps + lse_rows[i], 50.0);
      violation = std::max(violation, a[i] * std::abs(std::expm1(log_ratio)));
    }
    if (!std::isfinite(violation)) {
      throw NumericalError("sinkhorn: non-finite potentials at epsilon " +
                               std::to_string(eps));
    }
    if (violation <= cfg.tolerance) {
      res.converged = true;
      break;
    }
    f = -eps * lse_rows;
    soft_min(C, log_a, f, eps, lse_cols);
    g = -eps * lse_cols;
  }
  res.coupling.plan = plan_from_potentials(C, log_a, log_b, res.potentials, eps);
}

void solve_scaling(const Matrix& C, const Vector& a, const Vector& b,
                   const SinkhornConfig& cfg, SinkhornResult& res) {
  const double eps = cfg.epsilon;
  const Matrix K = (-C / eps).array().exp().matrix();
  Vector u = (a.array() * (res.potentials.f / eps).array().exp()).matrix();
  Vector v = (b.array() * (res.potentials.g / eps).array().exp()).matrix();

  res.converged = false;
  for (res.iterations = 0; res.iterations < cfg.max_iters; ++res.iterations) {
    const Vector Kv = K * v;
    const double violation = (u.cwiseProduct(Kv) - a).cwiseAbs().maxCoeff();
    if (!std::isfinite(violation)) {
      throw NumericalError("sinkhorn: NaN in scaling iterations at epsilon " +
                               std::to_string(eps));
    }
    if (violation <= cfg.tolerance) {
      res.converged = true;
      break;
    }
    u = a.cwiseQuotient(Kv);
    v = b.cwiseQuotient(K.transpose() * u);
    if (!u.allFinite() || !v.allFinite()) {
      throw NumericalError("sinkhorn: kernel underflow (NaN/inf scaling) at epsilon " +
                               std::to_string(eps));
    }
  }
  res.coupling.plan = u.asDiagonal() * K * v.asDiagonal();
  res.potentials.f = eps * (u.array() / a.array()).log().matrix();
  res.potentials.g = eps * (v.array() / b.array()).log().matrix();
}

}  // namespace

SinkhornResult sinkhorn(const Matrix& C, const Vector& a, const Vector& b,
                        const SinkhornConfig& cfg, const Potentials* warm) {
  cfg.validate();
  check_simplex(a, "row weights");
  check_simplex(b, "column weights");
  if (C.rows() != a.size() || C.cols() != b.size()) {
    throw std::invalid_argument("sinkhorn: cost matrix shape does not match the weights");
  }
  if (!C.allFinite()) throw std::invalid_argument("sinkhorn: cost matrix has non-finite entries");

  SinkhornResult res;
  if (warm && warm->f.size() == a.size() && warm->g.size() == b.size()) {
    res.potentials = *warm;
  } else {
    res.potentials.f = Vector::Zero(a.size());
    res.potentials.g = Vector::Zero(b.size());
  }
  res.coupling.a = a;
  res.coupling.b = b;

  res.used_log_domain = cfg.log_domain || cfg.epsilon < 0.05 * median_abs(C);
  if (res.used_log_domain) {
    solve_log_domain(C, a, b, cfg, res);
  } else {
    solve_scaling(C, a, b, cfg, res);
  }
  if (!res.coupling.plan.allFinite()) {
    throw NumericalError("sinkhorn: NaN in transport plan");
  }
  const Matrix& plan = res.coupling.plan;
  res.transport_cost = (C.array() * plan.array()).sum();
  res.objective = a.dot(res.potentials.f) + b.dot(res.potentials.g) -
                  cfg.epsilon * (plan.sum() - 1.0);
  return res;
}

namespace {

const Potentials* cached(const std::optional<Potentials>& p) { return p ? &*p : nullptr; }

}  // namespace

DivergenceResult sinkhorn_divergence(const PointCloud& X, const PointCloud& Y, CostKind kind,
                                     const SinkhornConfig& cfg, DivergenceWarmStart* warm) {
  if (X.dim() != Y.dim()) throw std::invalid_argument("sinkhorn_divergence: dimension mismatch");

  DivergenceResult out;
  const Matrix Cxy = cost_matrix(X, Y, kind);
  const Matrix Cxx = cost_matrix(X, X, kind);
  const Matrix Cyy = cost_matrix(Y, Y, kind);
  out.xy = sinkhorn(Cxy, X.weights, Y.weights, cfg, warm ? cached(warm->xy) : nullptr);
  out.xx = sinkhorn(Cxx, X.weights, X.weights, cfg, warm ? cached(warm->xx) : nullptr);
  out.yy = sinkhorn(Cyy, Y.weights, Y.weights, cfg, warm ? cached(warm->yy) : nullptr);
  if (warm) {
    warm->xy = out.xy.potentials;
    warm->xx = out.xx.potentials;
    warm->yy = out.yy.potentials;
  }
  out.value = out.xy.objective - 0.5 * (out.xx.objective + out.yy.objective);

  const Matrix& pxy = out.xy.coupling.plan;
  const Matrix& pyy = out.yy.coupling.plan;
  out.grad_y = Points::Zero(Y.points.rows(), Y.points.cols());
  parallel_for(Y.size(), [&](std::size_t js) {
    const auto j = static_cast<Eigen::Index>(js);
    const auto y = Y.point(js);
    Vector acc = Vector::Zero(Y.dim());
    for (Eigen::Index i = 0; i < pxy.rows(); ++i) {
      const double w = pxy(i, j);
      if (w == 0.0) continue;
      acc += w * geometry::ground_cost_grad(y, X.point(static_cast<std::size_t>(i)), kind);
    }
    for (Eigen::Index k = 0; k < pyy.rows(); ++k) {
      const double w = 0.5 * (pyy(j, k) + pyy(k, j));
      if (w == 0.0 || k == j) continue;
      acc -= w * geometry::ground_cost_grad(y, Y.point(static_cast<std::size_t>(k)), kind);
    }
    // C(y_j, y_j) does not depend on y_j, so the diagonal is skipped.
    out.grad_y.row(j) = acc.transpose();
  });
  return out;
}

AnnealSchedule AnnealSchedule::to_final(double epsilon0, double epsilon_final, int steps) {
  if (!(epsilon0 > 0.0) || !(epsilon_final > 0.0) || steps < 1) {
    throw std::invalid_argument("annealing needs positive epsilons and steps >= 1");
  }
  AnnealSchedule s;
  s.epsilon0 = epsilon0;
  s.steps = steps;
  s.decay = std::pow(epsilon_final / epsilon0, 1.0 / static_cast<double>(steps));
  return s;
}

void AnnealSchedule::validate() const {
  if (!(epsilon0 > 0.0)) throw std::invalid_argument("epsilon0 must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("decay must lie in (0, 1]");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
}

double anneal(const AnnealSchedule& s, int t) {
  s.validate();
  if (t < 0 || t > s.steps) throw std::invalid_argument("anneal: t outside [0, steps]");
  return s.epsilon0 * std::pow(s.decay, t);
}

}  // namespace hypalign::ot
