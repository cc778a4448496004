#include "hypalign/optim.hpp"

#include "hypalign/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hypalign::optim {

namespace {

void check_shapes(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("optimizer: parameter and gradient shapes differ");
  }
}

void check_span_sizes(std::size_t params, std::size_t grads) {
  if (params != grads) {
    throw std::invalid_argument("optimizer: " + std::to_string(params) + " parameters but " +
                                std::to_string(grads) + " gradients");
  }
}

// Squared Riemannian norm of a tangent vector at `point`.
double riemannian_sq_norm(Manifold manifold, const Matrix& point, const Matrix& tangent) {
  if (manifold == Manifold::ball) {
    const double lambda = 2.0 / (1.0 - point.squaredNorm());
    return lambda * lambda * tangent.squaredNorm();
  }
  return tangent.squaredNorm();
}

}  // namespace

Matrix riemannian_grad(Manifold manifold, const Matrix& point, const Matrix& egrad) {
  check_shapes(point, egrad);
  switch (manifold) {
    case Manifold::ball: {
      const double shrink = 1.0 - point.squaredNorm();
      return (shrink * shrink / 4.0) * egrad;
    }
    case Manifold::stiefel_special: {
      const Matrix ptg = point.transpose() * egrad;
      return egrad - point * (0.5 * (ptg + ptg.transpose()));
    }
    case Manifold::euclidean: return egrad;
  }
  throw std::invalid_argument("unknown manifold");
}

Matrix retract(Manifold manifold, const Matrix& point, const Matrix& step, double margin) {
  check_shapes(point, step);
  if (!step.allFinite()) throw NumericalError("retract: non-finite step");
  if (step.isZero(0.0)) return point;
  switch (manifold) {
    case Manifold::ball: {
      if (point.cols() != 1) throw std::invalid_argument("ball parameters must be column vectors");
      return geometry::exp_map(point.col(0), step.col(0), margin);
    }
    case Manifold::stiefel_special: {
      Eigen::HouseholderQR<Matrix> qr(point + step);
      Matrix q = qr.householderQ();
      const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
      for (Eigen::Index k = 0; k < q.cols(); ++k) {
        if (r(k, k) < 0.0) q.col(k) = -q.col(k);
      }
      if (q.determinant() < 0.0) q.col(q.cols() - 1) = -q.col(q.cols() - 1);
      return q;
    }
    case Manifold::euclidean: return point + step;
  }
  throw std::invalid_argument("unknown manifold");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::radam ? "radam" : "rsgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "radam") return OptimizerKind::radam;
  if (name == "rsgd") return OptimizerKind::rsgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

Rsgd::Rsgd(double lr, double margin) : lr_(lr), margin_(margin) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

void Rsgd::step(std::span<ParamView> params, std::span<const Matrix> grads) {
  check_span_sizes(params.size(), grads.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const Matrix point = p.value;
    const Matrix rg = riemannian_grad(p.manifold, point, grads[k]);
    p.value = retract(p.manifold, point, -lr_ * rg, margin_);
  }
  ++t_;
}

Radam::Radam(double lr, double beta1, double beta2, double eps, double margin)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), margin_(margin) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
}

void Radam::step(std::span<ParamView> params, std::span<const Matrix> grads) {
  check_span_sizes(params.size(), grads.size());
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      if (p.manifold == Manifold::euclidean) {
        v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      } else {
        v_.push_back(Matrix::Zero(1, 1));
      }
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("optimizer: parameter list changed between steps");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const Matrix point = p.value;
    const Matrix rg = riemannian_grad(p.manifold, point, grads[k]);
    check_shapes(m_[k], rg);
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * rg;
    Matrix direction;
    if (p.manifold == Manifold::euclidean) {
      v_[k] = beta2_ * v_[k].array() + (1.0 - beta2_) * rg.array().square();
      direction = (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + eps_);
    } else {
      v_[k](0, 0) = beta2_ * v_[k](0, 0) +
                    (1.0 - beta2_) * riemannian_sq_norm(p.manifold, point, rg);
      direction = (m_[k] / bc1) / (std::sqrt(v_[k](0, 0) / bc2) + eps_);
      if (p.manifold == Manifold::stiefel_special) {
        // Reused momentum may have left the tangent space at the new point.
        const Matrix ptd = point.transpose() * direction;
        direction -= point * (0.5 * (ptd + ptd.transpose()));
      }
    }
    p.value = retract(p.manifold, point, -lr_ * direction, margin_);
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr) {
  if (kind == OptimizerKind::radam) return std::make_unique<Radam>(lr);
  return std::make_unique<Rsgd>(lr);
}

}  // namespace hypalign::optim
