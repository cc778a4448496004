#include "hypalign/optim.hpp"
#include "hypalign/ot.hpp"
#include "hypalign/registration.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hypalign;
using namespace hypalign::optim;
using namespace testing_support;

namespace {

double orthogonality_error(const Matrix& P) {
  return (P.transpose() * P - Matrix::Identity(P.rows(), P.cols())).cwiseAbs().maxCoeff();
}

ParamView view(Manifold m, Matrix& value) {
  return ParamView{m, Eigen::Map<Matrix>(value.data(), value.rows(), value.cols())};
}

// Steps f(x) = 1/2 x^T A x from x0 until |x| <= 1e-6 or the step budget runs out.
int steps_to_converge(Optimizer& opt, const Matrix& A, Matrix x, int budget) {
  for (int t = 0; t < budget; ++t) {
    if (x.norm() <= 1e-6) return t;
    std::vector<ParamView> params{view(Manifold::euclidean, x)};
    const std::vector<Matrix> grads{A * x};
    opt.step(params, grads);
  }
  return x.norm() <= 1e-6 ? budget : -1;
}

}  // namespace

TEST(RiemannianGrad, BallScalesByConformalFactor) {
  Matrix g(3, 1);
  g << 1.0, -2.0, 4.0;
  const Matrix origin = Matrix::Zero(3, 1);
  EXPECT_LT((riemannian_grad(Manifold::ball, origin, g) - g / 4.0).norm(), 1e-15);
  Matrix p(3, 1);
  p << 0.3, 0.0, -0.4;
  const double s = std::pow(1.0 - 0.25, 2) / 4.0;
  EXPECT_LT((riemannian_grad(Manifold::ball, p, g) - s * g).norm(), 1e-14);
}

TEST(RiemannianGrad, StiefelIsTangent) {
  std::mt19937_64 rng(1);
  Matrix S = random_vector(rng, 16).reshaped(4, 4);
  S = 0.5 * (S + S.transpose()).eval();
  const Matrix I = Matrix::Identity(4, 4);
  EXPECT_LT(riemannian_grad(Manifold::stiefel_special, I, S).norm(), 1e-14);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix P = random_rotation(rng, 4);
    const Matrix G = random_vector(rng, 16).reshaped(4, 4);
    const Matrix xi = riemannian_grad(Manifold::stiefel_special, P, G);
    // Tangent at P means P^T xi is skew-symmetric.
    const Matrix K = P.transpose() * xi;
    EXPECT_LT((K + K.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(RiemannianGrad, EuclideanIsIdentityAndShapesChecked) {
  std::mt19937_64 rng(2);
  const Matrix x = random_vector(rng, 6).reshaped(2, 3);
  const Matrix g = random_vector(rng, 6).reshaped(2, 3);
  EXPECT_EQ(riemannian_grad(Manifold::euclidean, x, g), g);
  EXPECT_THROW(riemannian_grad(Manifold::ball, Matrix::Zero(3, 1), Matrix::Zero(2, 1)),
               std::invalid_argument);
}

TEST(Retract, ZeroStepIsExactNoOp) {
  std::mt19937_64 rng(3);
  const Matrix p = random_ball_point(rng, 5, 0.9);
  EXPECT_EQ(retract(Manifold::ball, p, Matrix::Zero(5, 1)), p);
  const Matrix R = random_rotation(rng, 5);
  EXPECT_EQ(retract(Manifold::stiefel_special, R, Matrix::Zero(5, 5)), R);
  const Matrix e = random_vector(rng, 4);
  EXPECT_EQ(retract(Manifold::euclidean, e, Matrix::Zero(4, 1)), e);
}

TEST(Retract, BallStaysInsideForHugeSteps) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix p = random_ball_point(rng, 3, 0.99);
    const Matrix step = random_vector(rng, 3).normalized() * 10.0;
    const Matrix q = retract(Manifold::ball, p, step);
    EXPECT_TRUE(q.allFinite());
    EXPECT_LT(q.norm(), 1.0);
  }
}

TEST(Retract, StiefelStaysSpecialOrthogonal) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix P = random_rotation(rng, 5);
    const Matrix step = random_vector(rng, 25, 0.5).reshaped(5, 5);
    const Matrix Q = retract(Manifold::stiefel_special, P, step);
    EXPECT_LT(orthogonality_error(Q), 1e-10);
    EXPECT_NEAR(Q.determinant(), 1.0, 1e-10);
  }
}

TEST(Retract, RejectsNonFiniteStep) {
  Matrix step = Matrix::Zero(2, 1);
  step(0, 0) = std::nan("");
  EXPECT_THROW(retract(Manifold::ball, Matrix::Zero(2, 1), step), NumericalError);
}

TEST(Rsgd, ClosedFormQuadraticStep) {
  Rsgd opt(0.1);
  Matrix x(1, 1);
  x(0, 0) = 1.0;
  std::vector<ParamView> params{view(Manifold::euclidean, x)};
  const std::vector<Matrix> grads{x};
  opt.step(params, grads);
  EXPECT_NEAR(x(0, 0), 0.9, 1e-15);
  EXPECT_EQ(opt.steps_taken(), 1);
}

TEST(Rsgd, BallParameterPushedOutwardStaysInside) {
  Rsgd opt(5e-2);
  Matrix b(2, 1);
  b << 0.5, 0.0;
  for (int t = 0; t < 2000; ++t) {
    std::vector<ParamView> params{view(Manifold::ball, b)};
    // Gradient of -x_0 scaled up so every step heads for the boundary.
    Matrix g(2, 1);
    g << -1e6, 0.0;
    const std::vector<Matrix> grads{g};
    opt.step(params, grads);
    ASSERT_LT(b.norm(), 1.0);
  }
}

TEST(Optimizers, ZeroGradientIsExactNoOp) {
  std::mt19937_64 rng(6);
  for (OptimizerKind kind : {OptimizerKind::rsgd, OptimizerKind::radam}) {
    auto opt = make_optimizer(kind, 0.1);
    Matrix b = random_ball_point(rng, 3, 0.9);
    Matrix P = random_rotation(rng, 3);
    Matrix W = random_vector(rng, 6).reshaped(2, 3);
    const Matrix b0 = b, P0 = P, W0 = W;
    for (int t = 0; t < 5; ++t) {
      std::vector<ParamView> params{view(Manifold::ball, b), view(Manifold::stiefel_special, P),
                                    view(Manifold::euclidean, W)};
      const std::vector<Matrix> grads{Matrix::Zero(3, 1), Matrix::Zero(3, 3), Matrix::Zero(2, 3)};
      opt->step(params, grads);
    }
    EXPECT_EQ(b, b0);
    EXPECT_EQ(P, P0);
    EXPECT_EQ(W, W0);
    EXPECT_EQ(opt->steps_taken(), 5);
  }
}

TEST(Radam, FirstStepHasMagnitudeLr) {
  for (double scale : {1e-4, 1.0, 1e4}) {
    Radam opt(1e-3);
    Matrix x(3, 1);
    x << 1.0, -2.0, 0.5;
    const Matrix x0 = x;
    std::vector<ParamView> params{view(Manifold::euclidean, x)};
    const std::vector<Matrix> grads{scale * x0};
    opt.step(params, grads);
    // Coordinatewise bias-corrected Adam: each coordinate moves by lr * g / (|g| + eps_hat).
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(std::abs(x(k) - x0(k)), 1e-3, 1e-6) << scale;
  }
}

TEST(Radam, ManifoldConstraintsHoldEveryStep) {
  std::mt19937_64 rng(7);
  Radam opt(5e-2);
  Matrix b = random_ball_point(rng, 4, 0.95);
  Matrix P = random_rotation(rng, 4);
  for (int t = 0; t < 500; ++t) {
    std::vector<ParamView> params{view(Manifold::ball, b), view(Manifold::stiefel_special, P)};
    const std::vector<Matrix> grads{random_vector(rng, 4, 100.0),
                                    random_vector(rng, 16, 100.0).reshaped(4, 4)};
    opt.step(params, grads);
    ASSERT_LT(b.norm(), 1.0);
    ASSERT_LT(orthogonality_error(P), 1e-8);
    ASSERT_NEAR(P.determinant(), 1.0, 1e-8);
  }
}

TEST(Optimizers, ConvexQuadraticConverges) {
  Matrix A = Matrix::Zero(3, 3);
  A.diagonal() << 1.0, 2.0, 3.0;
  Matrix x0(3, 1);
  x0 << 1.0, -1.0, 0.5;
  Rsgd rsgd(5e-2);
  const int rsgd_steps = steps_to_converge(rsgd, A, x0, 10000);
  EXPECT_GE(rsgd_steps, 0);
  Radam radam(1e-3);
  const int radam_steps = steps_to_converge(radam, A, x0, 10000);
  EXPECT_GE(radam_steps, 0);
}

TEST(Radam, DecreasesDivergenceOnToyRegistration) {
  std::mt19937_64 rng(8);
  const auto X = random_cloud(rng, 20, 3, 0.6, "x");
  const Matrix R = random_rotation(rng, 3);
  PointCloud Y = X;
  Y.points = (X.points * R.transpose()).eval();
  registration::ArchSpec arch;
  arch.dim = 3;
  arch.layers = 2;
  arch.hidden = 3;
  arch.type = registration::LayerType::mobius;
  auto net = registration::init_network(arch, rng);
  ot::SinkhornConfig cfg;
  cfg.epsilon = 0.1;
  cfg.max_iters = 100000;
  Radam opt(2e-2);
  std::vector<double> values;
  for (int t = 0; t <= 10; ++t) {
    const auto mapped = registration::network_forward(net, Y);
    const auto sd = ot::sinkhorn_divergence(X, mapped, geometry::CostKind::dist, cfg);
    values.push_back(sd.value);
    if (t == 10) break;
    const auto grad = registration::network_backward(net, Y, sd.grad_y);
    auto params = net.parameters();
    opt.step(params, grad.params);
  }
  EXPECT_LT(values.back(), values.front());
}
