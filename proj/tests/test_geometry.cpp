#include "hypalign/geometry.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <complex>
#include <numbers>

using namespace hypalign::geometry;
using namespace testing_support;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// In two dimensions the ball is the unit disk and u (+) v = (u + v) / (1 + conj(u) v).
Vector complex_mobius(const Vector& u, const Vector& v) {
  const std::complex<double> a(u[0], u[1]);
  const std::complex<double> b(v[0], v[1]);
  const auto z = (a + b) / (1.0 + std::conj(a) * b);
  return vec({z.real(), z.imag()});
}

}  // namespace

TEST(MobiusAdd, OriginIsTwoSidedIdentity) {
  const Vector v = vec({0.3, -0.4});
  EXPECT_TRUE(mobius_add(Vector::Zero(2), v).isApprox(v, 1e-15));
  EXPECT_TRUE(mobius_add(v, Vector::Zero(2)).isApprox(v, 1e-15));
}

TEST(MobiusAdd, GoldenValue) {
  // (1 + 2*0.125 + 0.0625) * 0.5 + 0.75 * 0.25 = 0.84375 over 1.265625.
  const Vector r = mobius_add(vec({0.5, 0.0}), vec({0.25, 0.0}));
  EXPECT_NEAR(r[0], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r[1], 0.0);
}

TEST(MobiusAdd, MatchesComplexFormulaInTwoDimensions) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vector u = random_ball_point(rng, 2);
    const Vector v = random_ball_point(rng, 2);
    EXPECT_LT((mobius_add(u, v) - complex_mobius(u, v)).norm(), 1e-12);
  }
}

TEST(MobiusAdd, LeftCancellation) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const int d = 2 + i % 9;
    const Vector u = random_ball_point(rng, d, 0.9);
    const Vector v = random_ball_point(rng, d, 0.9);
    EXPECT_LT((mobius_add(-u, mobius_add(u, v)) - v).norm(), 1e-8);
  }
}

TEST(MobiusAdd, RejectsBadInput) {
  EXPECT_THROW(mobius_add(vec({0.1, 0.2}), vec({0.1})), std::invalid_argument);
  EXPECT_THROW(mobius_add(vec({NAN, 0.0}), vec({0.1, 0.0})), hypalign::NumericalError);
}

TEST(MobiusAdd, ResultStaysInsideBall) {
  const Vector r = mobius_add(vec({0.999999, 0.0}), vec({0.999999, 0.0}));
  EXPECT_LE(r.norm(), 1.0 - kDefaultMargin + 1e-15);
}

TEST(Distance, GoldenValues) {
  EXPECT_EQ(poincare_distance(Vector::Zero(2), Vector::Zero(2)), 0.0);
  EXPECT_NEAR(poincare_distance(Vector::Zero(2), vec({0.5, 0.0})), std::log(3.0), 1e-15);
}

TEST(Distance, MetricAxioms) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const int d = 2 + i % 5;
    const Vector x = random_ball_point(rng, d, 0.95);
    const Vector y = random_ball_point(rng, d, 0.95);
    const Vector z = random_ball_point(rng, d, 0.95);
    const double dxy = poincare_distance(x, y);
    EXPECT_GE(dxy, 0.0);
    EXPECT_EQ(dxy, poincare_distance(y, x));
    EXPECT_EQ(poincare_distance(x, x), 0.0);
    EXPECT_GT(dxy, 0.0);
    EXPECT_LE(dxy, poincare_distance(x, z) + poincare_distance(z, y) + 1e-9);
    EXPECT_NEAR(dxy, oracle_distance(x, y), 1e-9 * std::max(1.0, dxy));
  }
}

TEST(Distance, AccurateForNearbyPoints) {
  // acosh(1 + t) loses half the digits for tiny t; the library does not.
  const Vector u = vec({0.1, 0.2});
  const Vector v = u + vec({1e-9, 0.0});
  const double expected = 1e-9 * 2.0 / (1.0 - u.squaredNorm());
  EXPECT_NEAR(poincare_distance(u, v), expected, 1e-6 * expected);
}

TEST(Distance, RejectsPointsOutsideBall) {
  EXPECT_THROW(poincare_distance(vec({1.0, 0.0}), vec({0.0, 0.0})), std::domain_error);
  EXPECT_THROW(poincare_distance(vec({0.0, 0.0}), vec({INFINITY, 0.0})), hypalign::NumericalError);
}

TEST(Norm, MatchesDistanceFromOrigin) {
  EXPECT_EQ(poincare_norm(Vector::Zero(3)), 0.0);
  EXPECT_NEAR(poincare_norm(vec({0.5, 0.0})), std::log(3.0), 1e-15);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const Vector u = random_ball_point(rng, 4, 0.99);
    EXPECT_NEAR(poincare_norm(u), poincare_distance(Vector::Zero(4), u), 1e-10);
  }
}

TEST(ConformalFactor, Values) {
  EXPECT_EQ(conformal_factor(Vector::Zero(2)), 2.0);
  EXPECT_NEAR(conformal_factor(vec({0.5, 0.0})), 8.0 / 3.0, 1e-15);
  EXPECT_GT(conformal_factor(vec({0.9, 0.0})), conformal_factor(vec({0.5, 0.0})));
}

TEST(ExpLog, OriginFormulas) {
  EXPECT_EQ(exp_map(Vector::Zero(2), Vector::Zero(2)), Vector::Zero(2));
  const double t = 0.7;
  const Vector e = exp_map(Vector::Zero(2), vec({t, 0.0}));
  EXPECT_NEAR(e[0], std::tanh(t), 1e-15);
  EXPECT_EQ(e[1], 0.0);
  const Vector l = log_map(Vector::Zero(2), vec({std::tanh(t), 0.0}));
  EXPECT_NEAR(l[0], t, 1e-14);
  const Vector p = vec({0.2, -0.6});
  EXPECT_EQ(log_map(p, p), Vector::Zero(2));
  EXPECT_TRUE(exp0(vec({t, 0.0})).isApprox(e, 1e-15));
  EXPECT_NEAR(log0(e)[0], t, 1e-14);
}

TEST(ExpLog, MutualInverses) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> len(0.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const int d = 2 + i % 6;
    const Vector p = random_ball_point(rng, d, 0.9);
    // Riemannian tangent norm lambda_p |u| up to 2.
    Vector u = random_vector(rng, d);
    u = u.normalized() * len(rng) / conformal_factor(p);
    EXPECT_LT((log_map(p, exp_map(p, u)) - u).norm(), 1e-8);
    // Coordinate norm up to 2 from base points whose images clear the guard.
    const Vector q = random_ball_point(rng, d, 0.5);
    Vector w = random_vector(rng, d);
    w = w.normalized() * len(rng);
    EXPECT_LT((log_map(q, exp_map(q, w)) - w).norm(), 1e-8);
    const Vector v = random_ball_point(rng, d, 0.9);
    EXPECT_LT((exp_map(p, log_map(p, v)) - v).norm(), 1e-8);
  }
}

TEST(ExpLog, GeodesicLengthMatchesTangentNorm) {
  // Left translation by -p is an isometry, so d(p, exp_p(u)) = 2 artanh(tanh(lambda_p |u| / 2)).
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const Vector p = random_ball_point(rng, 3, 0.7);
    const Vector u = random_vector(rng, 3, 0.2);
    const double expected = conformal_factor(p) * u.norm();
    EXPECT_NEAR(poincare_distance(p, exp_map(p, u)), expected, 1e-8 * std::max(1.0, expected));
  }
}

TEST(Isometry, IdentityAndRotation) {
  const Vector x = vec({0.3, 0.1});
  EXPECT_TRUE(apply_isometry(Matrix::Identity(2, 2), Vector::Zero(2), x).isApprox(x, 1e-15));
  Matrix R(2, 2);
  R << 0, -1, 1, 0;
  const Vector r = apply_isometry(R, Vector::Zero(2), vec({0.3, 0.0}));
  EXPECT_NEAR(r[0], 0.0, 1e-15);
  EXPECT_NEAR(r[1], 0.3, 1e-15);
}

TEST(Isometry, PreservesDistances) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const int d = 2 + i % 8;
    const Matrix P = random_rotation(rng, d);
    const Vector v = random_ball_point(rng, d, 0.8);
    const Vector x = random_ball_point(rng, d, 0.8);
    const Vector y = random_ball_point(rng, d, 0.8);
    const double before = poincare_distance(x, y);
    const double after = poincare_distance(apply_isometry(P, v, x), apply_isometry(P, v, y));
    EXPECT_NEAR(after, before, 1e-8 * std::max(1.0, before));
  }
}

TEST(Isometry, RejectsNonRotations) {
  Matrix reflect = Matrix::Identity(2, 2);
  reflect(0, 0) = -1;
  EXPECT_THROW(apply_isometry(reflect, Vector::Zero(2), vec({0.1, 0.1})), std::invalid_argument);
  EXPECT_THROW(apply_isometry(2.0 * Matrix::Identity(2, 2), Vector::Zero(2), vec({0.1, 0.1})),
               std::invalid_argument);
}

TEST(GroundCost, GoldenValues) {
  const Vector x = vec({0.3, -0.2});
  EXPECT_EQ(ground_cost(x, x, CostKind::neg_cosh), -1.0);
  EXPECT_EQ(ground_cost(x, x, CostKind::dist_squared), 0.0);
  EXPECT_NEAR(ground_cost(Vector::Zero(2), vec({0.5, 0.0}), CostKind::neg_cosh), -5.0 / 3.0,
              1e-15);
  const double ln3 = std::log(3.0);
  const Vector o = Vector::Zero(2);
  const Vector h = vec({0.5, 0.0});
  EXPECT_NEAR(ground_cost(o, h, CostKind::dist), ln3, 1e-15);
  EXPECT_NEAR(ground_cost(o, h, CostKind::dist_squared), ln3 * ln3, 1e-14);
  EXPECT_NEAR(ground_cost(o, h, CostKind::neg_log_one_plus_cosh), -std::log(8.0 / 3.0), 1e-15);
  EXPECT_NEAR(ground_cost(o, h, CostKind::log_cosh), std::log(5.0 / 3.0), 1e-15);
  EXPECT_NEAR(ground_cost(o, h, CostKind::neg_log_cosh), -std::log(5.0 / 3.0), 1e-15);
  EXPECT_NEAR(ground_cost(o, h, CostKind::euclidean_squared), 0.25, 1e-15);
}

TEST(GroundCost, SymmetricAndNegCoshBound) {
  std::mt19937_64 rng(8);
  const CostKind kinds[] = {CostKind::dist,     CostKind::dist_squared,
                            CostKind::neg_cosh, CostKind::neg_log_one_plus_cosh,
                            CostKind::log_cosh, CostKind::neg_log_cosh,
                            CostKind::euclidean_squared};
  for (int i = 0; i < 100; ++i) {
    const Vector u = random_ball_point(rng, 3);
    const Vector v = random_ball_point(rng, 3);
    for (CostKind k : kinds) EXPECT_EQ(ground_cost(u, v, k), ground_cost(v, u, k));
    EXPECT_LT(ground_cost(u, v, CostKind::neg_cosh), -1.0);
  }
}

TEST(GroundCost, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  const CostKind kinds[] = {CostKind::dist,     CostKind::dist_squared,
                            CostKind::neg_cosh, CostKind::neg_log_one_plus_cosh,
                            CostKind::log_cosh, CostKind::neg_log_cosh,
                            CostKind::euclidean_squared};
  for (CostKind k : kinds) {
    for (int i = 0; i < 20; ++i) {
      const Vector u = random_ball_point(rng, 3, 0.8);
      const Vector v = random_ball_point(rng, 3, 0.8);
      const auto f = [&](const Eigen::MatrixXd& x) { return ground_cost(x, v, k); };
      const Eigen::MatrixXd fd = numeric_gradient(f, u, 1e-6);
      EXPECT_LT(relative_error(ground_cost_grad(u, v, k), fd), 1e-6) << to_string(k);
    }
  }
  EXPECT_EQ(ground_cost_grad(vec({0.1, 0.1}), vec({0.1, 0.1}), CostKind::dist), Vector::Zero(2));
}

TEST(GroundCost, ParseRoundTrip) {
  for (auto k : {CostKind::dist, CostKind::neg_cosh, CostKind::euclidean_squared}) {
    EXPECT_EQ(parse_cost_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_cost_kind("cosine"), std::invalid_argument);
}

TEST(Projection, Contract) {
  EXPECT_EQ(project_to_ball(vec({0.3, 0.0}), 1e-5), vec({0.3, 0.0}));
  const Vector p = project_to_ball(vec({2.0, 0.0}), 1e-5);
  EXPECT_NEAR(p[0], 1.0 - 1e-5, 1e-16);
  EXPECT_EQ(project_to_ball(p, 1e-5), p);
  EXPECT_THROW(project_to_ball(vec({0.1}), 0.0), std::invalid_argument);
  EXPECT_THROW(project_to_ball(vec({0.1}), 0.1), std::invalid_argument);
  EXPECT_THROW(project_to_ball(vec({NAN}), 1e-5), hypalign::NumericalError);
}

TEST(Vjp, MatchFiniteDifferences) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 30; ++i) {
    const int d = 2 + i % 4;
    const Vector u = random_ball_point(rng, d, 0.8);
    const Vector v = random_ball_point(rng, d, 0.8);
    const Vector g = random_vector(rng, d);
    const auto grads = mobius_add_vjp(u, v, g);
    const auto fu = [&](const Eigen::MatrixXd& x) { return g.dot(mobius_add(x, v)); };
    const auto fv = [&](const Eigen::MatrixXd& x) { return g.dot(mobius_add(u, x)); };
    EXPECT_LT(relative_error(grads.du, numeric_gradient(fu, u)), 1e-7);
    EXPECT_LT(relative_error(grads.dv, numeric_gradient(fv, v)), 1e-7);

    const Vector t = random_vector(rng, d, 0.7);
    const auto fe = [&](const Eigen::MatrixXd& x) { return g.dot(exp0(x)); };
    EXPECT_LT(relative_error(exp0_vjp(t, g), numeric_gradient(fe, t)), 1e-7);
    const auto fl = [&](const Eigen::MatrixXd& x) { return g.dot(log0(x)); };
    EXPECT_LT(relative_error(log0_vjp(u, g), numeric_gradient(fl, u)), 1e-7);
    const Vector outside = random_vector(rng, d, 2.0);
    const auto fp = [&](const Eigen::MatrixXd& x) { return g.dot(project_to_ball(x)); };
    EXPECT_LT(relative_error(project_to_ball_vjp(outside, g), numeric_gradient(fp, outside)),
              1e-7);
  }
}
