#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psopt/basis.hpp"

using namespace psopt;

TEST_CASE("lgl nodes and weights at small N match closed forms") {
  Grid g2 = lgl_grid(2);
  CHECK(g2.tau(0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(g2.tau(1) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(g2.tau(2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g2.w(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(g2.w(1) == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
  CHECK(g2.w(2) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Grid g4 = lgl_grid(4);
  CHECK(g4.tau(1) == doctest::Approx(-std::sqrt(3.0 / 7.0)).epsilon(1e-14));
  CHECK(g4.tau(2) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(g4.w(0) == doctest::Approx(1.0 / 10.0).epsilon(1e-14));
  CHECK(g4.w(1) == doctest::Approx(49.0 / 90.0).epsilon(1e-14));
  CHECK(g4.w(2) == doctest::Approx(32.0 / 45.0).epsilon(1e-14));
}

TEST_CASE("lgl quadrature is exact through degree 2N-1") {
  for (int N : {3, 6, 11}) {
    Grid g = lgl_grid(N);
    CHECK(g.w.sum() == doctest::Approx(2.0).epsilon(1e-14));
    for (int d = 0; d <= 2 * N - 1; ++d) {
      double q = 0.0;
      for (int i = 0; i <= N; ++i) q += g.w(i) * std::pow(g.tau(i), d);
      double exact = (d % 2 == 0) ? 2.0 / (d + 1) : 0.0;
      CHECK(q == doctest::Approx(exact).epsilon(1e-12));
    }
  }
}

TEST_CASE("legendre values at known points") {
  CHECK(legendre(3, 1.0) == doctest::Approx(1.0));
  CHECK(legendre(3, -1.0) == doctest::Approx(-1.0));
  CHECK(legendre(4, 0.0) == doctest::Approx(3.0 / 8.0).epsilon(1e-14));
  CHECK(legendre_deriv(2, 0.5) == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("differentiation matrix is exact on polynomials") {
  Grid g = lgl_grid(6);
  Mat D = lagrange_diff_matrix(g);
  Vec ones = Vec::Ones(7);
  CHECK((D * ones).cwiseAbs().maxCoeff() < 1e-13);
  Vec p(7), dp(7);
  for (int i = 0; i <= 6; ++i) {
    double t = g.tau(i);
    p(i) = t * t * t - 2.0 * t;
    dp(i) = 3.0 * t * t - 2.0;
  }
  CHECK(((D * p) - dp).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("birkhoff matrix anchors at the left endpoint") {
  Grid g = lgl_grid(8);
  Mat B = birkhoff_matrix(g);
  CHECK(B.row(0).cwiseAbs().maxCoeff() == 0.0);
  Vec ones = Vec::Ones(9);
  Vec anti = B * ones;
  for (int i = 0; i <= 8; ++i)
    CHECK(anti(i) == doctest::Approx(g.tau(i) + 1.0).epsilon(1e-13));
  // Antiderivative of 3 tau^2 from -1: tau^3 + 1.
  Vec v(9);
  for (int i = 0; i <= 8; ++i) v(i) = 3.0 * g.tau(i) * g.tau(i);
  Vec iv = B * v;
  for (int i = 0; i <= 8; ++i)
    CHECK(iv(i) == doctest::Approx(std::pow(g.tau(i), 3) + 1.0).epsilon(1e-12));
}

TEST_CASE("differentiating the birkhoff antiderivative returns the input") {
  Grid g = lgl_grid(10);
  Mat D = lagrange_diff_matrix(g);
  Mat B = birkhoff_matrix(g);
  Mat DB = D * B;
  Mat I = Mat::Identity(11, 11);
  CHECK((DB - I).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("discretization pair identities") {
  for (int N : {4, 8, 16, 32}) {
    DiscretizationPair bp = assemble_pair(PairKind::BirkhoffLeft, N);
    Mat I = Mat::Identity(N + 1, N + 1);
    CHECK((bp.A_x + I).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((bp.As_lambda + I).cwiseAbs().maxCoeff() <= 1e-12);
    Mat Q = bp.grid.w.asDiagonal();
    Mat Qi = bp.grid.w.cwiseInverse().asDiagonal();
    CHECK((bp.As_omega - Qi * bp.A_v.transpose() * Q).cwiseAbs().maxCoeff() <= 1e-12);

    DiscretizationPair lp = assemble_pair(PairKind::LagrangeD, N);
    double worst = std::max((lp.A_x + I).cwiseAbs().maxCoeff(),
                            (lp.As_lambda + I).cwiseAbs().maxCoeff());
    CHECK(worst > 1e-6);
  }
}

TEST_CASE("barycentric interpolation reproduces polynomials and nodes") {
  Grid g = lgl_grid(7);
  Vec f(8);
  for (int i = 0; i <= 7; ++i) f(i) = std::pow(g.tau(i), 5) - g.tau(i);
  Vec bw = barycentric_weights(g.tau);
  for (int i = 0; i <= 7; ++i) CHECK(barycentric_eval(g.tau, bw, f, g.tau(i)) == f(i));
  for (double tq : {-0.9123, -0.25, 0.3331, 0.98}) {
    CHECK(barycentric_eval(g.tau, bw, f, tq) ==
          doctest::Approx(std::pow(tq, 5) - tq).epsilon(1e-12));
  }
  Vec tq(3);
  tq << -0.5, 0.0, 0.5;
  Vec r = barycentric_interpolate(g.tau, f, tq);
  CHECK(r(1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("condition number of a diagonal matrix") {
  Mat m = Mat::Zero(3, 3);
  m(0, 0) = 4.0;
  m(1, 1) = 1.0;
  m(2, 2) = 0.5;
  CHECK(condition_number(m) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("condition growth study shapes and trend") {
  std::vector<int> Ns = {8, 16, 32};
  CondGrowthStudy b = cond_growth_study(PairKind::BirkhoffLeft, Ns);
  CondGrowthStudy l = cond_growth_study(PairKind::LagrangeD, Ns);
  REQUIRE(b.rows.size() == 3);
  CHECK(b.rows[0].N == 8);
  CHECK(b.growth_ratio ==
        doctest::Approx(b.rows.back().cond / b.rows.front().cond).epsilon(1e-12));
  CHECK(l.growth_ratio > b.growth_ratio);
}

TEST_CASE("linear block storage estimate grows with both dimensions") {
  CHECK(linear_block_doubles(3, 64) > linear_block_doubles(3, 32));
  CHECK(linear_block_doubles(6, 32) > linear_block_doubles(3, 32));
}
