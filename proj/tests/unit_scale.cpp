#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psopt/problem_file.hpp"
#include "psopt/scale.hpp"
#include "psopt/solver.hpp"

using namespace psopt;

namespace {

// One big state, one tiny control, wide time window: everything auto scaling
// has to normalize.
OcpDefinition lopsided() {
  OcpDefinition ocp;
  ocp.name = "lopsided";
  ocp.n_x = 1;
  ocp.n_u = 1;
  ocp.n_e = 2;
  ocp.running_cost = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, 0.5 * u(0) * u(0));
  });
  ocp.dynamics = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, 1e6 * u(0));
  });
  ocp.events = make_boundary_fn(
      2, [](const Vec& x0, const Vec& xf, double, double, const Vec&) {
        Vec e(2);
        e << x0(0), xf(0) - 1e6;
        return e;
      });
  ocp.e_lo = Vec::Zero(2);
  ocp.e_hi = Vec::Zero(2);
  ocp.t0_lo = ocp.t0_hi = 0.0;
  ocp.tf_lo = ocp.tf_hi = 1.0;
  ocp.box.x_lo = Vec::Constant(1, -2e6);
  ocp.box.x_hi = Vec::Constant(1, 2e6);
  ocp.box.u_lo = Vec::Constant(1, -4.0);
  ocp.box.u_hi = Vec::Constant(1, 4.0);
  return ocp;
}

// Two state channels with box widths six orders of magnitude apart.
OcpDefinition spread() {
  OcpDefinition ocp;
  ocp.name = "spread";
  ocp.n_x = 2;
  ocp.n_u = 1;
  ocp.n_e = 2;
  ocp.running_cost = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, 0.5 * u(0) * u(0));
  });
  ocp.dynamics = make_node_fn(2, [](const Vec& x, const Vec& u, double, const Vec&) {
    Vec f(2);
    f << 1e6 * u(0), x(0) * 1e-6;
    return f;
  });
  ocp.events = make_boundary_fn(
      2, [](const Vec& x0, const Vec& xf, double, double, const Vec&) {
        Vec e(2);
        e << x0(0), xf(0) - 1e6;
        return e;
      });
  ocp.e_lo = Vec::Zero(2);
  ocp.e_hi = Vec::Zero(2);
  ocp.t0_lo = ocp.t0_hi = 0.0;
  ocp.tf_lo = ocp.tf_hi = 1.0;
  ocp.box.x_lo = Vec(2);
  ocp.box.x_hi = Vec(2);
  ocp.box.x_lo << -2e6, -2.0;
  ocp.box.x_hi << 2e6, 2.0;
  ocp.box.u_lo = Vec::Constant(1, -4.0);
  ocp.box.u_hi = Vec::Constant(1, 4.0);
  return ocp;
}

}  // namespace

TEST_CASE("identity scaling is the identity") {
  LoadedProblem lp = catalog_problem("robot");
  REQUIRE(lp.ok);
  ScalingMap m = identity_scaling(lp.ocp);
  CHECK(m.gx.isOnes());
  CHECK(m.sx.isZero());
  CHECK(m.gu.isOnes());
  CHECK(m.su.isZero());
  CHECK(m.gt == 1.0);
  CHECK(m.st == 0.0);
  CHECK(m.gJ == 1.0);
}

TEST_CASE("auto scaling sends the search box to the unit box") {
  OcpDefinition ocp = lopsided();
  ScalingMap m = auto_scaling(ocp);
  CHECK(m.gx(0) * ocp.box.x_hi(0) + m.sx(0) == doctest::Approx(1.0));
  CHECK(m.gx(0) * ocp.box.x_lo(0) + m.sx(0) == doctest::Approx(-1.0));
  CHECK(m.gu(0) * ocp.box.u_hi(0) + m.su(0) == doctest::Approx(1.0));
  CHECK(m.gu(0) * ocp.box.u_lo(0) + m.su(0) == doctest::Approx(-1.0));

  OcpDefinition scaled = apply_scaling(ocp, m);
  CHECK(scaled.box.x_hi(0) == doctest::Approx(1.0));
  CHECK(scaled.box.x_lo(0) == doctest::Approx(-1.0));
  CHECK(scaled.box.u_hi(0) == doctest::Approx(1.0));
  CHECK(scaled.box.u_lo(0) == doctest::Approx(-1.0));
}

TEST_CASE("scaled dynamics are the chain rule of the original") {
  OcpDefinition ocp = lopsided();
  ScalingMap m = auto_scaling(ocp);
  OcpDefinition scaled = apply_scaling(ocp, m);

  // xt' = gx/gt * f(x(xt), u(ut), t(tt))
  Vec xt = Vec::Constant(1, 0.25), ut = Vec::Constant(1, -0.5);
  double tt = m.gt * 0.3 + m.st;
  Vec u_phys = (ut - m.su).cwiseQuotient(m.gu);
  Vec want = (m.gx / m.gt).cwiseProduct(Vec::Constant(1, 1e6 * u_phys(0)));
  Vec got = scaled.dynamics->value(xt, ut, tt, Vec());
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12 * want.cwiseAbs().maxCoeff());
}

TEST_CASE("unscale after scale is a round trip") {
  OcpDefinition ocp = lopsided();
  ScalingMap m = auto_scaling(ocp);

  SolutionBundle sol;
  sol.grid = lgl_grid(4);
  int n = 5;
  sol.X = Mat::Random(n, 1);
  sol.U = Mat::Random(n, 1);
  sol.Lambda = Mat::Random(n, 1);
  sol.Mu = Mat(n, 0);
  sol.nu = Vec::Random(2);
  sol.H = Vec::Random(n);
  sol.t = Vec::LinSpaced(n, 0.0, 1.0);
  sol.t0 = 0.0;
  sol.tf = 1.0;
  sol.cost = 0.7;

  SolutionBundle phys = sol;
  unscale_solution(m, &phys);
  // Map the physical values forward by hand and compare to the scaled input.
  for (int i = 0; i < n; ++i) {
    CHECK(m.gx(0) * phys.X(i, 0) + m.sx(0) == doctest::Approx(sol.X(i, 0)));
    CHECK(m.gu(0) * phys.U(i, 0) + m.su(0) == doctest::Approx(sol.U(i, 0)));
    CHECK(phys.Lambda(i, 0) == doctest::Approx(sol.Lambda(i, 0) * m.gx(0) / m.gJ));
  }
  CHECK(m.gt * phys.tf + m.st == doctest::Approx(sol.tf));
  CHECK(phys.cost == doctest::Approx(sol.cost / m.gJ));
}

TEST_CASE("row weights are positive and tame large rows") {
  OcpDefinition ocp = lopsided();
  Vec wd = dynamics_row_weights(ocp);
  Vec we = event_row_weights(ocp);
  REQUIRE(wd.size() == 1);
  REQUIRE(we.size() == 2);
  CHECK(wd.minCoeff() > 0.0);
  CHECK(we.minCoeff() > 0.0);
  // The xf - 1e6 event row is huge at the reference point; its weight must
  // shrink it to order one.
  CHECK(we(1) <= 1e-5);
  LoadedProblem lq = catalog_problem("lq");
  REQUIRE(lq.ok);
  CHECK(dynamics_row_weights(lq.ocp).minCoeff() > 0.0);
  CHECK(path_row_weights(lq.ocp).size() == lq.ocp.n_h);
}

TEST_CASE("imbalance report flags a lopsided definition and not a clean one") {
  std::vector<Diagnostic> bad = imbalance_report(spread());
  REQUIRE(!bad.empty());
  bool box_warning = false;
  for (const auto& d : bad) box_warning |= d.code == "imbalanced_state_box";
  CHECK(box_warning);
  LoadedProblem lq = catalog_problem("lq");
  REQUIRE(lq.ok);
  CHECK(imbalance_report(lq.ocp).empty());
}

TEST_CASE("post-solve imbalance report flags runaway covectors") {
  LoadedProblem lq = catalog_problem("lq");
  REQUIRE(lq.ok);
  SolverConfig cfg;
  cfg.n0 = cfg.n_max = 8;
  SolutionBundle s = solve(lq.ocp, cfg);
  REQUIRE(s.status == SolveStatus::Converged);
  CHECK(imbalance_report(s).empty());
  SolutionBundle forged = s;
  forged.Lambda.col(0).array() = 1e10;
  CHECK(!imbalance_report(forged).empty());
}
