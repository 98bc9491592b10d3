#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psopt/problem_file.hpp"
#include "psopt/solver.hpp"

using namespace psopt;

namespace {

// Reachable set of x' = u, |u| <= 1 on [0, 1] is [-1, 1]; target 5 is not in it.
OcpDefinition unreachable() {
  OcpDefinition ocp;
  ocp.name = "unreachable";
  ocp.n_x = 1;
  ocp.n_u = 1;
  ocp.n_e = 2;
  ocp.n_h = 1;
  ocp.running_cost = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, 0.5 * u(0) * u(0));
  });
  ocp.dynamics = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, u(0));
  });
  ocp.events = make_boundary_fn(
      2, [](const Vec& x0, const Vec& xf, double, double, const Vec&) {
        Vec e(2);
        e << x0(0), xf(0) - 5.0;
        return e;
      });
  ocp.path = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, u(0));
  });
  ocp.e_lo = Vec::Zero(2);
  ocp.e_hi = Vec::Zero(2);
  ocp.h_lo = Vec::Constant(1, -1.0);
  ocp.h_hi = Vec::Constant(1, 1.0);
  ocp.t0_lo = ocp.t0_hi = 0.0;
  ocp.tf_lo = ocp.tf_hi = 1.0;
  ocp.box.x_lo = Vec::Constant(1, -8.0);
  ocp.box.x_hi = Vec::Constant(1, 8.0);
  ocp.box.u_lo = Vec::Constant(1, -4.0);
  ocp.box.u_hi = Vec::Constant(1, 4.0);
  return ocp;
}

// Two path copies of the single state with opposing signs, both clamped at
// zero from the same side: the feasible set pinches to the point x = 0.
OcpDefinition pinched() {
  OcpDefinition ocp;
  ocp.name = "pinched";
  ocp.n_x = 1;
  ocp.n_u = 1;
  ocp.n_e = 1;
  ocp.n_h = 2;
  ocp.running_cost = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, 0.5 * u(0) * u(0));
  });
  ocp.dynamics = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, u(0));
  });
  ocp.events = make_boundary_fn(
      1, [](const Vec& x0, const Vec&, double, double, const Vec&) {
        return Vec::Constant(1, x0(0));
      });
  ocp.path = make_node_fn(2, [](const Vec& x, const Vec&, double, const Vec&) {
    Vec h(2);
    h << x(0), -x(0);
    return h;
  });
  ocp.e_lo = Vec::Zero(1);
  ocp.e_hi = Vec::Zero(1);
  ocp.h_lo = Vec::Zero(2);
  ocp.h_hi = Vec::Constant(2, kInf);
  ocp.t0_lo = ocp.t0_hi = 0.0;
  ocp.tf_lo = ocp.tf_hi = 1.0;
  ocp.box.x_lo = Vec::Constant(1, -2.0);
  ocp.box.x_hi = Vec::Constant(1, 2.0);
  ocp.box.u_lo = Vec::Constant(1, -2.0);
  ocp.box.u_hi = Vec::Constant(1, 2.0);
  return ocp;
}

}  // namespace

TEST_CASE("double integrator energy problem hits the closed form") {
  LoadedProblem lp = catalog_problem("lq");
  REQUIRE(lp.ok);
  SolverConfig cfg;
  cfg.n0 = cfg.n_max = 16;
  SolutionBundle s = solve(lp.ocp, cfg);
  REQUIRE(s.status == SolveStatus::Converged);
  CHECK(s.cost == doctest::Approx(0.5).epsilon(1e-8));
  for (int i = 0; i <= 16; ++i) {
    CHECK(std::abs(s.U(i, 0) - 1.0) < 1e-6);
    CHECK(std::abs(s.Lambda(i, 0) + 1.0) < 1e-6);
    CHECK(std::abs(s.H(i) + 0.5) < 1e-6);
  }
  CHECK(s.residual_inf <= 1e-8);
}

TEST_CASE("endpoint fit lands on the event targets") {
  LoadedProblem lp = catalog_problem("lq");
  REQUIRE(lp.ok);
  Vec x0, xf;
  fit_endpoints(lp.ocp, 0.0, 1.0, &x0, &xf);
  REQUIRE(x0.size() == 1);
  REQUIRE(xf.size() == 1);
  CHECK(std::abs(x0(0) - 0.0) < 1e-6);
  CHECK(std::abs(xf(0) - 1.0) < 1e-6);
}

TEST_CASE("starting iterates are well formed") {
  LoadedProblem lp = catalog_problem("robot");
  REQUIRE(lp.ok);
  Grid grid = lgl_grid(12);
  for (int priority = 1; priority <= 3; ++priority) {
    PrimalDual s = initial_iterate(lp.ocp, grid, priority, 3);
    REQUIRE(s.X.rows() == 13);
    REQUIRE(s.X.cols() == 3);
    REQUIRE(s.U.cols() == 2);
    REQUIRE(s.V.rows() == 13);
    CHECK(s.Lambda.isZero());
    CHECK(s.Mu.isZero());
    CHECK(s.t0 == 0.0);
    CHECK(s.tf > s.t0);
    for (int q = 0; q < 3; ++q) {
      CHECK(s.X.col(q).minCoeff() >= lp.ocp.box.x_lo(q) - 1e-12);
      CHECK(s.X.col(q).maxCoeff() <= lp.ocp.box.x_hi(q) + 1e-12);
    }
  }
  // The event-fit line starts and ends on the boundary targets.
  PrimalDual line = initial_iterate(lp.ocp, grid, 1, 3);
  CHECK(std::abs(line.X(0, 0) - 0.0) < 1e-6);
  CHECK(std::abs(line.X(12, 0) - 10.0) < 1e-6);
  // Different seeds only matter for the jittered priority.
  PrimalDual a = initial_iterate(lp.ocp, grid, 3, 5);
  PrimalDual b = initial_iterate(lp.ocp, grid, 3, 6);
  CHECK((a.X - b.X).cwiseAbs().maxCoeff() > 0.0);
  PrimalDual c = initial_iterate(lp.ocp, grid, 3, 5);
  CHECK((a.X - c.X).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("elastic repair drives the primal violation down") {
  LoadedProblem lp = catalog_problem("lq");
  REQUIRE(lp.ok);
  GeneralizedEquation ge(lp.ocp, 8, 1e-2);
  PrimalDual s = initial_iterate(lp.ocp, ge.grid(), 2, 1);
  // The box-midpoint start ignores the boundary events entirely.
  Vec z = pack(ge.layout(), s);
  double before = ge.feasibility_inf(z);
  double after = elastic_repair(ge, &z);
  CHECK(before > 0.1);
  CHECK(after < before);
  CHECK(after < 1e-6);
  CHECK(ge.feasibility_inf(z) < 1e-6);
}

TEST_CASE("same seed reproduces the identical solution") {
  LoadedProblem lp = catalog_problem("lq");
  REQUIRE(lp.ok);
  SolverConfig cfg;
  cfg.n0 = cfg.n_max = 8;
  cfg.seed = 42;
  SolutionBundle a = solve(lp.ocp, cfg);
  SolutionBundle b = solve(lp.ocp, cfg);
  REQUIRE(a.status == SolveStatus::Converged);
  REQUIRE(b.status == SolveStatus::Converged);
  CHECK((a.X - b.X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.U - b.U).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.Lambda - b.Lambda).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.cost == b.cost);
}

TEST_CASE("an unreachable target is reported, not converged") {
  SolverConfig cfg;
  cfg.n0 = cfg.n_max = 8;
  SolutionBundle s = solve(unreachable(), cfg);
  CHECK(s.status != SolveStatus::Converged);
  CHECK(s.status != SolveStatus::FeasibleOnly);
}

TEST_CASE("degenerate activity is detected on a pinched iterate") {
  OcpDefinition ocp = pinched();
  Grid grid = lgl_grid(8);
  PrimalDual s = initial_iterate(ocp, grid, 1, 1);
  s.X.setZero();
  s.V.setZero();
  s.U.setZero();
  DegenerateActivity da = detect_degenerate_activity(ocp, grid, s, 1e-2);
  REQUIRE(da.flagged);
  CHECK(((da.row_a == 0 && da.row_b == 1) || (da.row_a == 1 && da.row_b == 0)));
  CHECK(da.cosine < -0.9);
  REQUIRE(da.direction.size() == 1);
  CHECK(std::abs(da.direction.cwiseAbs().maxCoeff() - 1.0) < 1e-12);

  PrimalDual bumped = s;
  apply_escape_bump(ocp, grid, da, 0, &bumped);
  // Endpoints hold (value and slope vanish there), the interior moves.
  CHECK(std::abs(bumped.X(0, 0) - s.X(0, 0)) < 1e-12);
  CHECK(std::abs(bumped.X(8, 0) - s.X(8, 0)) < 1e-12);
  CHECK((bumped.X - s.X).cwiseAbs().maxCoeff() > 1e-3);
  // Larger attempts swing harder.
  PrimalDual bigger = s;
  apply_escape_bump(ocp, grid, da, 2, &bigger);
  CHECK((bigger.X - s.X).cwiseAbs().maxCoeff() >
        (bumped.X - s.X).cwiseAbs().maxCoeff());
}

TEST_CASE("iteration log names its stages and tracks the grid") {
  LoadedProblem lp = catalog_problem("lq");
  REQUIRE(lp.ok);
  SolverConfig cfg;
  cfg.n0 = cfg.n_max = 8;
  SolutionBundle s = solve(lp.ocp, cfg);
  REQUIRE(s.status == SolveStatus::Converged);
  REQUIRE(!s.log.empty());
  for (const IterationRecord& rec : s.log) {
    CHECK((rec.stage == "stabilize" || rec.stage == "accelerate" || rec.stage == "refine"));
    CHECK(rec.N == 8);
    CHECK(std::isfinite(rec.merit));
  }
  CHECK(s.log.back().N == s.grid.N);
}
