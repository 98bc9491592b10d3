#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psopt/problem_file.hpp"
#include "psopt/solver.hpp"
#include "psopt/vnv.hpp"

using namespace psopt;

namespace {

// One bounded control copied into a path row, for curve reconstruction tests.
OcpDefinition bounded_control() {
  OcpDefinition ocp;
  ocp.name = "bounded_control";
  ocp.n_x = 1;
  ocp.n_u = 1;
  ocp.n_e = 1;
  ocp.n_h = 1;
  ocp.running_cost = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, 0.5 * u(0) * u(0));
  });
  ocp.dynamics = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, u(0));
  });
  ocp.events = make_boundary_fn(1, [](const Vec& x0, const Vec&, double, double,
                                      const Vec&) { return Vec::Constant(1, x0(0)); });
  ocp.path = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, u(0));
  });
  ocp.e_lo = Vec::Zero(1);
  ocp.e_hi = Vec::Zero(1);
  ocp.h_lo = Vec::Constant(1, -1.0);
  ocp.h_hi = Vec::Constant(1, 1.0);
  ocp.t0_lo = ocp.t0_hi = 0.0;
  ocp.tf_lo = ocp.tf_hi = 1.0;
  ocp.box.x_lo = Vec::Constant(1, -2.0);
  ocp.box.x_hi = Vec::Constant(1, 2.0);
  ocp.box.u_lo = Vec::Constant(1, -2.0);
  ocp.box.u_hi = Vec::Constant(1, 2.0);
  return ocp;
}

OcpDefinition frozen_state() {
  OcpDefinition ocp = bounded_control();
  ocp.name = "frozen_state";
  ocp.dynamics = make_node_fn(1, [](const Vec&, const Vec&, double, const Vec&) {
    return Vec::Constant(1, 0.0);
  });
  ocp.events = make_boundary_fn(1, [](const Vec& x0, const Vec&, double, double,
                                      const Vec&) { return Vec::Constant(1, x0(0) - 1.0); });
  return ocp;
}

const SolutionBundle& lq_solution() {
  static SolutionBundle s = [] {
    LoadedProblem lp = catalog_problem("lq");
    SolverConfig cfg;
    cfg.n0 = cfg.n_max = 8;
    return solve(lp.ocp, cfg);
  }();
  return s;
}

const SolutionBundle& robot_solution() {
  static SolutionBundle s = [] {
    LoadedProblem lp = catalog_problem("robot");
    SolverConfig cfg;
    cfg.n0 = 16;
    cfg.n_max = 64;
    return solve(lp.ocp, cfg);
  }();
  return s;
}

}  // namespace

TEST_CASE("control curve labels bound nodes and refines the switch") {
  OcpDefinition ocp = bounded_control();
  Grid grid = lgl_grid(8);
  Mat X = Mat::Zero(9, 1);
  Mat U(9, 1);
  for (int i = 0; i <= 8; ++i) U(i, 0) = grid.tau(i) < -0.1 ? 1.0 : -1.0;
  ControlCurve curve(ocp, grid, U, X, 0.0, 1.0, Vec());

  REQUIRE(curve.channel_bounded(0));
  CHECK(curve.bound_lo(0) == -1.0);
  CHECK(curve.bound_hi(0) == 1.0);
  for (int i = 0; i <= 3; ++i) CHECK(curve.node_label(0, i) == 1);
  for (int i = 4; i <= 8; ++i) CHECK(curve.node_label(0, i) == -1);

  REQUIRE(curve.switches().size() == 1);
  double sw = curve.switches()[0].tau;
  CHECK(sw > grid.tau(3));
  CHECK(sw < grid.tau(4));

  // Inside an at-bound run the curve sits exactly on the bound.
  CHECK(curve.at_tau(-0.8)(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(curve.at_tau(0.6)(0) == doctest::Approx(-1.0).epsilon(1e-12));
  // Queries hugging the switch hold the near-side value instead of
  // interpolating across the jump.
  CHECK(curve.at_tau(sw - 1e-7)(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(curve.at_tau(sw + 1e-7)(0) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("unbounded channels interpolate exactly") {
  OcpDefinition ocp = bounded_control();
  ocp.n_h = 0;          // drop the path row; the channel is now free
  ocp.path = nullptr;
  ocp.h_lo = Vec(0);
  ocp.h_hi = Vec(0);
  Grid grid = lgl_grid(8);
  Mat X = Mat::Zero(9, 1);
  Mat U(9, 1);
  for (int i = 0; i <= 8; ++i) U(i, 0) = grid.tau(i) * grid.tau(i);
  ControlCurve curve(ocp, grid, U, X, 0.0, 1.0, Vec());
  CHECK(!curve.channel_bounded(0));
  CHECK(curve.switches().empty());
  CHECK(curve.at_tau(0.37)(0) == doctest::Approx(0.37 * 0.37).epsilon(1e-13));
}

TEST_CASE("propagation of frozen dynamics reproduces the report exactly") {
  OcpDefinition ocp = frozen_state();
  Grid grid = lgl_grid(4);
  Mat X = Mat::Ones(5, 1);
  Mat U = Mat::Constant(5, 1, 0.3);
  ControlCurve curve(ocp, grid, U, X, 0.0, 1.0, Vec());
  PropagationCheck pc = propagate_feasibility(ocp, grid, X, curve, 0.0, 1.0, Vec(), 1e-8);
  REQUIRE(pc.ran);
  CHECK(pc.max_node_error < 1e-14);
  CHECK(pc.terminal_error < 1e-14);
  CHECK(pc.pass);
  CHECK(pc.reported_error >= pc.error_floor);
  REQUIRE(pc.optimization_errors.size() == 1);
  REQUIRE(pc.truth_errors.size() == 1);
  CHECK(pc.optimization_errors(0) < 1e-14);
  CHECK(pc.truth_errors(0) < 1e-14);
}

TEST_CASE("propagation tracks a solved trajectory") {
  const SolutionBundle& s = lq_solution();
  REQUIRE(s.status == SolveStatus::Converged);
  LoadedProblem lp = catalog_problem("lq");
  ControlCurve curve(lp.ocp, s.grid, s.U, s.X, s.t0, s.tf, s.p);
  PropagationCheck pc =
      propagate_feasibility(lp.ocp, s.grid, s.X, curve, s.t0, s.tf, s.p, 1e-8);
  REQUIRE(pc.ran);
  CHECK(pc.max_node_error < 1e-7);
  CHECK(pc.pass);
  CHECK(pc.steps > 0);
}

TEST_CASE("error floor pins what a tolerance can promise") {
  ErrorFloor tight = error_floor(1e-12);
  CHECK(tight.effective == 1e-8);
  CHECK(tight.note.find("raised") != std::string::npos);
  ErrorFloor loose = error_floor(1e-4);
  CHECK(loose.effective == 1e-4);
  CHECK(loose.note.find("raised") == std::string::npos);
  // Both spell out the practical limit on reconstructed controls.
  CHECK(tight.note.find("1e-06") != std::string::npos);
  CHECK(loose.note.find("1e-06") != std::string::npos);
}

TEST_CASE("smooth problem verifies clean") {
  const SolutionBundle& s = lq_solution();
  REQUIRE(s.status == SolveStatus::Converged);
  LoadedProblem lp = catalog_problem("lq");
  VnvReport rep = verify(lp.ocp, s, 1e-8);
  CHECK(rep.all_pass);
  CHECK(rep.propagation.pass);
  CHECK(rep.hamiltonian_mean == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(rep.hamiltonian_dev < 1e-6);
  CHECK(rep.complementarity_verdict);
  CHECK(rep.switches.empty());
  CHECK(rep.jump_times.empty());
  REQUIRE(!rep.costate_flat_segments.empty());
  CHECK(rep.costate_flat_segments[0].first == 0);
  CHECK(rep.costate_flat_segments[0].second == s.grid.N);
  CHECK(!rep.text().empty());
}

TEST_CASE("verification is deterministic and hash-sensitive") {
  const SolutionBundle& s = lq_solution();
  LoadedProblem lp = catalog_problem("lq");
  VnvReport a = verify(lp.ocp, s, 1e-8);
  VnvReport b = verify(lp.ocp, s, 1e-8);
  CHECK(a.bundle_hash == b.bundle_hash);
  CHECK(a.text() == b.text());
  SolutionBundle tweaked = s;
  tweaked.X(4, 0) += 1e-6;
  VnvReport c = verify(lp.ocp, tweaked, 1e-8);
  CHECK(c.bundle_hash != a.bundle_hash);
}

TEST_CASE("bang-bang battery: switching structure is recovered and attributed") {
  const SolutionBundle& s = robot_solution();
  REQUIRE(s.status == SolveStatus::Converged);
  LoadedProblem lp = catalog_problem("robot");
  VnvReport rep = verify(lp.ocp, s, 1e-8);

  REQUIRE(rep.switching_verdicts.size() == 2);
  CHECK(rep.switching_verdicts[0]);
  CHECK(rep.switching_verdicts[1]);

  CHECK(rep.hamiltonian_mean > -1.05);
  CHECK(rep.hamiltonian_mean < -0.95);

  CHECK(!rep.costate_flat_segments.empty());
  REQUIRE(rep.jump_times.size() == 1);
  CHECK(rep.jump_times[0] > s.t0);
  CHECK(rep.jump_times[0] < s.tf);

  // The costate step sits where the path multiplier spikes: the largest
  // multiplier node must lie within a couple of grid spacings of the jump.
  int spike_node = 0, spike_row = 0;
  double best = -1.0;
  for (int i = 0; i <= s.grid.N; ++i)
    for (int j = 0; j < s.Mu.cols(); ++j)
      if (std::abs(s.Mu(i, j)) > best) {
        best = std::abs(s.Mu(i, j));
        spike_node = i;
        spike_row = j;
      }
  (void)spike_row;
  double spacing = 0.0;
  for (int i = 1; i <= s.grid.N; ++i)
    spacing = std::max(spacing, s.t(i) - s.t(i - 1));
  CHECK(std::abs(s.t(spike_node) - rep.jump_times[0]) <= 2.0 * spacing);

  CHECK(rep.complementarity_verdict);
  REQUIRE(rep.terminal_truth_errors.size() == 6);
  CHECK(rep.terminal_truth_errors.maxCoeff() < 0.15);
}
