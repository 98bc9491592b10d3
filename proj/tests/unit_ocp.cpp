#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psopt/ocp.hpp"
#include "psopt/problem_file.hpp"

using namespace psopt;

namespace {

OcpDefinition tiny_lq() {
  OcpDefinition ocp;
  ocp.name = "tiny_lq";
  ocp.n_x = 1;
  ocp.n_u = 1;
  ocp.n_e = 2;
  ocp.running_cost = make_node_fn(1, [](const Vec&, const Vec& u, double, const Vec&) {
    return Vec::Constant(1, 0.5 * u(0) * u(0));
  });
  ocp.dynamics = make_node_fn(
      1, [](const Vec&, const Vec& u, double, const Vec&) { return u; });
  ocp.events = make_boundary_fn(
      2, [](const Vec& x0, const Vec& xf, double, double, const Vec&) {
        Vec e(2);
        e << x0(0), xf(0);
        return e;
      });
  ocp.e_lo = Vec::Zero(2);
  ocp.e_hi = Vec::Zero(2);
  ocp.e_lo(1) = ocp.e_hi(1) = 1.0;
  ocp.t0_lo = ocp.t0_hi = 0.0;
  ocp.tf_lo = ocp.tf_hi = 1.0;
  ocp.box.x_lo = Vec::Constant(1, -2.0);
  ocp.box.x_hi = Vec::Constant(1, 2.0);
  ocp.box.u_lo = Vec::Constant(1, -3.0);
  ocp.box.u_hi = Vec::Constant(1, 3.0);
  return ocp;
}

}  // namespace

TEST_CASE("default finite-difference jacobians match analytic partials") {
  auto fn = make_node_fn(2, [](const Vec& x, const Vec& u, double t, const Vec& p) {
    Vec v(2);
    v << x(0) * x(0) + 3.0 * u(0) + t, std::sin(x(1)) + p(0) * u(0);
    return v;
  });
  Vec x(2), u(1), p(1);
  x << 0.4, -0.9;
  u << 1.3;
  p << 2.0;
  Mat Jx, Ju, Jp;
  Vec Jt;
  fn->jacobians(x, u, 0.7, p, &Jx, &Ju, &Jt, &Jp);
  CHECK(Jx(0, 0) == doctest::Approx(0.8).epsilon(1e-5));
  CHECK(Jx(0, 1) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(Jx(1, 1) == doctest::Approx(std::cos(-0.9)).epsilon(1e-5));
  CHECK(Ju(0, 0) == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(Ju(1, 0) == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(Jt(0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(Jp(1, 0) == doctest::Approx(1.3).epsilon(1e-5));
}

TEST_CASE("fd step scales with magnitude") {
  CHECK(fd_step(0.0) == doctest::Approx(1e-6));
  CHECK(fd_step(1e4) >= 1e-3);
}

TEST_CASE("shape-checked evaluation throws on dimension mismatch") {
  OcpDefinition ocp = tiny_lq();
  // Dynamics claiming 2 outputs for a 1-state problem.
  ocp.dynamics = make_node_fn(2, [](const Vec&, const Vec& u, double, const Vec&) {
    Vec v(2);
    v << u(0), 0.0;
    return v;
  });
  Vec x(1), u(1);
  x << 0.0;
  u << 0.0;
  CHECK_THROWS_AS(eval_functions(ocp, x, u, 0.0, Vec()), std::runtime_error);
}

TEST_CASE("doctor passes a healthy problem") {
  std::vector<Diagnostic> d = doctor(tiny_lq());
  CHECK(!has_errors(d));
}

TEST_CASE("doctor flags a degenerate horizon") {
  OcpDefinition ocp = tiny_lq();
  ocp.tf_lo = ocp.tf_hi = 0.0;  // tf window collapses onto t0
  std::vector<Diagnostic> d = doctor(ocp);
  CHECK(has_errors(d));
}

TEST_CASE("doctor flags inverted bounds and missing functions") {
  OcpDefinition ocp = tiny_lq();
  ocp.e_lo(0) = 1.0;
  ocp.e_hi(0) = -1.0;
  CHECK(has_errors(doctor(ocp)));

  OcpDefinition no_dyn = tiny_lq();
  no_dyn.dynamics.reset();
  CHECK(has_errors(doctor(no_dyn)));
}

TEST_CASE("doctor flags non-finite values at the search-box midpoint") {
  OcpDefinition ocp = tiny_lq();
  ocp.running_cost = make_node_fn(1, [](const Vec&, const Vec&, double, const Vec&) {
    return Vec::Constant(1, std::numeric_limits<double>::quiet_NaN());
  });
  CHECK(has_errors(doctor(ocp)));
}

TEST_CASE("box helpers") {
  Vec lo(2), hi(2), v(2);
  lo << -1.0, 0.0;
  hi << 1.0, 4.0;
  Vec mid = box_midpoint(lo, hi);
  CHECK(mid(0) == 0.0);
  CHECK(mid(1) == 2.0);
  v << -3.0, 5.0;
  Vec c = box_clip(v, lo, hi);
  CHECK(c(0) == -1.0);
  CHECK(c(1) == 4.0);
}

TEST_CASE("catalog problems pass doctor") {
  for (const std::string& name : catalog_names()) {
    LoadedProblem lp = catalog_problem(name);
    REQUIRE(lp.ok);
    CHECK(!has_errors(doctor(lp.ocp)));
  }
}
