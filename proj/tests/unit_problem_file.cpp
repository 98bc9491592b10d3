#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "psopt/problem_file.hpp"

using namespace psopt;

namespace {

const char* kGoodText = R"(
name = shifted_lq

[dimensions]
states = 1
controls = 1

[constants]
gain = 2.5

[cost]
running = 0.5 * gain * u[0]^2

[dynamics]
f[0] = u[0]

[events]
e[0] = x0[0] in [0, 0]
e[1] = xf[0] in [1, 1]

[time]
t0 in [0, 0]
tf in [1, 1]

[search]
x[0] in [-2, 2]
u[0] in [-3, 3]

[solver]
n0 = 8
seed = 11
)";

bool has_code(const std::vector<Diagnostic>& d, const std::string& code) {
  return std::any_of(d.begin(), d.end(),
                     [&](const Diagnostic& x) { return x.code == code; });
}

}  // namespace

TEST_CASE("well-formed text loads cleanly") {
  LoadedProblem lp = parse_problem_text(kGoodText);
  REQUIRE(lp.ok);
  CHECK(lp.ocp.name == "shifted_lq");
  CHECK(lp.ocp.n_x == 1);
  CHECK(lp.ocp.n_u == 1);
  CHECK(lp.ocp.n_e == 2);
  CHECK(lp.ocp.n_h == 0);
  CHECK(lp.ocp.constants.at("gain") == 2.5);
  CHECK(lp.solver_settings.at("n0") == 8);
  Vec x(1), u(1);
  x << 0.0;
  u << 2.0;
  PathEval pe = eval_functions(lp.ocp, x, u, 0.0, Vec());
  CHECK(pe.F == doctest::Approx(0.5 * 2.5 * 4.0));
  CHECK(pe.f(0) == doctest::Approx(2.0));
}

TEST_CASE("solver settings apply onto the config with warnings for junk") {
  LoadedProblem lp = parse_problem_text(kGoodText);
  REQUIRE(lp.ok);
  SolverConfig cfg;
  lp.solver_settings["bogus_key"] = 1.0;
  std::vector<Diagnostic> d = apply_solver_settings(lp.solver_settings, &cfg);
  CHECK(cfg.n0 == 8);
  CHECK(cfg.seed == 11u);
  CHECK(has_code(d, "bad_solver_setting"));
}

TEST_CASE("missing search entries are errors") {
  std::string text = kGoodText;
  text.erase(text.find("x[0] in [-2, 2]"), 16);
  LoadedProblem lp = parse_problem_text(text);
  CHECK(!lp.ok);
  CHECK(has_code(lp.diagnostics, "missing_search"));
}

TEST_CASE("parameter entries in search are rejected") {
  std::string text = kGoodText;
  text += "\n[search]\np[0] in [-1, 1]\n";
  LoadedProblem lp = parse_problem_text(text);
  CHECK(!lp.ok);
  CHECK(has_code(lp.diagnostics, "bad_search"));
}

TEST_CASE("out-of-range indices are reported with the offending section") {
  std::string text = kGoodText;
  text.replace(text.find("f[0] = u[0]"), 11, "f[0] = u[2]");
  LoadedProblem lp = parse_problem_text(text);
  CHECK(!lp.ok);
}

TEST_CASE("unknown constants are load-time errors") {
  std::string text = kGoodText;
  text.replace(text.find("0.5 * gain"), 10, "0.5 * gian");
  LoadedProblem lp = parse_problem_text(text);
  CHECK(!lp.ok);
}

TEST_CASE("syntax errors carry the line number of the expression") {
  std::string text = kGoodText;
  text.replace(text.find("f[0] = u[0]"), 11, "f[0] = u[0] +");
  LoadedProblem lp = parse_problem_text(text);
  REQUIRE(!lp.ok);
  bool mentions_line = false;
  for (const auto& d : lp.diagnostics)
    if (d.severity == Severity::Error && d.message.find("line") != std::string::npos)
      mentions_line = true;
  CHECK(mentions_line);
}

TEST_CASE("loading a missing file fails with a diagnostic") {
  LoadedProblem lp = load_problem_file("definitely_missing.prob");
  CHECK(!lp.ok);
}

TEST_CASE("catalog lists lq and robot") {
  std::vector<std::string> names = catalog_names();
  CHECK(std::find(names.begin(), names.end(), "lq") != names.end());
  CHECK(std::find(names.begin(), names.end(), "robot") != names.end());
  CHECK(catalog_text("lq") != nullptr);
  CHECK(catalog_text("nope") == nullptr);
  CHECK_THROWS(catalog_problem("nope"));
}

TEST_CASE("robot catalog geometry") {
  LoadedProblem lp = catalog_problem("robot");
  REQUIRE(lp.ok);
  const OcpDefinition& ocp = lp.ocp;
  CHECK(ocp.n_x == 3);
  CHECK(ocp.n_u == 2);
  CHECK(ocp.n_e == 6);
  CHECK(ocp.n_h == 4);
  CHECK(ocp.constants.at("c") == 1.0);

  // Start (0,0,0) and target (10,0,0) pinned as equality event rows.
  Vec x0 = Vec::Zero(3);
  Vec xf(3);
  xf << 10.0, 0.0, 0.0;
  EndpointEval ee = eval_endpoint(ocp, x0, xf, 0.0, 10.0, Vec());
  for (int k = 0; k < 6; ++k) {
    CHECK(ocp.e_lo(k) == ocp.e_hi(k));
    CHECK(ee.e(k) == doctest::Approx(ocp.e_lo(k)).epsilon(1e-12));
  }

  // The two keep-out circles touch at (5, 0): both rows vanish there when
  // the radii are r = 1.1 around centers (5, +-1.1).
  Vec xt(3), u0(2);
  xt << 5.0, 0.0, 0.0;
  u0 << 0.0, 0.0;
  PathEval pe = eval_functions(ocp, xt, u0, 0.0, Vec());
  CHECK(pe.h(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pe.h(1) == doctest::Approx(0.0).epsilon(1e-12));

  // Control-bound rows copy the controls with omega in [-1, 1].
  CHECK(pe.h(2) == doctest::Approx(0.0));
  CHECK(ocp.h_lo(2) == -1.0);
  CHECK(ocp.h_hi(2) == 1.0);
  CHECK(ocp.h_lo(3) == -1.0);
  CHECK(ocp.h_hi(3) == 1.0);

  // Time window is wide (free final time).
  CHECK(ocp.tf_lo < ocp.tf_hi);
}

TEST_CASE("lq catalog matches the analytic setup") {
  LoadedProblem lp = catalog_problem("lq");
  REQUIRE(lp.ok);
  CHECK(lp.ocp.n_x == 1);
  CHECK(lp.ocp.n_u == 1);
  CHECK(lp.ocp.t0_lo == 0.0);
  CHECK(lp.ocp.tf_hi == 1.0);
  Vec x(1), u(1);
  x << 0.3;
  u << 1.0;
  PathEval pe = eval_functions(lp.ocp, x, u, 0.5, Vec());
  CHECK(pe.F == doctest::Approx(0.5));
  CHECK(pe.f(0) == doctest::Approx(1.0));
}
