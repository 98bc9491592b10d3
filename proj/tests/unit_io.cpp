#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "psopt/io.hpp"
#include "psopt/problem_file.hpp"

using namespace psopt;

namespace {

std::filesystem::path work_dir() {
  auto d = std::filesystem::temp_directory_path() / "psopt_io_test";
  std::filesystem::create_directories(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
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

}  // namespace

TEST_CASE("solution csv carries one row per node and full precision") {
  LoadedProblem lp = catalog_problem("lq");
  const SolutionBundle& s = lq_solution();
  REQUIRE(s.status == SolveStatus::Converged);
  auto path = work_dir() / "solution.csv";
  write_solution_csv(path.string(), lp.ocp, s);

  std::string text = slurp(path);
  CHECK(text.find('\r') == std::string::npos);
  std::vector<std::string> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  REQUIRE(lines.size() == 10);  // header + 9 nodes

  std::vector<std::string> header = split(lines[0], ',');
  int lambda_cols = 0;
  for (const std::string& h : header) lambda_cols += h.rfind("lambda_", 0) == 0;
  CHECK(lambda_cols == lp.ocp.n_x);
  CHECK(header.front() == "t");

  // Round trip: parse u_0 back and compare bitwise to the bundle.
  int u_col = -1;
  for (int k = 0; k < (int)header.size(); ++k)
    if (header[k] == "u_0") u_col = k;
  REQUIRE(u_col >= 0);
  for (int i = 0; i < 9; ++i) {
    std::vector<std::string> cells = split(lines[1 + i], ',');
    CHECK(std::stod(cells[u_col]) == s.U(i, 0));
  }
}

TEST_CASE("events csv has one row per event with covectors") {
  LoadedProblem lp = catalog_problem("lq");
  const SolutionBundle& s = lq_solution();
  auto path = work_dir() / "events.csv";
  write_events_csv(path.string(), lp.ocp, s);
  std::vector<std::string> lines = split(slurp(path), '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  REQUIRE((int)lines.size() == 1 + lp.ocp.n_e);
  std::vector<std::string> header = split(lines[0], ',');
  REQUIRE(header.size() == 5);
  CHECK(header[0] == "k");
  CHECK(header[4] == "nu");
  for (int k = 0; k < lp.ocp.n_e; ++k) {
    std::vector<std::string> cells = split(lines[1 + k], ',');
    CHECK(std::stoi(cells[0]) == k);
    CHECK(std::stod(cells[4]) == s.nu(k));
  }
}

TEST_CASE("run json validates and survives a verification block") {
  LoadedProblem lp = catalog_problem("lq");
  const SolutionBundle& s = lq_solution();
  SolverConfig cfg;
  cfg.n0 = cfg.n_max = 8;
  VnvReport rep = verify(lp.ocp, s, 1e-8);

  std::string why;
  std::string with = make_run_json(lp.ocp, cfg, identity_scaling(lp.ocp), s, &rep);
  CHECK(validate_run_json(with, &why));
  CHECK(why.empty());
  std::string without = make_run_json(lp.ocp, cfg, identity_scaling(lp.ocp), s, nullptr);
  CHECK(validate_run_json(without, &why));

  CHECK(!validate_run_json("{}", &why));
  CHECK(!why.empty());
  why.clear();
  CHECK(!validate_run_json("not json at all", &why));
  CHECK(!why.empty());

  // The verification block carries the headline verdict fields.
  CHECK(with.find("hamiltonian_mean") != std::string::npos);
  CHECK(with.find("bundle_hash") != std::string::npos);
}

TEST_CASE("vnv artifacts are written next to each other") {
  LoadedProblem lp = catalog_problem("lq");
  const SolutionBundle& s = lq_solution();
  VnvReport rep = verify(lp.ocp, s, 1e-8);

  auto tpath = work_dir() / "vnv.txt";
  write_vnv_text(tpath.string(), rep);
  std::string text = slurp(tpath);
  CHECK(text == rep.text());
  CHECK(!text.empty());

  auto cpath = work_dir() / "vnv_trace.csv";
  write_vnv_trace_csv(cpath.string(), lp.ocp, s, rep);
  std::vector<std::string> lines = split(slurp(cpath), '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  REQUIRE(lines.size() == 10);
  std::vector<std::string> header = split(lines[0], ',');
  CHECK(header[0] == "t");
  CHECK(header[1] == "H");
  bool has_lambda = false, has_switch = false;
  for (const std::string& h : header) {
    has_lambda |= h == "lambda_0";
    has_switch |= h.rfind("switch_", 0) == 0;
  }
  CHECK(has_lambda);
  CHECK(has_switch);
}

TEST_CASE("write failures name the offending path") {
  LoadedProblem lp = catalog_problem("lq");
  const SolutionBundle& s = lq_solution();
  std::string bogus = "/nonexistent_dir_zz/out.csv";
  try {
    write_solution_csv(bogus, lp.ocp, s);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(bogus) != std::string::npos);
  }
  CHECK_THROWS_AS(write_text_file("/nonexistent_dir_zz/x.txt", "hi"), std::runtime_error);
}

TEST_CASE("log level env override") {
  unsetenv("PSOPT_LOG");
  CHECK(log_level_from_env(1) == 1);
  setenv("PSOPT_LOG", "2", 1);
  CHECK(log_level_from_env(0) == 2);
  setenv("PSOPT_LOG", "garbage", 1);
  CHECK(log_level_from_env(1) == 1);
  setenv("PSOPT_LOG", "", 1);
  CHECK(log_level_from_env(1) == 1);
  unsetenv("PSOPT_LOG");
}
