#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "psopt/io.hpp"
#include "psopt/problem_file.hpp"
#include "psopt/scale.hpp"
#include "psopt/solver.hpp"
#include "psopt/vnv.hpp"

namespace {

void print_diagnostics(const std::vector<psopt::Diagnostic>& diags) {
  for (const auto& d : diags) {
    const char* sev = d.severity == psopt::Severity::Error     ? "error"
                      : d.severity == psopt::Severity::Warning ? "warning"
                                                               : "info";
    std::fprintf(stderr, "%s [%s] %s\n", sev, d.code.c_str(), d.message.c_str());
  }
}

psopt::LoadedProblem load(const std::string& path, const std::string& cat, bool* ok) {
  *ok = false;
  if (!cat.empty()) {
    if (!psopt::catalog_text(cat)) {
      std::fprintf(stderr, "error [unknown_catalog] no catalog entry '%s'\n",
                   cat.c_str());
      std::fprintf(stderr, "available:");
      for (const auto& n : psopt::catalog_names()) std::fprintf(stderr, " %s", n.c_str());
      std::fprintf(stderr, "\n");
      return {};
    }
    *ok = true;
    return psopt::catalog_problem(cat);
  }
  psopt::LoadedProblem lp = psopt::load_problem_file(path);
  *ok = true;
  return lp;
}

int exit_code(psopt::SolveStatus s) {
  switch (s) {
    case psopt::SolveStatus::Converged: return 0;
    case psopt::SolveStatus::FeasibleOnly: return 2;
    default: return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guess-free pseudospectral optimal control solver"};
  app.require_subcommand(1);

  std::string path, cat, out_dir = ".";
  int n0 = -1, nmax = -1, log_level = 1;
  double tol = -1.0;
  unsigned seed = 1;
  bool no_vnv = false;

  CLI::App* run = app.add_subcommand(
      "run", "solve a problem and write solution/verification artifacts");
  run->add_option("problem", path, "problem file path");
  run->add_option("--catalog", cat, "built-in problem (see 'catalog')");
  run->add_option("--n0", n0, "starting grid size");
  run->add_option("--nmax", nmax, "grid size cap");
  run->add_option("--tol", tol, "target residual tolerance (floored at 1e-8)");
  run->add_option("--out", out_dir, "output directory")->capture_default_str();
  run->add_flag("--no-vnv", no_vnv, "skip independent verification");
  run->add_option("--seed", seed, "jitter seed; same seed, same artifacts")
      ->capture_default_str();
  run->add_option("--log-level", log_level, "0 silent, 1 stages, 2 iterations")
      ->capture_default_str();

  CLI::App* check = app.add_subcommand(
      "check", "parse a problem and print doctor diagnostics without solving");
  check->add_option("problem", path, "problem file path");
  check->add_option("--catalog", cat, "built-in problem");

  CLI::App* catalog = app.add_subcommand("catalog", "list built-in problems");
  std::string show;
  catalog->add_option("--show", show, "print the problem text of one entry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (catalog->parsed()) {
    if (!show.empty()) {
      const std::string* text = psopt::catalog_text(show);
      if (!text) {
        std::fprintf(stderr, "error [unknown_catalog] no catalog entry '%s'\n",
                     show.c_str());
        return 1;
      }
      std::fputs(text->c_str(), stdout);
      return 0;
    }
    for (const auto& n : psopt::catalog_names()) std::printf("%s\n", n.c_str());
    return 0;
  }

  if (path.empty() == cat.empty()) {
    std::fprintf(stderr, "error [usage] give a problem file or --catalog, not %s\n",
                 path.empty() ? "neither" : "both");
    return 1;
  }

  bool loaded = false;
  psopt::LoadedProblem lp = load(path, cat, &loaded);
  if (!loaded) return 1;
  print_diagnostics(lp.diagnostics);
  if (!lp.ok) return 1;

  if (check->parsed()) {
    std::vector<psopt::Diagnostic> diags = psopt::doctor(lp.ocp);
    print_diagnostics(diags);
    if (psopt::has_errors(diags)) return 1;
    std::printf("ok: %d states, %d controls, %d parameters, %d events, %d path rows\n",
                lp.ocp.n_x, lp.ocp.n_u, lp.ocp.n_p, lp.ocp.n_e, lp.ocp.n_h);
    return 0;
  }

  psopt::SolverConfig cfg;
  std::vector<psopt::Diagnostic> setting_diags =
      psopt::apply_solver_settings(lp.solver_settings, &cfg);
  print_diagnostics(setting_diags);
  if (n0 > 0) cfg.n0 = n0;
  if (nmax > 0) cfg.n_max = nmax;
  if (tol > 0) cfg.delta_final = tol;
  cfg.seed = seed;
  cfg.log_level = psopt::log_level_from_env(log_level);
  cfg.sink = [](int, const std::string& line) {
    std::fprintf(stderr, "%s\n", line.c_str());
  };

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    std::fprintf(stderr, "error [io] cannot create output directory '%s': %s\n",
                 out_dir.c_str(), ec.message().c_str());
    return 1;
  }

  psopt::SolutionBundle sol = psopt::solve(lp.ocp, cfg);
  print_diagnostics(sol.notes);
  std::printf("status %s  cost %.12g  t0 %.12g  tf %.12g  N %d  residual %.3e\n",
              psopt::to_string(sol.status), sol.cost, sol.t0, sol.tf, sol.grid.N,
              sol.residual_inf);

  psopt::ScalingMap map =
      cfg.auto_scale ? psopt::auto_scaling(lp.ocp) : psopt::identity_scaling(lp.ocp);
  auto out = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  try {
    psopt::VnvReport report;
    bool have_report = false;
    if (!no_vnv && sol.t.size() > 0) {
      report = psopt::verify(lp.ocp, sol, cfg.delta_final);
      have_report = true;
      psopt::write_vnv_text(out("vnv.txt"), report);
      psopt::write_vnv_trace_csv(out("vnv_trace.csv"), lp.ocp, sol, report);
      std::fputs(report.text().c_str(), stdout);
    }
    if (sol.t.size() > 0) {
      psopt::write_solution_csv(out("solution.csv"), lp.ocp, sol);
      psopt::write_events_csv(out("events.csv"), lp.ocp, sol);
    }
    psopt::write_text_file(out("run.json"),
                           psopt::make_run_json(lp.ocp, cfg, map, sol,
                                                have_report ? &report : nullptr));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error [io] %s\n", e.what());
    return 1;
  }

  return exit_code(sol.status);
}
