#pragma once

#include <map>
#include <string>
#include <vector>

#include "psopt/ocp.hpp"
#include "psopt/solver.hpp"

// Text format for problem definitions. Layout is INI-like:
//
//   name = brachistochrone
//
//   [dimensions]        states / controls / parameters counts
//   [constants]         name = number
//   [cost]              endpoint = <endpoint expr>, running = <path expr>
//   [dynamics]          f[i] = <path expr>, one per state
//   [events]            e[k] = <endpoint expr> in [lo, hi]
//   [path]              h[j] = <path expr> in [lo, hi]
//   [time]              t0 in [lo, hi],  tf in [lo, hi]
//   [search]            x[i] in [lo, hi],  u[i] in [lo, hi]
//   [solver]            key = number, recorded and applied by the caller
//
// Path expressions may use x[i], u[i], p[i], t and named constants; endpoint
// expressions may use x0[i], xf[i], t0, tf, p[i] and named constants. Bounds
// are numeric literals or inf / -inf. `#` starts a comment. Either cost line
// may be omitted (treated as zero). Every state and control needs a finite
// search interval; parameters always search over [-1e3, 1e3].
//
// Derivatives of all loaded functions are symbolic, so solver Jacobians are
// exact for file-defined problems.

namespace psopt {

struct LoadedProblem {
  bool ok = false;  // false iff diagnostics contain an error
  OcpDefinition ocp;
  std::map<std::string, double> solver_settings;  // raw [solver] entries
  std::vector<Diagnostic> diagnostics;
};

LoadedProblem parse_problem_text(const std::string& text,
                                 const std::string& origin = "<memory>");
LoadedProblem load_problem_file(const std::string& path);

// Applies recognized [solver] keys onto cfg: n0, n_max, tol, max_iters,
// feasible_tol, seed, log_level, auto_scale (0/1). Unknown keys and bad
// values come back as warnings.
std::vector<Diagnostic> apply_solver_settings(
    const std::map<std::string, double>& settings, SolverConfig* cfg);

// Built-in problems, stored as problem-file text and run through the same
// loader as user files.
std::vector<std::string> catalog_names();
const std::string* catalog_text(const std::string& name);  // null if unknown
LoadedProblem catalog_problem(const std::string& name);    // throws if unknown

}  // namespace psopt
