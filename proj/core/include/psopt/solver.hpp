#pragma once

#include <functional>

#include "psopt/scale.hpp"
#include "psopt/transcription.hpp"

namespace psopt {

struct SolverConfig {
  int n0 = 16;
  int n_max = 128;
  double delta0 = 1e-2;
  double delta_final = 1e-8;  // floored at 1e-8
  std::vector<double> sigmas = {3e-1, 1e-1, 3e-2, 1e-2, 1e-3, 1e-4, 1e-6};
  int max_inner_iters = 200;
  int backtrack_depth = 3;
  int perturb_rounds = 5;
  int escape_attempts = 6;
  double feasible_tol = 1e-6;
  bool auto_scale = true;
  unsigned seed = 1;
  int log_level = 0;  // 0 silent, 1 stage lines, 2 iteration lines
  std::function<void(int level, const std::string& line)> sink;
};

// Solves the discretized necessary conditions without a user-supplied guess.
// The ladder of internally built starting iterates, the elastic feasibility
// repair, mesh and smoothing continuation, divergence recovery and the
// degenerate-activity escape are all automatic.
SolutionBundle solve(const OcpDefinition& ocp, SolverConfig cfg = {});

// --- pieces below are exposed for focused testing ---

// Endpoint pair minimizing the clamped event violations over the search box.
void fit_endpoints(const OcpDefinition& ocp, double t0, double tf, Vec* x0, Vec* xf);

// Starting iterate of the given priority (1 = event-fit line, 2 = box
// midpoint, 3 = midpoint with seeded jitter); duals zero, rates consistent.
PrimalDual initial_iterate(const OcpDefinition& ocp, const Grid& grid, int priority,
                           unsigned seed);

// Gauss-Newton repair of the primal blocks (state defects, rate matching,
// clamped path/event violations) holding duals fixed. Returns the final
// violation max-norm. Columns listed in `pinned` are held at their incoming
// values; the escape path uses this to keep a state detour in place while
// the remaining channels adapt around it.
double elastic_repair(const GeneralizedEquation& ge, Vec* z, int max_iters = 80,
                      const std::vector<int>* pinned = nullptr);

// Two path rows active together at one point with opposing state gradients:
// the feasible set pinches there and the multipliers are not determined, so
// an iterate sitting on the pinch is not a usable extremal. Detection
// samples the interpolated path values on a dense lattice.
struct DegenerateActivity {
  bool flagged = false;
  int row_a = -1, row_b = -1;
  double tau = 0.0;
  double cosine = 0.0;
  Vec direction;  // unit separating direction in state space
};
DegenerateActivity detect_degenerate_activity(const OcpDefinition& ocp, const Grid& grid,
                                              const PrimalDual& s, double stage_delta);

// One escape attempt: a state-space bump of doubling amplitude and
// alternating side along the separating direction. Value and slope vanish at
// the endpoints so boundary events and headings stay compatible, and the
// rates are refreshed by differentiating the bumped trajectory.
void apply_escape_bump(const OcpDefinition& ocp, const Grid& grid,
                       const DegenerateActivity& da, int attempt, PrimalDual* s);

}  // namespace psopt
