#pragma once

#include "psopt/ocp.hpp"

// Affine change of variables for balancing: per-channel state and control
// gains, a time gain, and a cost gain. Only variables are rescaled; path and
// event function values keep their physical meaning so bounds carry over
// unchanged. Residual row weights handle any remaining magnitude spread.
//
//   xt = gx . x + sx     ut = gu . u + su     tt = gt t + st     Jt = gJ J
//
// The induced covector map on the way back out:
//   lambda = lambdat . gx / gJ     mu = mut gt / gJ     nu = nut / gJ
//   H = Ht gt / gJ                 cost = costt / gJ

namespace psopt {

struct ScalingMap {
  Vec gx, sx;
  Vec gu, su;
  double gt = 1.0, st = 0.0;
  double gJ = 1.0;
};

ScalingMap identity_scaling(const OcpDefinition& ocp);

// Gains from the search box (each channel to [-1, 1]), the time window, and
// a cost magnitude probe at the box midpoint. Degenerate or unbounded
// channels keep gain 1.
ScalingMap auto_scaling(const OcpDefinition& ocp);

// A new definition over the scaled variables. Wrapped functions chain first
// derivatives exactly, so symbolic inner jacobians stay exact.
OcpDefinition apply_scaling(const OcpDefinition& ocp, const ScalingMap& map);

// In-place map of a solution of the scaled problem back to physical units.
void unscale_solution(const ScalingMap& map, SolutionBundle* sol);

// Positive residual weights 1 / max(1, |value at reference|), evaluated at
// the search-box midpoint and mid-times. Weighting rows cannot move roots.
Vec dynamics_row_weights(const OcpDefinition& ocp);
Vec event_row_weights(const OcpDefinition& ocp);
Vec path_row_weights(const OcpDefinition& ocp);

// Warnings when the problem as posed spans many orders of magnitude across
// channels (box widths, dynamics rates, cost) at the reference point.
std::vector<Diagnostic> imbalance_report(const OcpDefinition& ocp);

// Post-solve tell-tales: a costate channel or the Hamiltonian with nonzero
// magnitude outside [1e-9, 1e9] signals badly balanced equations.
std::vector<Diagnostic> imbalance_report(const SolutionBundle& sol);

}  // namespace psopt
