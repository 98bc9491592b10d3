#pragma once

#include <cstdint>

#include "psopt/hamvet.hpp"
#include "psopt/ocp.hpp"

// Independent verification of a reported solution: the dynamics are
// re-propagated with an adaptive Runge-Kutta integrator under a
// reconstructed control, and a battery of optimality checks interrogates the
// dual trajectories. Nothing here reuses the transcription residuals.

namespace psopt {

struct SwitchPoint {
  int channel = -1;
  double tau = 0.0;  // refined crossing location
};

// Control trajectory reconstruction. Channels with pure control-bound path
// rows are snapped to the bound inside at-bound runs and clamped elsewhere;
// switch locations are refined by bisecting the interpolant's crossing of
// the mid-bound level, and evaluation holds the nearest same-side node value
// inside a half-min-spacing window around each switch so no query
// interpolates across a discontinuity. Other channels interpolate
// barycentrically.
class ControlCurve {
 public:
  ControlCurve(const OcpDefinition& ocp, const Grid& grid, const Mat& U, const Mat& X,
               double t0, double tf, const Vec& p);

  Vec at_tau(double tau) const;
  const std::vector<SwitchPoint>& switches() const { return switches_; }

  // -1 at lower bound, +1 at upper bound, 0 interior or unbounded.
  int node_label(int channel, int i) const { return labels_[channel][i]; }
  bool channel_bounded(int channel) const { return bounded_[channel]; }
  double bound_lo(int channel) const { return lo_(channel); }
  double bound_hi(int channel) const { return hi_(channel); }

 private:
  Vec tau_, bw_;
  Mat U_;
  Vec lo_, hi_;
  std::vector<bool> bounded_;
  std::vector<std::vector<int>> labels_;
  std::vector<SwitchPoint> switches_;
  double hold_window_ = 0.0;
};

// Double precision bounds what a reported accuracy can mean: the root of a
// perfectly conditioned square system is good to about sqrt(machine
// epsilon), so requested tolerances are floored at 1e-8, and reconstructed
// controls are practically trustworthy to about 1e-6. The note spells both
// out.
struct ErrorFloor {
  double effective = 0.0;
  std::string note;
};
ErrorFloor error_floor(double requested_tol);

struct PropagationCheck {
  bool ran = false;
  double max_node_error = kInf;   // against reported states, all nodes
  double terminal_error = kInf;
  double reported_error = kInf;   // never claimed below the floor
  double error_floor = 0.0;
  double band = 0.0;              // pass band, widened by switch resolution
  bool pass = false;
  int steps = 0;
  // Per event row, distance of the event value from its bound interval:
  // once with the reported terminal state, once with the propagated one.
  Vec optimization_errors;
  Vec truth_errors;
  std::string note;
};

// Dormand-Prince 5(4) adaptive propagation of the dynamics under the
// reconstructed control, from the reported initial state, with forced step
// boundaries at the nodes and at refined switch times.
PropagationCheck propagate_feasibility(const OcpDefinition& ocp, const Grid& grid,
                                       const Mat& X, const ControlCurve& u, double t0,
                                       double tf, const Vec& p, double requested_tol,
                                       double rtol = 1e-8, double atol = 1e-10);

struct CheckResult {
  std::string name;
  bool applicable = true;
  bool informational = false;
  bool pass = true;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct VnvReport {
  PropagationCheck propagation;
  PointwiseHmcResult hmc;
  std::vector<CheckResult> checks;
  std::vector<SwitchPoint> switches;  // reconstructed control switch times
  // Event defects per row: with the reported terminal state, and with the
  // independently propagated one.
  Vec optimization_errors;
  Vec terminal_truth_errors;
  double hamiltonian_mean = 0.0;
  double hamiltonian_dev = 0.0;
  std::vector<bool> switching_verdicts;           // per control channel
  std::vector<std::pair<int, int>> costate_flat_segments;  // node ranges
  std::vector<double> jump_times;                 // costate step locations, in t
  bool complementarity_verdict = true;
  std::uint64_t bundle_hash = 0;      // hash of the verified trajectories
  bool all_pass = true;  // applicable, non-informational checks only
  std::string text() const;
};

struct VnvInput {
  Grid grid;
  Mat X, U, Lambda, Mu;
  Vec nu;
  double t0 = 0.0, tf = 0.0;
  Vec p;
};

VnvReport verify(const OcpDefinition& ocp, const VnvInput& in, double requested_tol);
VnvReport verify(const OcpDefinition& ocp, const SolutionBundle& sol, double requested_tol);

}  // namespace psopt
