#pragma once

#include "psopt/ocp.hpp"

// Hamiltonian constructions and the pointwise necessary-condition residuals
// built from them.

namespace psopt {

// H = F + lambda . f
double hamiltonian(const OcpDefinition& ocp, const Vec& lambda, const Vec& x,
                   const Vec& u, double t, const Vec& p);

// Hbar = H + mu . h
double lagrangian_hamiltonian(const OcpDefinition& ocp, const Vec& lambda, const Vec& mu,
                              const Vec& x, const Vec& u, double t, const Vec& p);

// Ebar = E + nu . e
double endpoint_lagrangian(const OcpDefinition& ocp, const Vec& nu, const Vec& x0,
                           const Vec& xf, double t0, double tf, const Vec& p);

struct HbarGradient {
  Vec dx;     // n_x
  Vec du;     // n_u
  double dt = 0.0;
  Vec dp;     // n_p
};
HbarGradient hbar_gradient(const OcpDefinition& ocp, const Vec& lambda, const Vec& mu,
                           const Vec& x, const Vec& u, double t, const Vec& p);

// Gradient of plain H (no path term), for the Hamiltonian value conditions.
HbarGradient h_gradient(const OcpDefinition& ocp, const Vec& lambda, const Vec& x,
                        const Vec& u, double t, const Vec& p);

struct EbarGradient {
  Vec dx0, dxf;  // n_x each
  double dt0 = 0.0, dtf = 0.0;
  Vec dp;        // n_p
};
EbarGradient ebar_gradient(const OcpDefinition& ocp, const Vec& nu, const Vec& x0,
                           const Vec& xf, double t0, double tf, const Vec& p);

// Hamiltonian minimization condition residual dHbar/du at one point.
Vec hmc_residual(const OcpDefinition& ocp, const Vec& lambda, const Vec& mu, const Vec& x,
                 const Vec& u, double t, const Vec& p);

// Path rows that are a pure copy of one control channel at the probe point:
// zero state gradient and a single unit control partial. Returns pairs of
// (path row, control channel).
std::vector<std::pair<int, int>> pure_control_rows(const OcpDefinition& ocp, const Vec& x,
                                                   const Vec& u, double t, const Vec& p);

// Direct check that the computed control pointwise minimizes H over a lattice
// of admissible controls (search box intersected with control-only path
// bounds). Only run for n_u <= 2; larger dimensions are skipped with a note.
struct PointwiseHmcResult {
  bool checked = false;
  bool ok = true;
  double worst_gap = 0.0;  // max over nodes of H(u_node) - min_lattice H
  int worst_node = -1;
  std::string note;
};
PointwiseHmcResult pointwise_hmc_check(const OcpDefinition& ocp, const Grid& grid,
                                       const Mat& X, const Mat& U, const Mat& Lambda,
                                       double t0, double tf, const Vec& p,
                                       int lattice_points = 41, double tol = 1e-6);

// Residual of dH/dtau = gamma' dHbar/dt at the nodes, using the spectral
// differentiation matrix on the nodal Hamiltonian samples.
Vec hamiltonian_evolution_residual(const OcpDefinition& ocp, const Grid& grid,
                                   const Mat& X, const Mat& U, const Mat& Lambda,
                                   const Mat& Mu, double t0, double tf, const Vec& p);

}  // namespace psopt
