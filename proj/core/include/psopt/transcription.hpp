#pragma once

#include "psopt/hamvet.hpp"
#include "psopt/ocp.hpp"

// Square root-finding system for the discretized necessary conditions on an
// LGL grid with left-anchored integration for the states and the adjoint
// integration operator for the costates.
//
// Unknowns, packed variable-major (all nodes of one channel contiguous):
//   [X, U, V, Lambda, Omega, Mu, nu, t0, tf, p]
// with V the state-rate samples and Omega the costate-rate samples.
//
// Rows:
//   lin_x   X_s(0) + (B V_s)_i - X_s(i)            i = 1..N
//   lin_l   L_s(N) + (B' W_s)_i - L_s(i)           i = 0..N-1
//   alg_v   gamma' f - V                           all nodes
//   alg_w   gamma' dHbar/dx - Omega                all nodes
//   alg_u   dHbar/du                               all nodes
//   comp    smoothed complementarity per path row  all nodes
//   ev      event rows (equality or smoothed complementarity on nu)
//   tr0     -Lambda_0 - dEbar/dx0
//   trf      Lambda_N - dEbar/dxf
//   time    t0 row, tf row (pin when fixed, Hamiltonian value when free)
//   par     dEbar/dp + sum_i w_i gamma' dHbar/dp
//
// Row i=0 of lin_x is identically zero (B has a zero first row) and row i=N
// of lin_l duplicates the costate anchor, so both are dropped; the system is
// exactly square.

namespace psopt {

struct Layout {
  int n_x = 0, n_u = 0, n_p = 0, n_e = 0, n_h = 0;
  int N = 0, nn = 0;  // nn = N + 1

  int off_X = 0, off_U = 0, off_V = 0, off_L = 0, off_W = 0, off_M = 0;
  int off_nu = 0, off_t0 = 0, off_tf = 0, off_p = 0;
  int size = 0;

  int row_lin_x = 0, row_lin_l = 0, row_alg_v = 0, row_alg_w = 0, row_alg_u = 0;
  int row_comp = 0, row_ev = 0, row_tr0 = 0, row_trf = 0, row_time = 0, row_par = 0;
  int rows = 0;

  int col_x(int s, int i) const { return off_X + s * nn + i; }
  int col_u(int c, int i) const { return off_U + c * nn + i; }
  int col_v(int s, int i) const { return off_V + s * nn + i; }
  int col_lam(int s, int i) const { return off_L + s * nn + i; }
  int col_omega(int s, int i) const { return off_W + s * nn + i; }
  int col_mu(int j, int i) const { return off_M + j * nn + i; }
  int col_nu(int k) const { return off_nu + k; }

  static Layout make(const OcpDefinition& ocp, int N);
};

// One full iterate in matrix form; trajectories are (N+1) x dim, row per node.
struct PrimalDual {
  Mat X, U, V, Lambda, Omega, Mu;
  Vec nu;
  double t0 = 0.0, tf = 0.0;
  Vec p;
};

Vec pack(const Layout& lay, const PrimalDual& s);
PrimalDual unpack(const Layout& lay, const Vec& z);

// phi(a, b) = a + b - sqrt(a^2 + b^2 + 2 sigma^2); zero iff a b = sigma^2
// with a, b > 0, so it smooths the complementarity corner.
double fb_phi(double a, double b, double sigma);

// Residual and partials of one bounded row with multiplier `mul`:
//   lo == hi          v - lo                       (multiplier free)
//   both infinite     mul
//   lower only        phi(v - lo, -mul)
//   upper only        phi(hi - v,  mul)
//   two-sided         phi(v - lo, -m-) - phi(hi - v, m+),
//                     m+- = (mul +- sqrt(mul^2 + sigma^2)) / 2
struct BoundRowEval {
  double r = 0.0;
  double d_v = 0.0;    // d r / d value
  double d_mul = 0.0;  // d r / d multiplier
};
BoundRowEval bound_row(double v, double lo, double hi, double mul, double sigma);

// Defect-row NLP multipliers to costate samples: Lambda_i = Psi_i / w_i.
Mat covectors_from_multipliers(const Grid& grid, const Mat& Psi);

double node_time(const Grid& grid, int i, double t0, double tf);

class GeneralizedEquation {
 public:
  // Borrows `ocp`; the definition must outlive the equation.
  GeneralizedEquation(const OcpDefinition& ocp, int N, double sigma);

  const OcpDefinition& ocp() const { return *ocp_; }
  const Layout& layout() const { return lay_; }
  const Grid& grid() const { return pair_.grid; }
  const DiscretizationPair& pair() const { return pair_; }

  double sigma() const { return sigma_; }
  void set_sigma(double s) { sigma_ = s; }

  // Per-row positive weights (default 1); scaling only, roots unchanged.
  Vec& row_weights() { return row_w_; }
  const Vec& row_weights() const { return row_w_; }

  Vec residual(const Vec& z) const;
  Mat jacobian(const Vec& z) const;

  double cost(const Vec& z) const;

  // Unweighted max violation of the primal constraints only: state defects,
  // rate mismatch, path/event bound distance, time window distance.
  double feasibility_inf(const Vec& z) const;

 private:
  const OcpDefinition* ocp_;
  Layout lay_;
  DiscretizationPair pair_;
  double sigma_;
  Vec row_w_;
};

}  // namespace psopt
