#pragma once

#include <vector>

#include "psopt/types.hpp"

// Legendre-Gauss-Lobatto grids, differentiation and integration matrices,
// and the primal/dual discretization pairs built from them.

namespace psopt {

struct Grid {
  int N = 0;   // polynomial degree; N+1 nodes
  Vec tau;     // nodes on [-1, 1], ascending, endpoints included
  Vec w;       // quadrature weights
};

// Nodes are the roots of (1 - tau^2) P_N'(tau), found by Newton iteration
// from Chebyshev-Lobatto initial guesses; weights are 2 / (N (N+1) P_N^2).
Grid lgl_grid(int N);

// Legendre polynomial helpers (values of P_N and P_N' at a point).
double legendre(int N, double tau);
double legendre_deriv(int N, double tau);

// Barycentric-form differentiation matrix with the negative-sum trick on the
// diagonal.
Mat lagrange_diff_matrix(const Grid& g);

// Left-anchored integration matrix: (B v)_i approximates the integral of the
// degree-N interpolant of v from -1 to tau_i. Row 0 is zero and B*1 = tau+1
// holds to machine precision.
Mat birkhoff_matrix(const Grid& g);

enum class PairKind { LagrangeD, BirkhoffLeft };

// A primal/dual discretization pair:
//   primal linear block  A_x X + A_v V = C
//   dual linear block    As_lambda L + As_omega W = C*
// For BirkhoffLeft, A_x = -I, A_v = B, As_lambda = -I and As_omega is
// Q^-1 B^T Q by construction. For LagrangeD, A_x = -D, A_v = I and the dual
// block is the classical discrete adjoint (-Q^-1 D^T Q, I).
struct DiscretizationPair {
  PairKind kind = PairKind::BirkhoffLeft;
  Grid grid;
  Mat A_x, A_v;
  Mat As_lambda, As_omega;
};

DiscretizationPair assemble_pair(PairKind kind, int N);

// Largest/smallest singular value ratio.
double condition_number(const Mat& m);

// The square matrix a solver factors when using this pair to integrate
// dx/dtau = v: the anchored differentiation matrix for LagrangeD, the
// unit-closed primal block [[-I, B], [0, I]] for BirkhoffLeft.
Mat pair_system_matrix(PairKind kind, int N);

struct CondGrowthRow {
  int N;
  double cond;
};
struct CondGrowthStudy {
  PairKind kind;
  std::vector<CondGrowthRow> rows;
  double growth_ratio;  // cond at largest N over cond at smallest N
};

CondGrowthStudy cond_growth_study(PairKind kind, const std::vector<int>& Ns);

// Barycentric interpolation weights for arbitrary distinct nodes.
Vec barycentric_weights(const Vec& tau);

// Evaluate the interpolant of nodal values f at query point tq. Exact
// passthrough when tq coincides with a node.
double barycentric_eval(const Vec& tau, const Vec& bw, const Vec& f, double tq);

// Resample nodal values onto a new set of query points.
Vec barycentric_interpolate(const Vec& tau, const Vec& f, const Vec& tq);

// Dominant-term estimate of the doubles stored by the linear blocks of the
// transcribed system at a given state dimension and grid degree.
std::size_t linear_block_doubles(int n_x, int N);

}  // namespace psopt
