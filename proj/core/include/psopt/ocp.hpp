#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "psopt/basis.hpp"
#include "psopt/types.hpp"

namespace psopt {

// Path-domain function (x, u, t, p) -> R^m with first derivatives.
// Implementations may override jacobians with analytic or symbolic rules;
// the default is central finite differences with step max(1e-6, 1e-6 |v|).
struct NodeFn {
  virtual ~NodeFn() = default;
  virtual int out_dim() const = 0;
  virtual Vec value(const Vec& x, const Vec& u, double t, const Vec& p) const = 0;
  virtual void jacobians(const Vec& x, const Vec& u, double t, const Vec& p,
                         Mat* Jx, Mat* Ju, Vec* Jt, Mat* Jp) const;
};

// Endpoint-domain function (x0, xf, t0, tf, p) -> R^m with first derivatives.
struct BoundaryFn {
  virtual ~BoundaryFn() = default;
  virtual int out_dim() const = 0;
  virtual Vec value(const Vec& x0, const Vec& xf, double t0, double tf,
                    const Vec& p) const = 0;
  virtual void jacobians(const Vec& x0, const Vec& xf, double t0, double tf,
                         const Vec& p, Mat* Jx0, Mat* Jxf, Vec* Jt0, Vec* Jtf,
                         Mat* Jp) const;
};

using NodeCallable = std::function<Vec(const Vec& x, const Vec& u, double t, const Vec& p)>;
using BoundaryCallable =
    std::function<Vec(const Vec& x0, const Vec& xf, double t0, double tf, const Vec& p)>;

std::shared_ptr<const NodeFn> make_node_fn(int out_dim, NodeCallable fn);
std::shared_ptr<const BoundaryFn> make_boundary_fn(int out_dim, BoundaryCallable fn);

double fd_step(double v);

// Region the solver is allowed to search; entries are meant to be inactive at
// the solution (they are initialization aids, not modeled constraints).
struct SearchBox {
  Vec x_lo, x_hi;
  Vec u_lo, u_hi;
};

struct OcpDefinition {
  std::string name;
  int n_x = 0, n_u = 0, n_p = 0, n_e = 0, n_h = 0;

  std::shared_ptr<const BoundaryFn> endpoint_cost;  // E, out_dim 1
  std::shared_ptr<const NodeFn> running_cost;       // F, out_dim 1
  std::shared_ptr<const NodeFn> dynamics;           // f, out_dim n_x
  std::shared_ptr<const BoundaryFn> events;         // e, out_dim n_e
  std::shared_ptr<const NodeFn> path;               // h, out_dim n_h (null iff n_h == 0)

  Vec e_lo, e_hi;  // event bounds; equal entries mean equality rows
  Vec h_lo, h_hi;  // path bounds; +-inf for one-sided rows
  double t0_lo = 0, t0_hi = 0, tf_lo = 0, tf_hi = 0;

  SearchBox box;
  std::map<std::string, double> constants;  // informational, echoed in outputs
};

struct PathEval {
  double F = 0.0;
  Vec f;
  Vec h;
};
struct EndpointEval {
  double E = 0.0;
  Vec e;
};

// Shape-checked evaluation of the three path functions / two endpoint
// functions. Throws std::runtime_error on dimension mismatch.
PathEval eval_functions(const OcpDefinition& ocp, const Vec& x, const Vec& u, double t,
                        const Vec& p);
EndpointEval eval_endpoint(const OcpDefinition& ocp, const Vec& x0, const Vec& xf,
                           double t0, double tf, const Vec& p);

// Static health checks: degenerate horizon, inverted bounds, shape
// mismatches, non-finite values at the search-box midpoint, missing
// functions. Errors make the problem unrunnable; warnings do not.
std::vector<Diagnostic> doctor(const OcpDefinition& ocp);

Vec box_midpoint(const Vec& lo, const Vec& hi);
Vec box_clip(const Vec& v, const Vec& lo, const Vec& hi);

// One accepted-step record of the solve, for instrumentation and run logs.
struct IterationRecord {
  std::string stage;  // "stabilize", "accelerate", "refine"
  int N = 0;
  int iter = 0;
  double merit = 0.0;
  double delta = 0.0;
  double sigma = 0.0;
  double step_norm = 0.0;
  double rho = 0.0;
};

struct SolutionBundle {
  SolveStatus status = SolveStatus::Infeasible;
  Grid grid;       // final tau grid and weights
  Vec t;           // physical times at nodes
  Mat X;           // (N+1) x n_x states
  Mat U;           // (N+1) x n_u controls
  Mat Lambda;      // (N+1) x n_x costates
  Mat Mu;          // (N+1) x n_h path covectors
  Vec nu;          // event covectors
  Vec H;           // Hamiltonian at nodes
  double t0 = 0, tf = 0;
  Vec p;
  double cost = 0.0;
  double residual_inf = kInf;     // final residual norm of the root system
  double feasibility_inf = kInf;  // final primal defect norm
  std::vector<IterationRecord> log;
  std::vector<Diagnostic> notes;
};

}  // namespace psopt
