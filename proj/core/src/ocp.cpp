#include "psopt/ocp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace psopt {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::FeasibleOnly: return "FeasibleOnly";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::SingularSystem: return "SingularSystem";
    case SolveStatus::NonFinite: return "NonFinite";
  }
  return "Unknown";
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags)
    if (d.severity == Severity::Error) return true;
  return false;
}

std::string format_diagnostics(const std::vector<Diagnostic>& diags) {
  std::ostringstream os;
  for (const auto& d : diags) {
    const char* tag = d.severity == Severity::Error     ? "error"
                      : d.severity == Severity::Warning ? "warning"
                                                        : "info";
    os << "[" << tag << "] " << d.code << ": " << d.message << "\n";
  }
  return os.str();
}

double fd_step(double v) { return std::max(1e-6, 1e-6 * std::abs(v)); }

void NodeFn::jacobians(const Vec& x, const Vec& u, double t, const Vec& p,
                       Mat* Jx, Mat* Ju, Vec* Jt, Mat* Jp) const {
  const int m = out_dim();
  auto central = [&](auto&& evaluate, double v) {
    double h = fd_step(v);
    Vec hi = evaluate(v + h), lo = evaluate(v - h);
    return Vec(((hi - lo) / (2.0 * h)).eval());
  };
  if (Jx) {
    Jx->resize(m, x.size());
    Vec xw = x;
    for (int j = 0; j < x.size(); ++j) {
      double saved = xw(j);
      Jx->col(j) = central([&](double v) { xw(j) = v; return value(xw, u, t, p); }, saved);
      xw(j) = saved;
    }
  }
  if (Ju) {
    Ju->resize(m, u.size());
    Vec uw = u;
    for (int j = 0; j < u.size(); ++j) {
      double saved = uw(j);
      Ju->col(j) = central([&](double v) { uw(j) = v; return value(x, uw, t, p); }, saved);
      uw(j) = saved;
    }
  }
  if (Jt) *Jt = central([&](double v) { return value(x, u, v, p); }, t);
  if (Jp) {
    Jp->resize(m, p.size());
    Vec pw = p;
    for (int j = 0; j < p.size(); ++j) {
      double saved = pw(j);
      Jp->col(j) = central([&](double v) { pw(j) = v; return value(x, u, t, pw); }, saved);
      pw(j) = saved;
    }
  }
}

void BoundaryFn::jacobians(const Vec& x0, const Vec& xf, double t0, double tf,
                           const Vec& p, Mat* Jx0, Mat* Jxf, Vec* Jt0, Vec* Jtf,
                           Mat* Jp) const {
  const int m = out_dim();
  auto central = [&](auto&& evaluate, double v) {
    double h = fd_step(v);
    Vec hi = evaluate(v + h), lo = evaluate(v - h);
    return Vec(((hi - lo) / (2.0 * h)).eval());
  };
  if (Jx0) {
    Jx0->resize(m, x0.size());
    Vec w = x0;
    for (int j = 0; j < x0.size(); ++j) {
      double saved = w(j);
      Jx0->col(j) = central([&](double v) { w(j) = v; return value(w, xf, t0, tf, p); }, saved);
      w(j) = saved;
    }
  }
  if (Jxf) {
    Jxf->resize(m, xf.size());
    Vec w = xf;
    for (int j = 0; j < xf.size(); ++j) {
      double saved = w(j);
      Jxf->col(j) = central([&](double v) { w(j) = v; return value(x0, w, t0, tf, p); }, saved);
      w(j) = saved;
    }
  }
  if (Jt0) *Jt0 = central([&](double v) { return value(x0, xf, v, tf, p); }, t0);
  if (Jtf) *Jtf = central([&](double v) { return value(x0, xf, t0, v, p); }, tf);
  if (Jp) {
    Jp->resize(m, p.size());
    Vec w = p;
    for (int j = 0; j < p.size(); ++j) {
      double saved = w(j);
      Jp->col(j) = central([&](double v) { w(j) = v; return value(x0, xf, t0, tf, w); }, saved);
      w(j) = saved;
    }
  }
}

namespace {

struct CallableNodeFn final : NodeFn {
  int m;
  NodeCallable fn;
  CallableNodeFn(int m, NodeCallable fn) : m(m), fn(std::move(fn)) {}
  int out_dim() const override { return m; }
  Vec value(const Vec& x, const Vec& u, double t, const Vec& p) const override {
    return fn(x, u, t, p);
  }
};

struct CallableBoundaryFn final : BoundaryFn {
  int m;
  BoundaryCallable fn;
  CallableBoundaryFn(int m, BoundaryCallable fn) : m(m), fn(std::move(fn)) {}
  int out_dim() const override { return m; }
  Vec value(const Vec& x0, const Vec& xf, double t0, double tf, const Vec& p) const override {
    return fn(x0, xf, t0, tf, p);
  }
};

void check_dim(const char* what, const Vec& v, int expect) {
  if (v.size() != expect) {
    std::ostringstream os;
    os << what << " returned " << v.size() << " components, expected " << expect;
    throw std::runtime_error(os.str());
  }
}

}  // namespace

std::shared_ptr<const NodeFn> make_node_fn(int out_dim, NodeCallable fn) {
  return std::make_shared<CallableNodeFn>(out_dim, std::move(fn));
}

std::shared_ptr<const BoundaryFn> make_boundary_fn(int out_dim, BoundaryCallable fn) {
  return std::make_shared<CallableBoundaryFn>(out_dim, std::move(fn));
}

PathEval eval_functions(const OcpDefinition& ocp, const Vec& x, const Vec& u, double t,
                        const Vec& p) {
  PathEval out;
  Vec F = ocp.running_cost->value(x, u, t, p);
  check_dim("running_cost", F, 1);
  out.F = F(0);
  out.f = ocp.dynamics->value(x, u, t, p);
  check_dim("dynamics", out.f, ocp.n_x);
  if (ocp.n_h > 0) {
    out.h = ocp.path->value(x, u, t, p);
    check_dim("path", out.h, ocp.n_h);
  } else {
    out.h.resize(0);
  }
  return out;
}

EndpointEval eval_endpoint(const OcpDefinition& ocp, const Vec& x0, const Vec& xf,
                           double t0, double tf, const Vec& p) {
  EndpointEval out;
  Vec E = ocp.endpoint_cost->value(x0, xf, t0, tf, p);
  check_dim("endpoint_cost", E, 1);
  out.E = E(0);
  if (ocp.n_e > 0) {
    out.e = ocp.events->value(x0, xf, t0, tf, p);
    check_dim("events", out.e, ocp.n_e);
  } else {
    out.e.resize(0);
  }
  return out;
}

Vec box_midpoint(const Vec& lo, const Vec& hi) { return 0.5 * (lo + hi); }

Vec box_clip(const Vec& v, const Vec& lo, const Vec& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

std::vector<Diagnostic> doctor(const OcpDefinition& ocp) {
  std::vector<Diagnostic> out;
  auto err = [&](std::string code, std::string msg) {
    out.push_back({Severity::Error, std::move(code), std::move(msg)});
  };
  auto warnd = [&](std::string code, std::string msg) {
    out.push_back({Severity::Warning, std::move(code), std::move(msg)});
  };

  if (ocp.n_x <= 0) err("dimensions", "n_x must be positive");
  if (ocp.n_u < 0 || ocp.n_p < 0 || ocp.n_e < 0 || ocp.n_h < 0)
    err("dimensions", "negative dimension");
  if (!ocp.endpoint_cost) err("missing_function", "endpoint_cost is not set");
  if (!ocp.running_cost) err("missing_function", "running_cost is not set");
  if (!ocp.dynamics) err("missing_function", "dynamics is not set");
  if (ocp.n_e > 0 && !ocp.events) err("missing_function", "events is not set");
  if (ocp.n_h > 0 && !ocp.path) err("missing_function", "path is not set");

  if (ocp.t0_lo > ocp.t0_hi) err("inverted_bounds", "t0 bounds are inverted");
  if (ocp.tf_lo > ocp.tf_hi) err("inverted_bounds", "tf bounds are inverted");
  if (ocp.tf_hi - ocp.t0_lo <= 0.0)
    err("degenerate_horizon",
        "no positive-length horizon exists: tf upper bound does not exceed t0 lower bound");

  auto check_bounds = [&](const char* what, const Vec& lo, const Vec& hi, int n) {
    if (lo.size() != n || hi.size() != n) {
      err("shape_mismatch", std::string(what) + " bounds have wrong length");
      return;
    }
    for (int i = 0; i < n; ++i) {
      if (lo(i) > hi(i))
        err("inverted_bounds",
            std::string(what) + " bound " + std::to_string(i) + " is inverted");
    }
  };
  check_bounds("event", ocp.e_lo, ocp.e_hi, ocp.n_e);
  check_bounds("path", ocp.h_lo, ocp.h_hi, ocp.n_h);
  check_bounds("search box x", ocp.box.x_lo, ocp.box.x_hi, ocp.n_x);
  check_bounds("search box u", ocp.box.u_lo, ocp.box.u_hi, ocp.n_u);
  for (int i = 0; i < ocp.n_x && i < ocp.box.x_lo.size() && i < ocp.box.x_hi.size(); ++i)
    if (ocp.box.x_lo(i) == ocp.box.x_hi(i))
      warnd("box_degenerate", "search box for x[" + std::to_string(i) +
                                  "] has zero width; box entries should be inactive");

  if (has_errors(out)) return out;

  // Probe every function at the search-box midpoint.
  Vec xm = box_midpoint(ocp.box.x_lo, ocp.box.x_hi);
  Vec um = box_midpoint(ocp.box.u_lo, ocp.box.u_hi);
  Vec pm = Vec::Zero(ocp.n_p);
  double t0m = 0.5 * (ocp.t0_lo + ocp.t0_hi);
  double tfm = 0.5 * (ocp.tf_lo + ocp.tf_hi);
  double tm = 0.5 * (t0m + tfm);
  try {
    PathEval pe = eval_functions(ocp, xm, um, tm, pm);
    EndpointEval ee = eval_endpoint(ocp, xm, xm, t0m, tfm, pm);
    auto finite = [](const Vec& v) { return v.allFinite(); };
    if (!std::isfinite(pe.F)) err("nonfinite_at_midpoint", "running_cost is not finite");
    if (!finite(pe.f)) err("nonfinite_at_midpoint", "dynamics is not finite");
    if (ocp.n_h > 0 && !finite(pe.h)) err("nonfinite_at_midpoint", "path is not finite");
    if (!std::isfinite(ee.E)) err("nonfinite_at_midpoint", "endpoint_cost is not finite");
    if (ocp.n_e > 0 && !finite(ee.e)) err("nonfinite_at_midpoint", "events is not finite");
  } catch (const std::exception& ex) {
    err("shape_mismatch", ex.what());
  }
  return out;
}

}  // namespace psopt
