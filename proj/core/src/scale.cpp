#include "psopt/scale.hpp"

#include <cmath>
#include <sstream>

namespace psopt {

namespace {

void channel_map(double lo, double hi, double* g, double* s) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi - lo > 0)) {
    *g = 1.0;
    *s = 0.0;
    return;
  }
  *g = 2.0 / (hi - lo);
  *s = -(hi + lo) / (hi - lo);
}

struct RefPoint {
  Vec x, u, p;
  double t = 0.0, t0 = 0.0, tf = 0.0;
};

RefPoint reference_point(const OcpDefinition& ocp) {
  RefPoint r;
  r.x = box_midpoint(ocp.box.x_lo, ocp.box.x_hi);
  r.u = box_midpoint(ocp.box.u_lo, ocp.box.u_hi);
  r.p = Vec::Zero(ocp.n_p);
  r.t0 = 0.5 * (ocp.t0_lo + ocp.t0_hi);
  r.tf = 0.5 * (ocp.tf_lo + ocp.tf_hi);
  r.t = 0.5 * (r.t0 + r.tf);
  return r;
}

struct ScaledNodeFn : NodeFn {
  std::shared_ptr<const NodeFn> inner;
  ScalingMap map;
  Vec out_gain;  // per output row

  int out_dim() const override { return inner->out_dim(); }

  void unscale_args(const Vec& x, const Vec& u, double t, Vec* xi, Vec* ui,
                    double* ti) const {
    *xi = (x - map.sx).cwiseQuotient(map.gx);
    *ui = (u - map.su).cwiseQuotient(map.gu);
    *ti = (t - map.st) / map.gt;
  }

  Vec value(const Vec& x, const Vec& u, double t, const Vec& p) const override {
    Vec xi, ui;
    double ti;
    unscale_args(x, u, t, &xi, &ui, &ti);
    return out_gain.cwiseProduct(inner->value(xi, ui, ti, p));
  }

  void jacobians(const Vec& x, const Vec& u, double t, const Vec& p, Mat* Jx, Mat* Ju,
                 Vec* Jt, Mat* Jp) const override {
    Vec xi, ui;
    double ti;
    unscale_args(x, u, t, &xi, &ui, &ti);
    Mat jx, ju, jp;
    Vec jt;
    inner->jacobians(xi, ui, ti, p, Jx ? &jx : nullptr, Ju ? &ju : nullptr,
                     Jt ? &jt : nullptr, Jp ? &jp : nullptr);
    if (Jx) *Jx = out_gain.asDiagonal() * jx * map.gx.cwiseInverse().asDiagonal();
    if (Ju) *Ju = out_gain.asDiagonal() * ju * map.gu.cwiseInverse().asDiagonal();
    if (Jt) *Jt = out_gain.cwiseProduct(jt) / map.gt;
    if (Jp) *Jp = out_gain.asDiagonal() * jp;
  }
};

struct ScaledBoundaryFn : BoundaryFn {
  std::shared_ptr<const BoundaryFn> inner;
  ScalingMap map;
  Vec out_gain;

  int out_dim() const override { return inner->out_dim(); }

  Vec value(const Vec& x0, const Vec& xf, double t0, double tf,
            const Vec& p) const override {
    Vec a = (x0 - map.sx).cwiseQuotient(map.gx);
    Vec b = (xf - map.sx).cwiseQuotient(map.gx);
    return out_gain.cwiseProduct(
        inner->value(a, b, (t0 - map.st) / map.gt, (tf - map.st) / map.gt, p));
  }

  void jacobians(const Vec& x0, const Vec& xf, double t0, double tf, const Vec& p,
                 Mat* Jx0, Mat* Jxf, Vec* Jt0, Vec* Jtf, Mat* Jp) const override {
    Vec a = (x0 - map.sx).cwiseQuotient(map.gx);
    Vec b = (xf - map.sx).cwiseQuotient(map.gx);
    Mat j0, jf, jp;
    Vec jt0, jtf;
    inner->jacobians(a, b, (t0 - map.st) / map.gt, (tf - map.st) / map.gt, p,
                     Jx0 ? &j0 : nullptr, Jxf ? &jf : nullptr, Jt0 ? &jt0 : nullptr,
                     Jtf ? &jtf : nullptr, Jp ? &jp : nullptr);
    if (Jx0) *Jx0 = out_gain.asDiagonal() * j0 * map.gx.cwiseInverse().asDiagonal();
    if (Jxf) *Jxf = out_gain.asDiagonal() * jf * map.gx.cwiseInverse().asDiagonal();
    if (Jt0) *Jt0 = out_gain.cwiseProduct(jt0) / map.gt;
    if (Jtf) *Jtf = out_gain.cwiseProduct(jtf) / map.gt;
    if (Jp) *Jp = out_gain.asDiagonal() * jp;
  }
};

std::shared_ptr<const NodeFn> wrap_node(std::shared_ptr<const NodeFn> inner,
                                        const ScalingMap& map, const Vec& out_gain) {
  auto w = std::make_shared<ScaledNodeFn>();
  w->inner = std::move(inner);
  w->map = map;
  w->out_gain = out_gain;
  return w;
}

std::shared_ptr<const BoundaryFn> wrap_boundary(std::shared_ptr<const BoundaryFn> inner,
                                                const ScalingMap& map,
                                                const Vec& out_gain) {
  auto w = std::make_shared<ScaledBoundaryFn>();
  w->inner = std::move(inner);
  w->map = map;
  w->out_gain = out_gain;
  return w;
}

Vec weights_from(const Vec& values) {
  Vec w(values.size());
  for (int i = 0; i < values.size(); ++i) {
    double v = std::isfinite(values(i)) ? std::abs(values(i)) : 1.0;
    w(i) = 1.0 / std::max(1.0, v);
  }
  return w;
}

}  // namespace

ScalingMap identity_scaling(const OcpDefinition& ocp) {
  ScalingMap m;
  m.gx = Vec::Ones(ocp.n_x);
  m.sx = Vec::Zero(ocp.n_x);
  m.gu = Vec::Ones(ocp.n_u);
  m.su = Vec::Zero(ocp.n_u);
  return m;
}

ScalingMap auto_scaling(const OcpDefinition& ocp) {
  ScalingMap m = identity_scaling(ocp);
  for (int s = 0; s < ocp.n_x; ++s) channel_map(ocp.box.x_lo(s), ocp.box.x_hi(s), &m.gx(s), &m.sx(s));
  for (int c = 0; c < ocp.n_u; ++c) channel_map(ocp.box.u_lo(c), ocp.box.u_hi(c), &m.gu(c), &m.su(c));
  channel_map(ocp.t0_lo, ocp.tf_hi, &m.gt, &m.st);

  RefPoint r = reference_point(ocp);
  double ref = 0.0;
  try {
    EndpointEval ee = eval_endpoint(ocp, r.x, r.x, r.t0, r.tf, r.p);
    PathEval pe = eval_functions(ocp, r.x, r.u, r.t, r.p);
    double span = std::max(0.0, ocp.tf_hi - ocp.t0_lo);
    if (std::isfinite(ee.E)) ref += std::abs(ee.E);
    if (std::isfinite(pe.F)) ref += std::abs(pe.F) * span;
  } catch (const std::exception&) {
    ref = 0.0;
  }
  m.gJ = 1.0 / std::max(1.0, ref);
  return m;
}

OcpDefinition apply_scaling(const OcpDefinition& ocp, const ScalingMap& map) {
  OcpDefinition s = ocp;
  const double ratio = map.gJ / map.gt;
  s.endpoint_cost = wrap_boundary(ocp.endpoint_cost, map, Vec::Constant(1, map.gJ));
  s.running_cost = wrap_node(ocp.running_cost, map, Vec::Constant(1, ratio));
  s.dynamics = wrap_node(ocp.dynamics, map, map.gx / map.gt);
  if (ocp.n_e > 0) s.events = wrap_boundary(ocp.events, map, Vec::Ones(ocp.n_e));
  if (ocp.n_h > 0) s.path = wrap_node(ocp.path, map, Vec::Ones(ocp.n_h));
  s.t0_lo = map.gt * ocp.t0_lo + map.st;
  s.t0_hi = map.gt * ocp.t0_hi + map.st;
  s.tf_lo = map.gt * ocp.tf_lo + map.st;
  s.tf_hi = map.gt * ocp.tf_hi + map.st;
  s.box.x_lo = map.gx.cwiseProduct(ocp.box.x_lo) + map.sx;
  s.box.x_hi = map.gx.cwiseProduct(ocp.box.x_hi) + map.sx;
  s.box.u_lo = map.gu.cwiseProduct(ocp.box.u_lo) + map.su;
  s.box.u_hi = map.gu.cwiseProduct(ocp.box.u_hi) + map.su;
  return s;
}

void unscale_solution(const ScalingMap& map, SolutionBundle* sol) {
  const double gJ = map.gJ, gt = map.gt;
  sol->t = (sol->t.array() - map.st) / gt;
  sol->t0 = (sol->t0 - map.st) / gt;
  sol->tf = (sol->tf - map.st) / gt;
  for (int q = 0; q < sol->X.cols(); ++q) {
    sol->X.col(q) = (sol->X.col(q).array() - map.sx(q)) / map.gx(q);
    sol->Lambda.col(q) = sol->Lambda.col(q) * (map.gx(q) / gJ);
  }
  for (int c = 0; c < sol->U.cols(); ++c)
    sol->U.col(c) = (sol->U.col(c).array() - map.su(c)) / map.gu(c);
  sol->Mu *= gt / gJ;
  sol->nu /= gJ;
  sol->H *= gt / gJ;
  sol->cost /= gJ;
}

Vec dynamics_row_weights(const OcpDefinition& ocp) {
  RefPoint r = reference_point(ocp);
  try {
    PathEval pe = eval_functions(ocp, r.x, r.u, r.t, r.p);
    return weights_from(pe.f);
  } catch (const std::exception&) {
    return Vec::Ones(ocp.n_x);
  }
}

Vec event_row_weights(const OcpDefinition& ocp) {
  if (ocp.n_e == 0) return Vec(0);
  RefPoint r = reference_point(ocp);
  try {
    EndpointEval ee = eval_endpoint(ocp, r.x, r.x, r.t0, r.tf, r.p);
    return weights_from(ee.e);
  } catch (const std::exception&) {
    return Vec::Ones(ocp.n_e);
  }
}

Vec path_row_weights(const OcpDefinition& ocp) {
  if (ocp.n_h == 0) return Vec(0);
  RefPoint r = reference_point(ocp);
  try {
    PathEval pe = eval_functions(ocp, r.x, r.u, r.t, r.p);
    return weights_from(pe.h);
  } catch (const std::exception&) {
    return Vec::Ones(ocp.n_h);
  }
}

std::vector<Diagnostic> imbalance_report(const OcpDefinition& ocp) {
  std::vector<Diagnostic> out;
  auto span_ratio = [](const Vec& lo, const Vec& hi) {
    double wmin = kInf, wmax = 0.0;
    for (int i = 0; i < lo.size(); ++i) {
      double w = hi(i) - lo(i);
      if (!std::isfinite(w) || w <= 0) continue;
      wmin = std::min(wmin, w);
      wmax = std::max(wmax, w);
    }
    return wmin < kInf && wmin > 0 ? wmax / wmin : 1.0;
  };
  double rx = span_ratio(ocp.box.x_lo, ocp.box.x_hi);
  if (rx > 1e3) {
    std::ostringstream os;
    os << "state box widths span a factor of " << rx << "; consider rescaling";
    out.push_back({Severity::Warning, "imbalanced_state_box", os.str()});
  }
  double ru = span_ratio(ocp.box.u_lo, ocp.box.u_hi);
  if (ru > 1e3) {
    std::ostringstream os;
    os << "control box widths span a factor of " << ru << "; consider rescaling";
    out.push_back({Severity::Warning, "imbalanced_control_box", os.str()});
  }
  RefPoint r = reference_point(ocp);
  try {
    PathEval pe = eval_functions(ocp, r.x, r.u, r.t, r.p);
    double fmin = kInf, fmax = 0.0;
    for (int q = 0; q < ocp.n_x; ++q) {
      double v = std::abs(pe.f(q));
      if (!std::isfinite(v) || v == 0) continue;
      fmin = std::min(fmin, v);
      fmax = std::max(fmax, v);
    }
    if (fmin < kInf && fmax / fmin > 1e4) {
      std::ostringstream os;
      os << "dynamics rates at the reference point span a factor of " << fmax / fmin
         << "; consider rescaling";
      out.push_back({Severity::Warning, "imbalanced_dynamics", os.str()});
    }
    double span = std::max(0.0, ocp.tf_hi - ocp.t0_lo);
    double cost_mag = std::abs(pe.F) * span;
    EndpointEval ee = eval_endpoint(ocp, r.x, r.x, r.t0, r.tf, r.p);
    cost_mag += std::abs(ee.E);
    if (std::isfinite(cost_mag) && cost_mag > 1e6) {
      std::ostringstream os;
      os << "cost magnitude at the reference point is " << cost_mag
         << "; consider a cost gain";
      out.push_back({Severity::Warning, "imbalanced_cost", os.str()});
    }
  } catch (const std::exception&) {
  }
  return out;
}

std::vector<Diagnostic> imbalance_report(const SolutionBundle& sol) {
  std::vector<Diagnostic> out;
  auto flag = [&](const std::string& what, double mag) {
    if (!(mag > 0)) return;
    if (mag >= 1e-9 && mag <= 1e9) return;
    std::ostringstream os;
    os << what << " magnitude " << mag << " is outside [1e-9, 1e9]; the equations are"
       << " poorly balanced";
    out.push_back({Severity::Warning, "imbalanced_duals", os.str()});
  };
  for (int q = 0; q < sol.Lambda.cols(); ++q)
    flag("costate channel " + std::to_string(q), sol.Lambda.col(q).cwiseAbs().maxCoeff());
  if (sol.H.size()) flag("Hamiltonian", sol.H.cwiseAbs().maxCoeff());
  return out;
}

}  // namespace psopt
