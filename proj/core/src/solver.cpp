#include "psopt/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace psopt {

namespace {

constexpr double kGolden = 0.61803398874989484;

double frac(double v) { return v - std::floor(v); }

double channel_span(double lo, double hi) {
  double w = hi - lo;
  return std::isfinite(w) && w > 0 ? w : 1.0;
}

void log_line(const SolverConfig& cfg, int level, const std::string& line) {
  if (cfg.sink && cfg.log_level >= level) cfg.sink(level, line);
}

double pick_time(double lo, double hi) {
  if (lo == hi) return lo;
  if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
  if (std::isfinite(lo)) return lo + 1.0;
  if (std::isfinite(hi)) return hi - 1.0;
  return 0.0;
}

void clip_primal(const GeneralizedEquation& ge, Vec* z) {
  const Layout& l = ge.layout();
  const OcpDefinition& ocp = ge.ocp();
  for (int q = 0; q < l.n_x; ++q)
    for (int i = 0; i <= l.N; ++i) {
      double& v = (*z)(l.col_x(q, i));
      v = std::clamp(v, ocp.box.x_lo(q), ocp.box.x_hi(q));
    }
  for (int c = 0; c < l.n_u; ++c)
    for (int i = 0; i <= l.N; ++i) {
      double& v = (*z)(l.col_u(c, i));
      v = std::clamp(v, ocp.box.u_lo(c), ocp.box.u_hi(c));
    }
  double& t0 = (*z)(l.off_t0);
  double& tf = (*z)(l.off_tf);
  t0 = std::clamp(t0, ocp.t0_lo, ocp.t0_hi);
  tf = std::clamp(tf, ocp.tf_lo, ocp.tf_hi);
  double window = ocp.tf_hi - ocp.t0_lo;
  double floor = 1e-3 * (std::isfinite(window) && window > 0 ? window : 1.0);
  if (tf - t0 < floor) {
    tf = std::min(t0 + floor, ocp.tf_hi);
    if (tf - t0 < floor) t0 = std::max(tf - floor, ocp.t0_lo);
  }
}

// Low-order Legendre modes added to the state and control channels, signs
// drawn from a golden-ratio sequence; amplitude doubles per round.
void perturb_iterate(const GeneralizedEquation& ge, int round, unsigned seed, Vec* z) {
  const Layout& l = ge.layout();
  const OcpDefinition& ocp = ge.ocp();
  const Grid& g = ge.grid();
  int nch = l.n_x + l.n_u;
  for (int jch = 0; jch < nch; ++jch) {
    int mode = ((round + jch) % 3) + 1;
    bool is_state = jch < l.n_x;
    int q = is_state ? jch : jch - l.n_x;
    double span = is_state ? channel_span(ocp.box.x_lo(q), ocp.box.x_hi(q))
                           : channel_span(ocp.box.u_lo(q), ocp.box.u_hi(q));
    double amp = 0.01 * std::pow(2.0, round) * span;
    double sgn = frac((seed + 97.0 * round + 31.0 * jch) * kGolden) > 0.5 ? 1.0 : -1.0;
    for (int i = 0; i <= l.N; ++i) {
      double bump = sgn * amp * legendre(mode, g.tau(i));
      (*z)(is_state ? l.col_x(q, i) : l.col_u(q, i)) += bump;
    }
  }
  clip_primal(ge, z);
}

struct StageOutcome {
  bool reached = false;
  bool nonfinite = false;
  bool singular = false;
  int iters = 0;
  double final_resid = kInf;
};

StageOutcome run_newton(const GeneralizedEquation& ge, Vec* z, double delta_target,
                        const std::string& label, const SolverConfig& cfg,
                        std::vector<IterationRecord>* records) {
  StageOutcome out;
  double rho = 1e-6;
  int perturbs_left = cfg.perturb_rounds;
  int accepted_total = 0;
  std::deque<std::pair<Vec, double>> ring;  // accepted iterates, newest last

  Vec r = ge.residual(*z);
  if (!r.allFinite()) {
    out.nonfinite = true;
    return out;
  }
  double psi = 0.5 * r.squaredNorm();
  ring.push_back({*z, psi});
  Vec best_z = *z;
  double best_resid = r.lpNorm<Eigen::Infinity>();
  std::vector<double> psi_hist, resid_hist;

  for (int iter = 0; iter < cfg.max_inner_iters; ++iter) {
    double rinf = r.lpNorm<Eigen::Infinity>();
    if (rinf < best_resid) {
      best_resid = rinf;
      best_z = *z;
    }
    if (rinf <= delta_target) {
      out.reached = true;
      out.iters = accepted_total;
      out.final_resid = rinf;
      return out;
    }
    psi_hist.push_back(psi);
    resid_hist.push_back(best_resid);
    bool merit_flat = iter >= 20 && psi > 0.995 * psi_hist[iter - 20];
    bool resid_flat = iter >= 30 && best_resid > 0.995 * resid_hist[iter - 30];
    if (merit_flat || resid_flat) {
      // progress has flattened out; give the caller a chance to recover
      out.iters = accepted_total;
      out.final_resid = best_resid;
      *z = best_z;
      return out;
    }

    Mat J = ge.jacobian(*z);
    if (!J.allFinite()) {
      if (ring.size() > 1) {
        ring.pop_back();
        *z = ring.back().first;
        r = ge.residual(*z);
        psi = ring.back().second;
        rho *= 10.0;
        continue;
      }
      out.nonfinite = true;
      out.iters = accepted_total;
      out.final_resid = best_resid;
      *z = best_z;
      return out;
    }

    auto try_step = [&](const Vec& step) {
      if (!step.allFinite()) return false;
      for (int k = 0; k <= 14; ++k) {
        double alpha = std::ldexp(1.0, -k);
        Vec zt = *z + alpha * step;
        clip_primal(ge, &zt);
        Vec rt = ge.residual(zt);
        if (!rt.allFinite()) continue;
        double psit = 0.5 * rt.squaredNorm();
        if (psit <= psi * (1.0 - 1e-4 * alpha)) {
          *z = zt;
          r = rt;
          psi = psit;
          rho = std::max(rho / 3.0, 1e-12);
          ++accepted_total;
          ring.push_back({*z, psi});
          while ((int)ring.size() > cfg.backtrack_depth + 1) ring.pop_front();
          if (records) {
            IterationRecord rec;
            rec.stage = label;
            rec.N = ge.layout().N;
            rec.iter = iter;
            rec.merit = r.lpNorm<Eigen::Infinity>();
            rec.delta = delta_target;
            rec.sigma = ge.sigma();
            rec.step_norm = alpha * step.norm();
            rec.rho = rho;
            records->push_back(rec);
          }
          std::ostringstream os;
          os << "  " << label << " N=" << ge.layout().N << " it=" << iter
             << " |r|=" << r.lpNorm<Eigen::Infinity>() << " alpha=" << alpha
             << " rho=" << rho;
          log_line(cfg, 2, os.str());
          return true;
        }
      }
      return false;
    };

    // The undamped direction descends the merit whenever J is invertible;
    // when it is rejected, fall back to Levenberg steps on the normal
    // equations, which descend regardless of J's symmetry or definiteness.
    bool accepted = try_step(Eigen::PartialPivLU<Mat>(J).solve(-r));
    if (!accepted) {
      Mat JtJ = J.transpose() * J;
      Vec g = J.transpose() * r;
      while (!accepted && rho <= 1e6) {
        Mat A = JtJ;
        A.diagonal().array() += rho;
        accepted = try_step(Eigen::LDLT<Mat>(A).solve(-g));
        if (!accepted) rho *= 10.0;
      }
    }
    if (!accepted) {
      if (perturbs_left > 0) {
        int round = cfg.perturb_rounds - perturbs_left;
        --perturbs_left;
        perturb_iterate(ge, round, cfg.seed, z);
        r = ge.residual(*z);
        if (!r.allFinite()) {
          *z = best_z;
          r = ge.residual(*z);
        }
        psi = 0.5 * r.squaredNorm();
        rho = 1e-2;
        std::ostringstream os;
        os << "  " << label << " N=" << ge.layout().N
           << " stalled; perturbation round " << round;
        log_line(cfg, 1, os.str());
        continue;
      }
      out.singular = true;
      out.iters = accepted_total;
      out.final_resid = best_resid;
      *z = best_z;
      return out;
    }
  }
  out.iters = accepted_total;
  out.final_resid = best_resid;
  *z = best_z;
  return out;
}

double clamp_violation(double v, double lo, double hi) {
  if (v < lo) return v - lo;
  if (v > hi) return v - hi;
  return 0.0;
}

// Gauss-Newton on the dual columns only (costates, rate duals, path and event
// multipliers) with the primal frozen. Most dual rows are affine in these
// unknowns, so a couple of steps from a fresh primal fit the whole dual side
// at once instead of letting the line search creep toward it.
void fit_duals(const GeneralizedEquation& ge, Vec* z) {
  const Layout& l = ge.layout();
  const int d0 = l.off_L;
  const int nd = l.off_t0 - d0;
  if (nd <= 0) return;
  Vec r = ge.residual(*z);
  if (!r.allFinite()) return;
  double phi = r.squaredNorm();
  for (int it = 0; it < 3; ++it) {
    Mat J = ge.jacobian(*z);
    if (!J.allFinite()) return;
    Mat A = J.middleCols(d0, nd);
    Mat H = A.transpose() * A;
    H.diagonal().array() += 1e-10;
    Vec step = Eigen::LDLT<Mat>(H).solve(-A.transpose() * r);
    if (!step.allFinite()) return;
    Vec zt = *z;
    zt.segment(d0, nd) += step;
    Vec rt = ge.residual(zt);
    if (!rt.allFinite() || rt.squaredNorm() >= phi) return;
    *z = zt;
    r = rt;
    phi = rt.squaredNorm();
  }
}

}  // namespace

void fit_endpoints(const OcpDefinition& ocp, double t0, double tf, Vec* x0, Vec* xf) {
  *x0 = box_midpoint(ocp.box.x_lo, ocp.box.x_hi);
  *xf = *x0;
  if (ocp.n_e == 0) return;
  const int nx = ocp.n_x;
  Vec p = Vec::Zero(ocp.n_p);
  double rho = 1e-8;
  auto viol = [&](const Vec& a, const Vec& b) {
    Vec e = ocp.events->value(a, b, t0, tf, p);
    Vec v(ocp.n_e);
    for (int k = 0; k < ocp.n_e; ++k) v(k) = clamp_violation(e(k), ocp.e_lo(k), ocp.e_hi(k));
    return v;
  };
  for (int it = 0; it < 60; ++it) {
    Vec v = viol(*x0, *xf);
    if (!v.allFinite() || v.lpNorm<Eigen::Infinity>() < 1e-12) break;
    Mat ex0, exf;
    ocp.events->jacobians(*x0, *xf, t0, tf, p, &ex0, &exf, nullptr, nullptr, nullptr);
    Mat J(ocp.n_e, 2 * nx);
    Vec e = ocp.events->value(*x0, *xf, t0, tf, p);
    for (int k = 0; k < ocp.n_e; ++k) {
      double active = (e(k) < ocp.e_lo(k) || e(k) > ocp.e_hi(k)) ? 1.0 : 0.0;
      J.block(k, 0, 1, nx) = active * ex0.row(k);
      J.block(k, nx, 1, nx) = active * exf.row(k);
    }
    Mat A = J.transpose() * J;
    A.diagonal().array() += rho;
    Vec step = Eigen::LDLT<Mat>(A).solve(-J.transpose() * v);
    if (!step.allFinite()) break;
    Vec a = box_clip(*x0 + step.head(nx), ocp.box.x_lo, ocp.box.x_hi);
    Vec b = box_clip(*xf + step.tail(nx), ocp.box.x_lo, ocp.box.x_hi);
    Vec vn = viol(a, b);
    if (vn.allFinite() && vn.squaredNorm() <= v.squaredNorm()) {
      *x0 = a;
      *xf = b;
      rho = std::max(rho / 3.0, 1e-12);
    } else {
      rho *= 10.0;
      if (rho > 1e8) break;
    }
  }
}

PrimalDual initial_iterate(const OcpDefinition& ocp, const Grid& grid, int priority,
                           unsigned seed) {
  const int nn = grid.N + 1;
  PrimalDual s;
  s.t0 = pick_time(ocp.t0_lo, ocp.t0_hi);
  s.tf = pick_time(ocp.tf_lo, ocp.tf_hi);
  if (s.tf - s.t0 < 1e-3) s.tf = s.t0 + std::max(1e-3, 0.1 * std::abs(s.t0) + 1e-3);
  s.p = Vec::Zero(ocp.n_p);

  Vec xm = box_midpoint(ocp.box.x_lo, ocp.box.x_hi);
  Vec um = box_midpoint(ocp.box.u_lo, ocp.box.u_hi);
  s.X.resize(nn, ocp.n_x);
  s.U.resize(nn, ocp.n_u);
  if (priority == 1) {
    Vec x0, xf;
    fit_endpoints(ocp, s.t0, s.tf, &x0, &xf);
    for (int i = 0; i < nn; ++i) {
      double a = 0.5 * (1.0 + grid.tau(i));
      s.X.row(i) = ((1.0 - a) * x0 + a * xf).transpose();
    }
    for (int i = 0; i < nn; ++i) s.U.row(i) = um.transpose();
  } else {
    for (int i = 0; i < nn; ++i) {
      s.X.row(i) = xm.transpose();
      s.U.row(i) = um.transpose();
    }
    if (priority >= 3) {
      for (int q = 0; q < ocp.n_x; ++q) {
        double span = channel_span(ocp.box.x_lo(q), ocp.box.x_hi(q));
        double off = 0.25 * span * (frac((seed + q + 1) * kGolden) - 0.5);
        double slope = 0.25 * span * (frac((seed + q + 13) * kGolden) - 0.5);
        for (int i = 0; i < nn; ++i) s.X(i, q) += off + slope * grid.tau(i);
      }
      for (int c = 0; c < ocp.n_u; ++c) {
        double span = channel_span(ocp.box.u_lo(c), ocp.box.u_hi(c));
        double off = 0.25 * span * (frac((seed + c + 29) * kGolden) - 0.5);
        for (int i = 0; i < nn; ++i) s.U(i, c) += off;
      }
      for (int i = 0; i < nn; ++i) {
        s.X.row(i) = box_clip(s.X.row(i).transpose(), ocp.box.x_lo, ocp.box.x_hi).transpose();
        s.U.row(i) = box_clip(s.U.row(i).transpose(), ocp.box.u_lo, ocp.box.u_hi).transpose();
      }
    }
  }

  const double gp = 0.5 * (s.tf - s.t0);
  s.V.resize(nn, ocp.n_x);
  for (int i = 0; i < nn; ++i) {
    double t = node_time(grid, i, s.t0, s.tf);
    Vec f = ocp.dynamics->value(s.X.row(i).transpose(), s.U.row(i).transpose(), t, s.p);
    if (!f.allFinite()) f.setZero();
    s.V.row(i) = (gp * f).transpose();
  }
  s.Lambda = Mat::Zero(nn, ocp.n_x);
  s.Omega = Mat::Zero(nn, ocp.n_x);
  s.Mu = Mat::Zero(nn, ocp.n_h);
  s.nu = Vec::Zero(ocp.n_e);
  return s;
}

namespace {

// Residual and Jacobian of the primal-only repair system over the columns
// [X, U, V, t0, tf, p]: state defects, rate matching, clamped path and event
// violations.
void elastic_system(const GeneralizedEquation& ge, const Vec& z, Vec* r_out, Mat* J_out,
                    const std::vector<int>& cols) {
  const Layout& l = ge.layout();
  const OcpDefinition& ocp = ge.ocp();
  const Grid& g = ge.grid();
  const Mat& B = ge.pair().A_v;
  PrimalDual s = unpack(l, z);
  const int N = l.N;
  const double gp = 0.5 * (s.tf - s.t0);

  const int rows = l.n_x * N + l.n_x * l.nn + l.n_h * l.nn + l.n_e;
  Vec r = Vec::Zero(rows);
  Mat Jfull = Mat::Zero(rows, l.size);

  int rr = 0;
  for (int q = 0; q < l.n_x; ++q) {
    Vec bx = B * s.V.col(q);
    for (int i = 1; i <= N; ++i, ++rr) {
      r(rr) = s.X(0, q) + bx(i) - s.X(i, q);
      Jfull(rr, l.col_x(q, 0)) += 1.0;
      Jfull(rr, l.col_x(q, i)) -= 1.0;
      for (int j = 0; j <= N; ++j) Jfull(rr, l.col_v(q, j)) += B(i, j);
    }
  }
  for (int i = 0; i <= N; ++i) {
    double t = node_time(g, i, s.t0, s.tf);
    Vec x = s.X.row(i).transpose(), u = s.U.row(i).transpose();
    PathEval pe = eval_functions(ocp, x, u, t, s.p);
    Mat fx, fu, fp, hx, hu, hp;
    Vec ft, ht;
    ocp.dynamics->jacobians(x, u, t, s.p, &fx, &fu, &ft, &fp);
    if (l.n_h > 0) ocp.path->jacobians(x, u, t, s.p, &hx, &hu, &ht, &hp);
    const double a_i = 0.5 * (1.0 - g.tau(i));
    const double b_i = 0.5 * (1.0 + g.tau(i));
    for (int q = 0; q < l.n_x; ++q) {
      int row = l.n_x * N + q * l.nn + i;
      r(row) = gp * pe.f(q) - s.V(i, q);
      for (int q2 = 0; q2 < l.n_x; ++q2) Jfull(row, l.col_x(q2, i)) += gp * fx(q, q2);
      for (int c = 0; c < l.n_u; ++c) Jfull(row, l.col_u(c, i)) += gp * fu(q, c);
      Jfull(row, l.col_v(q, i)) -= 1.0;
      Jfull(row, l.off_t0) += -0.5 * pe.f(q) + gp * ft(q) * a_i;
      Jfull(row, l.off_tf) += 0.5 * pe.f(q) + gp * ft(q) * b_i;
      for (int m = 0; m < l.n_p; ++m) Jfull(row, l.off_p + m) += gp * fp(q, m);
    }
    for (int j = 0; j < l.n_h; ++j) {
      int row = l.n_x * N + l.n_x * l.nn + j * l.nn + i;
      double v = clamp_violation(pe.h(j), ocp.h_lo(j), ocp.h_hi(j));
      r(row) = v;
      if (v != 0.0) {
        for (int q2 = 0; q2 < l.n_x; ++q2) Jfull(row, l.col_x(q2, i)) += hx(j, q2);
        for (int c = 0; c < l.n_u; ++c) Jfull(row, l.col_u(c, i)) += hu(j, c);
        Jfull(row, l.off_t0) += ht(j) * a_i;
        Jfull(row, l.off_tf) += ht(j) * b_i;
        for (int m = 0; m < l.n_p; ++m) Jfull(row, l.off_p + m) += hp(j, m);
      }
    }
  }
  if (l.n_e > 0) {
    Vec x0 = s.X.row(0).transpose(), xf = s.X.row(N).transpose();
    EndpointEval ee = eval_endpoint(ocp, x0, xf, s.t0, s.tf, s.p);
    Mat ex0, exf, ep;
    Vec et0, etf;
    ocp.events->jacobians(x0, xf, s.t0, s.tf, s.p, &ex0, &exf, &et0, &etf, &ep);
    for (int k = 0; k < l.n_e; ++k) {
      int row = rows - l.n_e + k;
      double v = clamp_violation(ee.e(k), ocp.e_lo(k), ocp.e_hi(k));
      r(row) = v;
      if (v != 0.0) {
        for (int q = 0; q < l.n_x; ++q) {
          Jfull(row, l.col_x(q, 0)) += ex0(k, q);
          Jfull(row, l.col_x(q, N)) += exf(k, q);
        }
        Jfull(row, l.off_t0) += et0(k);
        Jfull(row, l.off_tf) += etf(k);
        for (int m = 0; m < l.n_p; ++m) Jfull(row, l.off_p + m) += ep(k, m);
      }
    }
  }

  *r_out = r;
  J_out->resize(rows, (int)cols.size());
  for (int c = 0; c < (int)cols.size(); ++c) J_out->col(c) = Jfull.col(cols[c]);
}

}  // namespace

double elastic_repair(const GeneralizedEquation& ge, Vec* z, int max_iters,
                      const std::vector<int>* pinned) {
  const Layout& l = ge.layout();
  std::vector<int> cols;
  for (int q = 0; q < l.n_x; ++q)
    for (int i = 0; i <= l.N; ++i) cols.push_back(l.col_x(q, i));
  for (int c = 0; c < l.n_u; ++c)
    for (int i = 0; i <= l.N; ++i) cols.push_back(l.col_u(c, i));
  for (int q = 0; q < l.n_x; ++q)
    for (int i = 0; i <= l.N; ++i) cols.push_back(l.col_v(q, i));
  if (ge.ocp().t0_lo != ge.ocp().t0_hi) cols.push_back(l.off_t0);
  if (ge.ocp().tf_lo != ge.ocp().tf_hi) cols.push_back(l.off_tf);
  for (int m = 0; m < l.n_p; ++m) cols.push_back(l.off_p + m);
  if (pinned && !pinned->empty()) {
    std::vector<int> kept;
    for (int c : cols)
      if (std::find(pinned->begin(), pinned->end(), c) == pinned->end()) kept.push_back(c);
    cols.swap(kept);
  }

  double rho = 1e-8;
  Vec r;
  Mat J;
  elastic_system(ge, *z, &r, &J, cols);
  double viol = r.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < max_iters && viol > 1e-10; ++it) {
    Mat A = J.transpose() * J;
    A.diagonal().array() += rho;
    Vec step = Eigen::LDLT<Mat>(A).solve(-J.transpose() * r);
    if (!step.allFinite()) break;
    Vec zt = *z;
    for (int c = 0; c < (int)cols.size(); ++c) zt(cols[c]) += step(c);
    clip_primal(ge, &zt);
    Vec rt;
    Mat Jt;
    elastic_system(ge, zt, &rt, &Jt, cols);
    if (rt.allFinite() && rt.squaredNorm() <= r.squaredNorm() * (1.0 + 1e-12)) {
      *z = zt;
      r = rt;
      J = Jt;
      viol = r.lpNorm<Eigen::Infinity>();
      rho = std::max(rho / 3.0, 1e-12);
      if (step.lpNorm<Eigen::Infinity>() < 1e-14) break;
    } else {
      rho *= 10.0;
      if (rho > 1e10) break;
    }
  }
  return viol;
}

DegenerateActivity detect_degenerate_activity(const OcpDefinition& ocp, const Grid& grid,
                                              const PrimalDual& s, double stage_delta) {
  DegenerateActivity out;
  if (ocp.n_h < 2) return out;
  const int nn = grid.N + 1;
  const int samples = 5 * nn;
  Vec bw = barycentric_weights(grid.tau);
  Vec p = s.p;

  Mat Hs(samples, ocp.n_h);       // path values on the dense lattice
  Mat Xs(samples, ocp.n_x);
  Mat Us(samples, ocp.n_u);
  Vec taus(samples);
  for (int k = 0; k < samples; ++k) {
    double tq = -1.0 + 2.0 * k / (samples - 1.0);
    taus(k) = tq;
    for (int q = 0; q < ocp.n_x; ++q) Xs(k, q) = barycentric_eval(grid.tau, bw, s.X.col(q), tq);
    for (int c = 0; c < ocp.n_u; ++c) Us(k, c) = barycentric_eval(grid.tau, bw, s.U.col(c), tq);
    double t = 0.5 * ((1.0 - tq) * s.t0 + (1.0 + tq) * s.tf);
    Vec h = ocp.path->value(Xs.row(k).transpose(), Us.row(k).transpose(), t, p);
    Hs.row(k) = h.transpose();
  }

  // Per-row activity band relative to the typical magnitude along the path.
  Vec band(ocp.n_h);
  for (int j = 0; j < ocp.n_h; ++j) {
    std::vector<double> mags(samples);
    for (int k = 0; k < samples; ++k) mags[k] = std::abs(Hs(k, j));
    std::nth_element(mags.begin(), mags.begin() + samples / 2, mags.end());
    double scale = std::max(mags[samples / 2], 1e-6);
    band(j) = std::max(10.0 * stage_delta, 1e-3) * scale;
  }

  for (int k = 0; k < samples && !out.flagged; ++k) {
    double t = 0.5 * ((1.0 - taus(k)) * s.t0 + (1.0 + taus(k)) * s.tf);
    Vec x = Xs.row(k).transpose(), u = Us.row(k).transpose();
    Mat hx;
    bool have_grad = false;
    for (int ja = 0; ja < ocp.n_h && !out.flagged; ++ja) {
      if (std::abs(Hs(k, ja)) > band(ja)) continue;
      for (int jb = ja + 1; jb < ocp.n_h && !out.flagged; ++jb) {
        if (std::abs(Hs(k, jb)) > band(jb)) continue;
        if (!have_grad) {
          ocp.path->jacobians(x, u, t, p, &hx, nullptr, nullptr, nullptr);
          have_grad = true;
        }
        Vec ga = hx.row(ja).transpose(), gb = hx.row(jb).transpose();
        double na = ga.norm(), nb = gb.norm();
        if (na < 1e-9 || nb < 1e-9) continue;  // control-only rows
        double cosine = ga.dot(gb) / (na * nb);
        if (cosine <= -0.95) {
          out.flagged = true;
          out.row_a = ja;
          out.row_b = jb;
          out.tau = taus(k);
          out.cosine = cosine;
          Vec dir = gb / nb - ga / na;
          double dn = dir.norm();
          out.direction = dn > 1e-12 ? Vec(dir / dn) : Vec(Vec::Zero(ocp.n_x));
        }
      }
    }
  }
  if (out.flagged) return out;

  // A nodal iterate can also step across a path boundary between nodes: every
  // node feasible, the interpolant deep inside a forbidden region. Flag the
  // worst such crossing and push along the violated row's state gradient,
  // back toward the feasible side.
  double worst_ratio = 1.0;
  for (int j = 0; j < ocp.n_h; ++j) {
    double hmin = Hs.col(j).minCoeff(), hmax = Hs.col(j).maxCoeff();
    double thresh = 0.02 * std::max(hmax - hmin, 1e-12);
    for (int k = 0; k < samples; ++k) {
      double v = clamp_violation(Hs(k, j), ocp.h_lo(j), ocp.h_hi(j));
      double ratio = std::abs(v) / thresh;
      if (ratio <= worst_ratio) continue;
      double t = 0.5 * ((1.0 - taus(k)) * s.t0 + (1.0 + taus(k)) * s.tf);
      Mat hx;
      ocp.path->jacobians(Xs.row(k).transpose(), Us.row(k).transpose(), t, p, &hx, nullptr,
                          nullptr, nullptr);
      Vec g = hx.row(j).transpose();
      double gn = g.norm();
      if (gn < 1e-9) continue;  // control-only rows: not a state detour problem
      worst_ratio = ratio;
      out.flagged = true;
      out.row_a = j;
      out.row_b = j;
      out.tau = taus(k);
      out.cosine = 0.0;
      out.direction = v < 0 ? Vec(g / gn) : Vec(-g / gn);
    }
  }
  return out;
}

void apply_escape_bump(const OcpDefinition& ocp, const Grid& grid,
                       const DegenerateActivity& da, int attempt, PrimalDual* s) {
  if (!da.flagged || da.direction.size() != ocp.n_x) return;
  double span = 0.0;
  for (int q = 0; q < ocp.n_x; ++q)
    if (std::abs(da.direction(q)) > 1e-12)
      span = std::max(span, channel_span(ocp.box.x_lo(q), ocp.box.x_hi(q)));
  if (span == 0.0) span = 1.0;
  double amp = 0.02 * std::pow(2.0, attempt) * span;
  double sgn = (attempt % 2 == 0) ? 1.0 : -1.0;
  const int nn = grid.N + 1;
  // Clipping a deep bump against the state box flattens the profile into an
  // unrealizable shape, so cap the amplitude at the available headroom.
  double cap = kInf;
  for (int i = 0; i < nn; ++i) {
    double w = 1.0 - grid.tau(i) * grid.tau(i);
    double profile = w * w;
    for (int q = 0; q < ocp.n_x; ++q) {
      double d = sgn * profile * da.direction(q);
      if (std::abs(d) < 1e-12) continue;
      double room = d > 0 ? ocp.box.x_hi(q) - s->X(i, q) : s->X(i, q) - ocp.box.x_lo(q);
      if (std::isfinite(room)) cap = std::min(cap, 0.95 * std::max(room, 0.0) / std::abs(d));
    }
  }
  amp = std::min(amp, cap);
  for (int i = 0; i < nn; ++i) {
    double w = 1.0 - grid.tau(i) * grid.tau(i);
    double profile = w * w;  // value and slope both zero at the endpoints
    for (int q = 0; q < ocp.n_x; ++q) s->X(i, q) += sgn * amp * profile * da.direction(q);
  }
  for (int i = 0; i < nn; ++i)
    s->X.row(i) = box_clip(s->X.row(i).transpose(), ocp.box.x_lo, ocp.box.x_hi).transpose();
  // Keep the state defects exact across the bump: rates from differentiating
  // the bumped trajectory, so the repair only has to fit the rate rows.
  Mat D = lagrange_diff_matrix(grid);
  s->V = D * s->X;
}

namespace {

Vec carry_iterate(const Layout& from, const Grid& gfrom, const Vec& zfrom,
                  const Layout& to, const Grid& gto) {
  PrimalDual s = unpack(from, zfrom);
  PrimalDual d;
  auto lift = [&](const Mat& m) {
    Mat out(gto.N + 1, m.cols());
    for (int c = 0; c < m.cols(); ++c)
      out.col(c) = barycentric_interpolate(gfrom.tau, m.col(c), gto.tau);
    return out;
  };
  d.X = lift(s.X);
  d.U = lift(s.U);
  d.V = lift(s.V);
  d.Lambda = lift(s.Lambda);
  d.Omega = lift(s.Omega);
  d.Mu = lift(s.Mu);
  d.nu = s.nu;
  d.t0 = s.t0;
  d.tf = s.tf;
  d.p = s.p;
  return pack(to, d);
}

struct StagePlan {
  int N;
  double sigma;
  double delta;
  std::string label;
};

std::vector<StagePlan> plan_stages(const SolverConfig& cfg) {
  std::vector<int> meshes;
  for (int n = std::max(cfg.n0, 2); n <= std::max(cfg.n_max, cfg.n0); n *= 2) {
    meshes.push_back(std::min(n, cfg.n_max));
    if (meshes.back() == cfg.n_max) break;
  }
  if (meshes.empty()) meshes.push_back(std::max(cfg.n0, 2));
  std::vector<double> sigmas = cfg.sigmas;
  if (sigmas.empty()) sigmas.push_back(1e-6);
  const int S = std::max(meshes.size(), sigmas.size());
  std::vector<StagePlan> plan(S);
  for (int k = 0; k < S; ++k) {
    plan[k].N = meshes[std::min<size_t>(k, meshes.size() - 1)];
    plan[k].sigma = sigmas[std::min<size_t>(k, sigmas.size() - 1)];
    plan[k].label = k == 0 ? "stabilize" : (k == S - 1 ? "refine" : "accelerate");
  }
  if (S == 1) plan[0].label = "refine";
  return plan;
}

std::string describe_stage(const StagePlan& sp, const StageOutcome& so) {
  std::ostringstream os;
  os << "stage " << sp.label << " N=" << sp.N << " sigma=" << sp.sigma
     << " target=" << sp.delta << ": "
     << (so.reached ? "reached" : (so.singular ? "stalled" : "stopped")) << " |r|="
     << so.final_resid << " after " << so.iters << " accepted steps";
  return os.str();
}

}  // namespace

SolutionBundle solve(const OcpDefinition& ocp, SolverConfig cfg) {
  SolutionBundle bundle;
  bundle.notes = doctor(ocp);
  if (has_errors(bundle.notes)) {
    bundle.status = SolveStatus::Infeasible;
    return bundle;
  }
  {
    auto imb = imbalance_report(ocp);
    bundle.notes.insert(bundle.notes.end(), imb.begin(), imb.end());
  }
  cfg.delta_final = std::max(cfg.delta_final, 1e-8);
  cfg.delta0 = std::max(cfg.delta0, cfg.delta_final);

  ScalingMap map = cfg.auto_scale ? auto_scaling(ocp) : identity_scaling(ocp);
  OcpDefinition sc = apply_scaling(ocp, map);
  Vec w_dyn = dynamics_row_weights(sc);
  Vec w_ev = event_row_weights(sc);
  Vec w_path = path_row_weights(sc);

  std::vector<StagePlan> plan = plan_stages(cfg);
  double delta = cfg.delta0;
  double prev_resid = kInf;
  double theta = 0.1;
  for (size_t k = 0; k < plan.size(); ++k) {
    plan[k].delta = k + 1 == plan.size() ? cfg.delta_final : std::max(delta, cfg.delta_final);
    delta = std::max(cfg.delta_final, delta * theta);
  }

  auto make_ge = [&](int N, double sigma) {
    auto ge = std::make_unique<GeneralizedEquation>(sc, N, sigma);
    const Layout& l = ge->layout();
    Vec& w = ge->row_weights();
    for (int q = 0; q < l.n_x; ++q)
      for (int i = 0; i <= l.N; ++i) w(l.row_alg_v + q * l.nn + i) = w_dyn(q);
    for (int j = 0; j < l.n_h; ++j)
      for (int i = 0; i <= l.N; ++i) w(l.row_comp + j * l.nn + i) = w_path(j);
    for (int e = 0; e < l.n_e; ++e) w(l.row_ev + e) = w_ev(e);
    return ge;
  };

  std::unique_ptr<GeneralizedEquation> ge = make_ge(plan[0].N, plan[0].sigma);
  Vec z;
  StageOutcome so;

  // Degenerate-activity check and escape. Runs after every stage, whether it
  // reached its target or stalled: an iterate pinched between opposing path
  // boundaries is recoverable by bumping the states off the pinch. The bump
  // is held in place while the remaining channels are repaired around it;
  // amplitudes that leave the detour infeasible or still pinched are skipped
  // cheaply, and the stage is re-run only from a clean detour. Failed
  // attempts are reverted. Returns true when the final iterate is pinch-free.
  bool escape_noted = false;
  auto escape_loop = [&](const StagePlan& sp) {
    for (int attempt = 0; attempt < cfg.escape_attempts; ++attempt) {
      PrimalDual s = unpack(ge->layout(), z);
      DegenerateActivity da = detect_degenerate_activity(sc, ge->grid(), s, sp.delta);
      if (!da.flagged) return true;
      {
        std::ostringstream os;
        os << "degenerate path activity: rows " << da.row_a << " and " << da.row_b
           << " at tau=" << da.tau << " (cos=" << da.cosine << "); escape attempt "
           << attempt;
        log_line(cfg, 1, os.str());
        if (!escape_noted) {
          bundle.notes.push_back({Severity::Warning, "degenerate_activity", os.str()});
          escape_noted = true;
        }
      }
      Vec z_keep = z;
      StageOutcome so_keep = so;
      apply_escape_bump(sc, ge->grid(), da, attempt, &s);
      s.Lambda.setZero();
      s.Omega.setZero();
      s.Mu.setZero();
      s.nu.setZero();
      Vec zt = pack(ge->layout(), s);
      std::vector<int> pinned;
      for (int q = 0; q < ge->layout().n_x; ++q)
        if (std::abs(da.direction(q)) > 1e-12)
          for (int i = 0; i <= ge->layout().N; ++i) {
            pinned.push_back(ge->layout().col_x(q, i));
            pinned.push_back(ge->layout().col_v(q, i));
          }
      double viol = elastic_repair(*ge, &zt, 250, &pinned);
      if (viol < 1e-6) viol = elastic_repair(*ge, &zt);
      PrimalDual sr = unpack(ge->layout(), zt);
      bool still = detect_degenerate_activity(sc, ge->grid(), sr, sp.delta).flagged;
      {
        std::ostringstream os;
        os << "  escape attempt " << attempt << ": detour violation " << viol
           << (still ? ", still pinched" : ", pinch cleared");
        log_line(cfg, 1, os.str());
      }
      if (viol < 1e-6 && !still) {
        fit_duals(*ge, &zt);
        StageOutcome so2 = run_newton(*ge, &zt, sp.delta, sp.label, cfg, &bundle.log);
        if (so2.reached) {
          PrimalDual s2 = unpack(ge->layout(), zt);
          DegenerateActivity da2 = detect_degenerate_activity(sc, ge->grid(), s2, sp.delta);
          if (!da2.flagged) {
            z = zt;
            so = so2;
            bundle.notes.push_back(
                {Severity::Info, "degenerate_activity_escaped",
                 "left the pinched activity pattern on attempt " + std::to_string(attempt)});
            return true;
          }
        }
      }
      z = z_keep;
      so = so_keep;
    }
    bundle.notes.push_back({Severity::Warning, "degenerate_activity_stuck",
                            "escape attempts exhausted; iterate may sit on a pinch"});
    return false;
  };

  bool started = false;
  int used_priority = 0;
  for (int priority = 1; priority <= 3 && !started; ++priority) {
    PrimalDual s0 = initial_iterate(sc, ge->grid(), priority, cfg.seed);
    z = pack(ge->layout(), s0);
    clip_primal(*ge, &z);
    double viol = elastic_repair(*ge, &z);
    fit_duals(*ge, &z);
    std::ostringstream os;
    os << "start priority " << priority << ": repaired violation " << viol;
    log_line(cfg, 1, os.str());
    so = run_newton(*ge, &z, plan[0].delta, plan[0].label, cfg, &bundle.log);
    log_line(cfg, 1, describe_stage(plan[0], so));
    escape_loop(plan[0]);
    if (so.reached) {
      started = true;
      used_priority = priority;
    }
  }
  if (used_priority > 1) {
    std::ostringstream os;
    os << "started from fallback iterate priority " << used_priority;
    bundle.notes.push_back({Severity::Info, "start_priority", os.str()});
  }

  if (started) {
    for (size_t k = 1; k < plan.size(); ++k) {
      auto ge_next = make_ge(plan[k].N, plan[k].sigma);
      z = carry_iterate(ge->layout(), ge->grid(), z, ge_next->layout(), ge_next->grid());
      ge = std::move(ge_next);
      clip_primal(*ge, &z);
      StageOutcome sk = run_newton(*ge, &z, plan[k].delta, plan[k].label, cfg, &bundle.log);
      log_line(cfg, 1, describe_stage(plan[k], sk));
      if (sk.reached) {
        double rate = prev_resid < kInf && prev_resid > 0 ? sk.final_resid / prev_resid : 0.1;
        theta = std::clamp(rate, 0.01, 0.5);
      }
      prev_resid = sk.final_resid;
      so = sk;
      escape_loop(plan[k]);
    }
  }

  // Assemble in scaled units, then map back.
  const Layout& l = ge->layout();
  PrimalDual s = unpack(l, z);
  bundle.grid = ge->grid();
  bundle.t.resize(l.nn);
  for (int i = 0; i <= l.N; ++i) bundle.t(i) = node_time(ge->grid(), i, s.t0, s.tf);
  bundle.X = s.X;
  bundle.U = s.U;
  bundle.Lambda = s.Lambda;
  bundle.Mu = s.Mu;
  bundle.nu = s.nu;
  bundle.t0 = s.t0;
  bundle.tf = s.tf;
  bundle.p = s.p;
  bundle.H.resize(l.nn);
  for (int i = 0; i <= l.N; ++i)
    bundle.H(i) = hamiltonian(sc, s.Lambda.row(i).transpose(), s.X.row(i).transpose(),
                              s.U.row(i).transpose(), bundle.t(i), s.p);
  bundle.cost = ge->cost(z);
  {
    Vec r = ge->residual(z);
    bundle.residual_inf = r.allFinite() ? r.lpNorm<Eigen::Infinity>() : kInf;
  }
  unscale_solution(map, &bundle);

  // Physical feasibility of the reported trajectories.
  {
    GeneralizedEquation ge_phys(ocp, l.N, ge->sigma());
    PrimalDual ph = s;
    ph.X = bundle.X;
    ph.U = bundle.U;
    ph.Lambda = bundle.Lambda;
    ph.Mu = bundle.Mu;
    ph.nu = bundle.nu;
    ph.t0 = bundle.t0;
    ph.tf = bundle.tf;
    for (int q = 0; q < l.n_x; ++q) ph.V.col(q) = s.V.col(q) / map.gx(q);
    ph.Omega = s.Omega;  // unused by the feasibility measure
    bundle.feasibility_inf = ge_phys.feasibility_inf(pack(ge_phys.layout(), ph));
  }

  if (so.reached && bundle.residual_inf <= cfg.delta_final * (1.0 + 1e-9)) {
    bundle.status = SolveStatus::Converged;
  } else if (bundle.feasibility_inf <= cfg.feasible_tol) {
    bundle.status = SolveStatus::FeasibleOnly;
  } else if (so.nonfinite) {
    bundle.status = SolveStatus::NonFinite;
  } else if (so.singular) {
    bundle.status = SolveStatus::SingularSystem;
  } else {
    bundle.status = SolveStatus::Infeasible;
  }
  {
    std::ostringstream os;
    os << "final status " << to_string(bundle.status) << " |r|=" << bundle.residual_inf
       << " feas=" << bundle.feasibility_inf << " cost=" << bundle.cost;
    log_line(cfg, 1, os.str());
  }
  return bundle;
}

}  // namespace psopt
