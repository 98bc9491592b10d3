#include "psopt/hamvet.hpp"

#include <cmath>

namespace psopt {

double hamiltonian(const OcpDefinition& ocp, const Vec& lambda, const Vec& x,
                   const Vec& u, double t, const Vec& p) {
  PathEval pe = eval_functions(ocp, x, u, t, p);
  return pe.F + lambda.dot(pe.f);
}

double lagrangian_hamiltonian(const OcpDefinition& ocp, const Vec& lambda, const Vec& mu,
                              const Vec& x, const Vec& u, double t, const Vec& p) {
  PathEval pe = eval_functions(ocp, x, u, t, p);
  double v = pe.F + lambda.dot(pe.f);
  if (ocp.n_h > 0) v += mu.dot(pe.h);
  return v;
}

double endpoint_lagrangian(const OcpDefinition& ocp, const Vec& nu, const Vec& x0,
                           const Vec& xf, double t0, double tf, const Vec& p) {
  EndpointEval ee = eval_endpoint(ocp, x0, xf, t0, tf, p);
  double v = ee.E;
  if (ocp.n_e > 0) v += nu.dot(ee.e);
  return v;
}

HbarGradient hbar_gradient(const OcpDefinition& ocp, const Vec& lambda, const Vec& mu,
                           const Vec& x, const Vec& u, double t, const Vec& p) {
  Mat Fx, Fu, Fp, fx, fu, fp, hx, hu, hp;
  Vec Ft, ft, ht;
  ocp.running_cost->jacobians(x, u, t, p, &Fx, &Fu, &Ft, &Fp);
  ocp.dynamics->jacobians(x, u, t, p, &fx, &fu, &ft, &fp);
  HbarGradient g;
  g.dx = Fx.row(0).transpose() + fx.transpose() * lambda;
  g.du = Fu.row(0).transpose() + fu.transpose() * lambda;
  g.dt = Ft(0) + ft.dot(lambda);
  g.dp = Fp.row(0).transpose() + fp.transpose() * lambda;
  if (ocp.n_h > 0) {
    ocp.path->jacobians(x, u, t, p, &hx, &hu, &ht, &hp);
    g.dx += hx.transpose() * mu;
    g.du += hu.transpose() * mu;
    g.dt += ht.dot(mu);
    g.dp += hp.transpose() * mu;
  }
  return g;
}

HbarGradient h_gradient(const OcpDefinition& ocp, const Vec& lambda, const Vec& x,
                        const Vec& u, double t, const Vec& p) {
  return hbar_gradient(ocp, lambda, Vec::Zero(ocp.n_h), x, u, t, p);
}

EbarGradient ebar_gradient(const OcpDefinition& ocp, const Vec& nu, const Vec& x0,
                           const Vec& xf, double t0, double tf, const Vec& p) {
  Mat Ex0, Exf, Ep, ex0, exf, ep;
  Vec Et0, Etf, et0, etf;
  ocp.endpoint_cost->jacobians(x0, xf, t0, tf, p, &Ex0, &Exf, &Et0, &Etf, &Ep);
  EbarGradient g;
  g.dx0 = Ex0.row(0).transpose();
  g.dxf = Exf.row(0).transpose();
  g.dt0 = Et0(0);
  g.dtf = Etf(0);
  g.dp = Ep.row(0).transpose();
  if (ocp.n_e > 0) {
    ocp.events->jacobians(x0, xf, t0, tf, p, &ex0, &exf, &et0, &etf, &ep);
    g.dx0 += ex0.transpose() * nu;
    g.dxf += exf.transpose() * nu;
    g.dt0 += et0.dot(nu);
    g.dtf += etf.dot(nu);
    g.dp += ep.transpose() * nu;
  }
  return g;
}

Vec hmc_residual(const OcpDefinition& ocp, const Vec& lambda, const Vec& mu, const Vec& x,
                 const Vec& u, double t, const Vec& p) {
  return hbar_gradient(ocp, lambda, mu, x, u, t, p).du;
}

std::vector<std::pair<int, int>> pure_control_rows(const OcpDefinition& ocp, const Vec& x,
                                                   const Vec& u, double t, const Vec& p) {
  std::vector<std::pair<int, int>> rows;  // (path row, control index)
  if (ocp.n_h == 0) return rows;
  Mat hx, hu;
  ocp.path->jacobians(x, u, t, p, &hx, &hu, nullptr, nullptr);
  for (int j = 0; j < ocp.n_h; ++j) {
    if (hx.row(j).cwiseAbs().maxCoeff() > 1e-9) continue;
    int hits = 0, which = -1;
    for (int c = 0; c < ocp.n_u; ++c) {
      if (std::abs(hu(j, c)) > 1e-9) {
        ++hits;
        which = c;
      }
    }
    if (hits == 1 && std::abs(hu(j, which) - 1.0) < 1e-9) rows.push_back({j, which});
  }
  return rows;
}

PointwiseHmcResult pointwise_hmc_check(const OcpDefinition& ocp, const Grid& grid,
                                       const Mat& X, const Mat& U, const Mat& Lambda,
                                       double t0, double tf, const Vec& p,
                                       int lattice_points, double tol) {
  PointwiseHmcResult res;
  if (ocp.n_u == 0) {
    res.note = "no controls; nothing to check";
    return res;
  }
  if (ocp.n_u > 2) {
    res.note = "skipped: lattice check only supported for n_u <= 2";
    return res;
  }
  res.checked = true;

  // Admissible control window per channel: search box tightened by any pure
  // control-bound path rows.
  Vec lo = ocp.box.u_lo, hi = ocp.box.u_hi;
  {
    Vec xm = X.row(0).transpose(), um = U.row(0).transpose();
    for (auto [j, c] : pure_control_rows(ocp, xm, um, t0, p)) {
      lo(c) = std::max(lo(c), ocp.h_lo(j));
      hi(c) = std::min(hi(c), ocp.h_hi(j));
    }
  }

  const int n = grid.N + 1;
  double h_scale = 1.0;
  for (int i = 0; i < n; ++i) {
    double t = t0 + (tf - t0) * (grid.tau(i) + 1.0) / 2.0;
    Vec x = X.row(i).transpose();
    Vec lam = Lambda.row(i).transpose();
    Vec u_node = U.row(i).transpose();
    double h_node = hamiltonian(ocp, lam, x, u_node, t, p);
    h_scale = std::max(h_scale, std::abs(h_node));

    double h_min = h_node;
    Vec u = u_node;
    auto probe = [&](const Vec& uc) {
      double v = hamiltonian(ocp, lam, x, uc, t, p);
      if (v < h_min) h_min = v;
    };
    if (ocp.n_u == 1) {
      for (int a = 0; a < lattice_points; ++a) {
        u(0) = lo(0) + (hi(0) - lo(0)) * a / (lattice_points - 1.0);
        probe(u);
      }
    } else {
      for (int a = 0; a < lattice_points; ++a) {
        u(0) = lo(0) + (hi(0) - lo(0)) * a / (lattice_points - 1.0);
        for (int b = 0; b < lattice_points; ++b) {
          u(1) = lo(1) + (hi(1) - lo(1)) * b / (lattice_points - 1.0);
          probe(u);
        }
      }
    }
    double gap = h_node - h_min;
    if (gap > res.worst_gap) {
      res.worst_gap = gap;
      res.worst_node = i;
    }
  }
  res.ok = res.worst_gap <= tol * h_scale;
  return res;
}

Vec hamiltonian_evolution_residual(const OcpDefinition& ocp, const Grid& grid,
                                   const Mat& X, const Mat& U, const Mat& Lambda,
                                   const Mat& Mu, double t0, double tf, const Vec& p) {
  const int n = grid.N + 1;
  const double gammap = 0.5 * (tf - t0);
  Vec Hn(n), dHdt(n);
  for (int i = 0; i < n; ++i) {
    double t = t0 + (tf - t0) * (grid.tau(i) + 1.0) / 2.0;
    Vec x = X.row(i).transpose(), u = U.row(i).transpose();
    Vec lam = Lambda.row(i).transpose();
    Vec mu = ocp.n_h > 0 ? Vec(Mu.row(i).transpose()) : Vec();
    Hn(i) = hamiltonian(ocp, lam, x, u, t, p);
    dHdt(i) = hbar_gradient(ocp, lam, mu, x, u, t, p).dt;
  }
  Mat D = lagrange_diff_matrix(grid);
  return D * Hn - gammap * dHdt;
}

}  // namespace psopt
