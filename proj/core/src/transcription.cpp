#include "psopt/transcription.hpp"

#include <cmath>
#include <stdexcept>

namespace psopt {

Layout Layout::make(const OcpDefinition& ocp, int N) {
  if (N < 2) throw std::runtime_error("grid must have at least 3 nodes");
  Layout l;
  l.n_x = ocp.n_x;
  l.n_u = ocp.n_u;
  l.n_p = ocp.n_p;
  l.n_e = ocp.n_e;
  l.n_h = ocp.n_h;
  l.N = N;
  l.nn = N + 1;

  int c = 0;
  l.off_X = c;
  c += l.n_x * l.nn;
  l.off_U = c;
  c += l.n_u * l.nn;
  l.off_V = c;
  c += l.n_x * l.nn;
  l.off_L = c;
  c += l.n_x * l.nn;
  l.off_W = c;
  c += l.n_x * l.nn;
  l.off_M = c;
  c += l.n_h * l.nn;
  l.off_nu = c;
  c += l.n_e;
  l.off_t0 = c++;
  l.off_tf = c++;
  l.off_p = c;
  c += l.n_p;
  l.size = c;

  int r = 0;
  l.row_lin_x = r;
  r += l.n_x * N;
  l.row_lin_l = r;
  r += l.n_x * N;
  l.row_alg_v = r;
  r += l.n_x * l.nn;
  l.row_alg_w = r;
  r += l.n_x * l.nn;
  l.row_alg_u = r;
  r += l.n_u * l.nn;
  l.row_comp = r;
  r += l.n_h * l.nn;
  l.row_ev = r;
  r += l.n_e;
  l.row_tr0 = r;
  r += l.n_x;
  l.row_trf = r;
  r += l.n_x;
  l.row_time = r;
  r += 2;
  l.row_par = r;
  r += l.n_p;
  l.rows = r;

  if (l.rows != l.size) throw std::logic_error("layout is not square");
  return l;
}

Vec pack(const Layout& lay, const PrimalDual& s) {
  Vec z(lay.size);
  for (int q = 0; q < lay.n_x; ++q) {
    z.segment(lay.off_X + q * lay.nn, lay.nn) = s.X.col(q);
    z.segment(lay.off_V + q * lay.nn, lay.nn) = s.V.col(q);
    z.segment(lay.off_L + q * lay.nn, lay.nn) = s.Lambda.col(q);
    z.segment(lay.off_W + q * lay.nn, lay.nn) = s.Omega.col(q);
  }
  for (int c = 0; c < lay.n_u; ++c) z.segment(lay.off_U + c * lay.nn, lay.nn) = s.U.col(c);
  for (int j = 0; j < lay.n_h; ++j) z.segment(lay.off_M + j * lay.nn, lay.nn) = s.Mu.col(j);
  if (lay.n_e > 0) z.segment(lay.off_nu, lay.n_e) = s.nu;
  z(lay.off_t0) = s.t0;
  z(lay.off_tf) = s.tf;
  if (lay.n_p > 0) z.segment(lay.off_p, lay.n_p) = s.p;
  return z;
}

PrimalDual unpack(const Layout& lay, const Vec& z) {
  PrimalDual s;
  s.X.resize(lay.nn, lay.n_x);
  s.U.resize(lay.nn, lay.n_u);
  s.V.resize(lay.nn, lay.n_x);
  s.Lambda.resize(lay.nn, lay.n_x);
  s.Omega.resize(lay.nn, lay.n_x);
  s.Mu.resize(lay.nn, lay.n_h);
  for (int q = 0; q < lay.n_x; ++q) {
    s.X.col(q) = z.segment(lay.off_X + q * lay.nn, lay.nn);
    s.V.col(q) = z.segment(lay.off_V + q * lay.nn, lay.nn);
    s.Lambda.col(q) = z.segment(lay.off_L + q * lay.nn, lay.nn);
    s.Omega.col(q) = z.segment(lay.off_W + q * lay.nn, lay.nn);
  }
  for (int c = 0; c < lay.n_u; ++c) s.U.col(c) = z.segment(lay.off_U + c * lay.nn, lay.nn);
  for (int j = 0; j < lay.n_h; ++j) s.Mu.col(j) = z.segment(lay.off_M + j * lay.nn, lay.nn);
  s.nu = lay.n_e > 0 ? Vec(z.segment(lay.off_nu, lay.n_e)) : Vec(0);
  s.t0 = z(lay.off_t0);
  s.tf = z(lay.off_tf);
  s.p = lay.n_p > 0 ? Vec(z.segment(lay.off_p, lay.n_p)) : Vec(0);
  return s;
}

double fb_phi(double a, double b, double sigma) {
  return a + b - std::sqrt(a * a + b * b + 2.0 * sigma * sigma);
}

namespace {

// Partials of fb_phi.
void fb_phi_d(double a, double b, double sigma, double* da, double* db) {
  double s = std::sqrt(a * a + b * b + 2.0 * sigma * sigma);
  *da = 1.0 - a / s;
  *db = 1.0 - b / s;
}

}  // namespace

BoundRowEval bound_row(double v, double lo, double hi, double mul, double sigma) {
  BoundRowEval e;
  const bool has_lo = std::isfinite(lo);
  const bool has_hi = std::isfinite(hi);
  if (has_lo && has_hi && lo == hi) {
    e.r = v - lo;
    e.d_v = 1.0;
    e.d_mul = 0.0;
    return e;
  }
  if (!has_lo && !has_hi) {
    e.r = mul;
    e.d_mul = 1.0;
    return e;
  }
  if (has_lo && !has_hi) {
    double da, db;
    e.r = fb_phi(v - lo, -mul, sigma);
    fb_phi_d(v - lo, -mul, sigma, &da, &db);
    e.d_v = da;
    e.d_mul = -db;
    return e;
  }
  if (!has_lo && has_hi) {
    double da, db;
    e.r = fb_phi(hi - v, mul, sigma);
    fb_phi_d(hi - v, mul, sigma, &da, &db);
    e.d_v = -da;
    e.d_mul = db;
    return e;
  }
  // Two-sided: split the multiplier smoothly into its positive and negative
  // parts so one scalar serves both faces.
  double s = std::sqrt(mul * mul + sigma * sigma);
  double mp = 0.5 * (mul + s), mm = 0.5 * (mul - s);
  double dmp = 0.5 * (1.0 + mul / s), dmm = 0.5 * (1.0 - mul / s);
  double d1a, d1b, d2a, d2b;
  double r1 = fb_phi(v - lo, -mm, sigma);
  double r2 = fb_phi(hi - v, mp, sigma);
  fb_phi_d(v - lo, -mm, sigma, &d1a, &d1b);
  fb_phi_d(hi - v, mp, sigma, &d2a, &d2b);
  e.r = r1 - r2;
  e.d_v = d1a + d2a;
  e.d_mul = -d1b * dmm - d2b * dmp;
  return e;
}

Mat covectors_from_multipliers(const Grid& grid, const Mat& Psi) {
  Mat L = Psi;
  for (int i = 0; i < L.rows(); ++i) L.row(i) /= grid.w(i);
  return L;
}

double node_time(const Grid& grid, int i, double t0, double tf) {
  return 0.5 * ((1.0 - grid.tau(i)) * t0 + (1.0 + grid.tau(i)) * tf);
}

GeneralizedEquation::GeneralizedEquation(const OcpDefinition& ocp, int N, double sigma)
    : ocp_(&ocp),
      lay_(Layout::make(ocp, N)),
      pair_(assemble_pair(PairKind::BirkhoffLeft, N)),
      sigma_(sigma),
      row_w_(Vec::Ones(lay_.rows)) {}

namespace {

// Second derivatives of Hbar by central differences over the analytic (or
// FD) first-derivative gradient. Rows are the gradient components
// [dx (n_x), du (n_u), dp (n_p)]; columns the perturbed inputs
// [x (n_x), u (n_u), t (1), p (n_p)].
Mat hbar_hessian_fd(const OcpDefinition& ocp, const Vec& lam, const Vec& mu, Vec x, Vec u,
                    double t, Vec p) {
  const int nx = ocp.n_x, nu = ocp.n_u, np = ocp.n_p;
  const int nrow = nx + nu + np, ncol = nx + nu + 1 + np;
  Mat H(nrow, ncol);
  auto grad = [&]() {
    HbarGradient g = hbar_gradient(ocp, lam, mu, x, u, t, p);
    Vec out(nrow);
    out.head(nx) = g.dx;
    out.segment(nx, nu) = g.du;
    if (np > 0) out.tail(np) = g.dp;
    return out;
  };
  auto fd_col = [&](double& v, int col) {
    double save = v, h = std::max(1e-5, 1e-5 * std::abs(save));
    v = save + h;
    Vec gp = grad();
    v = save - h;
    Vec gm = grad();
    v = save;
    H.col(col) = (gp - gm) / (2.0 * h);
  };
  int c = 0;
  for (int q = 0; q < nx; ++q) fd_col(x(q), c++);
  for (int q = 0; q < nu; ++q) fd_col(u(q), c++);
  fd_col(t, c++);
  for (int q = 0; q < np; ++q) fd_col(p(q), c++);
  return H;
}

// Same scheme for Ebar. Rows [dx0, dxf, dt0, dtf, dp], columns
// [x0, xf, t0, tf, p].
Mat ebar_hessian_fd(const OcpDefinition& ocp, const Vec& nu, Vec x0, Vec xf, double t0,
                    double tf, Vec p) {
  const int nx = ocp.n_x, np = ocp.n_p;
  const int n = 2 * nx + 2 + np;
  Mat H(n, n);
  auto grad = [&]() {
    EbarGradient g = ebar_gradient(ocp, nu, x0, xf, t0, tf, p);
    Vec out(n);
    out.head(nx) = g.dx0;
    out.segment(nx, nx) = g.dxf;
    out(2 * nx) = g.dt0;
    out(2 * nx + 1) = g.dtf;
    if (np > 0) out.tail(np) = g.dp;
    return out;
  };
  auto fd_col = [&](double& v, int col) {
    double save = v, h = std::max(1e-5, 1e-5 * std::abs(save));
    v = save + h;
    Vec gp = grad();
    v = save - h;
    Vec gm = grad();
    v = save;
    H.col(col) = (gp - gm) / (2.0 * h);
  };
  int c = 0;
  for (int q = 0; q < nx; ++q) fd_col(x0(q), c++);
  for (int q = 0; q < nx; ++q) fd_col(xf(q), c++);
  fd_col(t0, c++);
  fd_col(tf, c++);
  for (int q = 0; q < np; ++q) fd_col(p(q), c++);
  return H;
}

bool is_fixed(double lo, double hi) { return lo == hi; }

double interval_dist(double v, double lo, double hi) {
  if (v < lo) return lo - v;
  if (v > hi) return v - hi;
  return 0.0;
}

}  // namespace

Vec GeneralizedEquation::residual(const Vec& z) const {
  const Layout& l = lay_;
  const OcpDefinition& ocp = *ocp_;
  PrimalDual s = unpack(l, z);
  const int N = l.N;
  const Mat& B = pair_.A_v;
  const Mat& Bt = pair_.As_omega;
  const double gp = 0.5 * (s.tf - s.t0);

  Vec r = Vec::Zero(l.rows);

  for (int q = 0; q < l.n_x; ++q) {
    Vec bx = B * s.V.col(q);
    Vec bl = Bt * s.Omega.col(q);
    for (int i = 1; i <= N; ++i)
      r(l.row_lin_x + q * N + (i - 1)) = s.X(0, q) + bx(i) - s.X(i, q);
    for (int i = 0; i < N; ++i)
      r(l.row_lin_l + q * N + i) = s.Lambda(N, q) + bl(i) - s.Lambda(i, q);
  }

  double H_first = 0.0, H_last = 0.0;
  Vec par = Vec::Zero(l.n_p);
  for (int i = 0; i <= N; ++i) {
    double t = node_time(pair_.grid, i, s.t0, s.tf);
    Vec x = s.X.row(i).transpose();
    Vec u = s.U.row(i).transpose();
    Vec lam = s.Lambda.row(i).transpose();
    Vec mu = s.Mu.row(i).transpose();
    PathEval pe = eval_functions(ocp, x, u, t, s.p);
    HbarGradient g = hbar_gradient(ocp, lam, mu, x, u, t, s.p);
    for (int q = 0; q < l.n_x; ++q) {
      r(l.row_alg_v + q * l.nn + i) = gp * pe.f(q) - s.V(i, q);
      r(l.row_alg_w + q * l.nn + i) = gp * g.dx(q) - s.Omega(i, q);
    }
    for (int c = 0; c < l.n_u; ++c) r(l.row_alg_u + c * l.nn + i) = g.du(c);
    for (int j = 0; j < l.n_h; ++j)
      r(l.row_comp + j * l.nn + i) =
          bound_row(pe.h(j), ocp.h_lo(j), ocp.h_hi(j), s.Mu(i, j), sigma_).r;
    if (l.n_p > 0) par += pair_.grid.w(i) * gp * g.dp;
    if (i == 0) H_first = pe.F + lam.dot(pe.f);
    if (i == N) H_last = pe.F + lam.dot(pe.f);
  }

  Vec x0 = s.X.row(0).transpose(), xf = s.X.row(N).transpose();
  EndpointEval ee = eval_endpoint(ocp, x0, xf, s.t0, s.tf, s.p);
  EbarGradient eg = ebar_gradient(ocp, s.nu, x0, xf, s.t0, s.tf, s.p);

  for (int k = 0; k < l.n_e; ++k)
    r(l.row_ev + k) = bound_row(ee.e(k), ocp.e_lo(k), ocp.e_hi(k), s.nu(k), sigma_).r;
  for (int q = 0; q < l.n_x; ++q) {
    r(l.row_tr0 + q) = -s.Lambda(0, q) - eg.dx0(q);
    r(l.row_trf + q) = s.Lambda(N, q) - eg.dxf(q);
  }
  r(l.row_time) = is_fixed(ocp.t0_lo, ocp.t0_hi) ? s.t0 - ocp.t0_lo : H_first - eg.dt0;
  r(l.row_time + 1) = is_fixed(ocp.tf_lo, ocp.tf_hi) ? s.tf - ocp.tf_lo : -H_last - eg.dtf;
  for (int m = 0; m < l.n_p; ++m) r(l.row_par + m) = eg.dp(m) + par(m);

  return row_w_.cwiseProduct(r);
}

Mat GeneralizedEquation::jacobian(const Vec& z) const {
  const Layout& l = lay_;
  const OcpDefinition& ocp = *ocp_;
  PrimalDual s = unpack(l, z);
  const int N = l.N;
  const int nx = l.n_x, nu = l.n_u, np = l.n_p, ne = l.n_e, nh = l.n_h;
  const Mat& B = pair_.A_v;
  const Mat& Bt = pair_.As_omega;
  const double gp = 0.5 * (s.tf - s.t0);

  Mat J = Mat::Zero(l.rows, l.size);

  for (int q = 0; q < nx; ++q) {
    for (int i = 1; i <= N; ++i) {
      int r = l.row_lin_x + q * N + (i - 1);
      J(r, l.col_x(q, 0)) += 1.0;
      J(r, l.col_x(q, i)) -= 1.0;
      for (int j = 0; j <= N; ++j) J(r, l.col_v(q, j)) += B(i, j);
    }
    for (int i = 0; i < N; ++i) {
      int r = l.row_lin_l + q * N + i;
      J(r, l.col_lam(q, N)) += 1.0;
      J(r, l.col_lam(q, i)) -= 1.0;
      for (int j = 0; j <= N; ++j) J(r, l.col_omega(q, j)) += Bt(i, j);
    }
  }

  // Plain-H first derivatives at the boundary nodes, for the time rows.
  Vec Hx0, Hu0, Hp0, f_first, HxN, HuN, HpN, f_last;
  double Ht0 = 0.0, HtN = 0.0;

  for (int i = 0; i <= N; ++i) {
    const double a_i = 0.5 * (1.0 - pair_.grid.tau(i));
    const double b_i = 0.5 * (1.0 + pair_.grid.tau(i));
    const double wq = pair_.grid.w(i);
    double t = node_time(pair_.grid, i, s.t0, s.tf);
    Vec x = s.X.row(i).transpose();
    Vec u = s.U.row(i).transpose();
    Vec lam = s.Lambda.row(i).transpose();
    Vec mu = s.Mu.row(i).transpose();

    PathEval pe = eval_functions(ocp, x, u, t, s.p);
    Mat Fx, Fu, Fp, fx, fu, fp, hx, hu, hp;
    Vec Ft, ft, ht;
    ocp.running_cost->jacobians(x, u, t, s.p, &Fx, &Fu, &Ft, &Fp);
    ocp.dynamics->jacobians(x, u, t, s.p, &fx, &fu, &ft, &fp);
    if (nh > 0) ocp.path->jacobians(x, u, t, s.p, &hx, &hu, &ht, &hp);
    HbarGradient g = hbar_gradient(ocp, lam, mu, x, u, t, s.p);
    Mat Hh = hbar_hessian_fd(ocp, lam, mu, x, u, t, s.p);

    if (i == 0 || i == N) {
      Vec hxv = Fx.row(0).transpose() + fx.transpose() * lam;
      Vec huv = Fu.row(0).transpose() + fu.transpose() * lam;
      Vec hpv = Fp.row(0).transpose() + fp.transpose() * lam;
      double htv = Ft(0) + ft.dot(lam);
      if (i == 0) {
        Hx0 = hxv;
        Hu0 = huv;
        Hp0 = hpv;
        Ht0 = htv;
        f_first = pe.f;
      }
      if (i == N) {
        HxN = hxv;
        HuN = huv;
        HpN = hpv;
        HtN = htv;
        f_last = pe.f;
      }
    }

    for (int q = 0; q < nx; ++q) {
      int rv = l.row_alg_v + q * l.nn + i;
      int rw = l.row_alg_w + q * l.nn + i;
      for (int q2 = 0; q2 < nx; ++q2) {
        J(rv, l.col_x(q2, i)) += gp * fx(q, q2);
        J(rw, l.col_x(q2, i)) += gp * Hh(q, q2);
        J(rw, l.col_lam(q2, i)) += gp * fx(q2, q);
      }
      for (int c = 0; c < nu; ++c) {
        J(rv, l.col_u(c, i)) += gp * fu(q, c);
        J(rw, l.col_u(c, i)) += gp * Hh(q, nx + c);
      }
      for (int j = 0; j < nh; ++j) J(rw, l.col_mu(j, i)) += gp * hx(j, q);
      J(rv, l.col_v(q, i)) -= 1.0;
      J(rw, l.col_omega(q, i)) -= 1.0;
      J(rv, l.off_t0) += -0.5 * pe.f(q) + gp * ft(q) * a_i;
      J(rv, l.off_tf) += 0.5 * pe.f(q) + gp * ft(q) * b_i;
      J(rw, l.off_t0) += -0.5 * g.dx(q) + gp * Hh(q, nx + nu) * a_i;
      J(rw, l.off_tf) += 0.5 * g.dx(q) + gp * Hh(q, nx + nu) * b_i;
      for (int m = 0; m < np; ++m) {
        J(rv, l.off_p + m) += gp * fp(q, m);
        J(rw, l.off_p + m) += gp * Hh(q, nx + nu + 1 + m);
      }
    }

    for (int c = 0; c < nu; ++c) {
      int ru = l.row_alg_u + c * l.nn + i;
      for (int q2 = 0; q2 < nx; ++q2) {
        J(ru, l.col_x(q2, i)) += Hh(nx + c, q2);
        J(ru, l.col_lam(q2, i)) += fu(q2, c);
      }
      for (int c2 = 0; c2 < nu; ++c2) J(ru, l.col_u(c2, i)) += Hh(nx + c, nx + c2);
      for (int j = 0; j < nh; ++j) J(ru, l.col_mu(j, i)) += hu(j, c);
      J(ru, l.off_t0) += Hh(nx + c, nx + nu) * a_i;
      J(ru, l.off_tf) += Hh(nx + c, nx + nu) * b_i;
      for (int m = 0; m < np; ++m) J(ru, l.off_p + m) += Hh(nx + c, nx + nu + 1 + m);
    }

    for (int j = 0; j < nh; ++j) {
      int rc = l.row_comp + j * l.nn + i;
      BoundRowEval be = bound_row(pe.h(j), ocp.h_lo(j), ocp.h_hi(j), s.Mu(i, j), sigma_);
      for (int q2 = 0; q2 < nx; ++q2) J(rc, l.col_x(q2, i)) += be.d_v * hx(j, q2);
      for (int c = 0; c < nu; ++c) J(rc, l.col_u(c, i)) += be.d_v * hu(j, c);
      J(rc, l.col_mu(j, i)) += be.d_mul;
      J(rc, l.off_t0) += be.d_v * ht(j) * a_i;
      J(rc, l.off_tf) += be.d_v * ht(j) * b_i;
      for (int m = 0; m < np; ++m) J(rc, l.off_p + m) += be.d_v * hp(j, m);
    }

    for (int m = 0; m < np; ++m) {
      int rp = l.row_par + m;
      for (int q2 = 0; q2 < nx; ++q2) {
        J(rp, l.col_x(q2, i)) += wq * gp * Hh(nx + nu + m, q2);
        J(rp, l.col_lam(q2, i)) += wq * gp * fp(q2, m);
      }
      for (int c = 0; c < nu; ++c) J(rp, l.col_u(c, i)) += wq * gp * Hh(nx + nu + m, nx + c);
      for (int j = 0; j < nh; ++j) J(rp, l.col_mu(j, i)) += wq * gp * hp(j, m);
      J(rp, l.off_t0) += wq * (-0.5 * g.dp(m) + gp * Hh(nx + nu + m, nx + nu) * a_i);
      J(rp, l.off_tf) += wq * (0.5 * g.dp(m) + gp * Hh(nx + nu + m, nx + nu) * b_i);
      for (int m2 = 0; m2 < np; ++m2)
        J(rp, l.off_p + m2) += wq * gp * Hh(nx + nu + m, nx + nu + 1 + m2);
    }
  }

  Vec x0 = s.X.row(0).transpose(), xf = s.X.row(N).transpose();
  EndpointEval ee = eval_endpoint(ocp, x0, xf, s.t0, s.tf, s.p);
  Mat EH = ebar_hessian_fd(ocp, s.nu, x0, xf, s.t0, s.tf, s.p);
  Mat ex0, exf, ep;
  Vec et0, etf;
  if (ne > 0) ocp.events->jacobians(x0, xf, s.t0, s.tf, s.p, &ex0, &exf, &et0, &etf, &ep);

  // Columns of one endpoint-Hessian row, mapped onto the decision vector.
  auto add_eh_row = [&](int row, int eh_row, double sign) {
    for (int q = 0; q < nx; ++q) {
      J(row, l.col_x(q, 0)) += sign * EH(eh_row, q);
      J(row, l.col_x(q, N)) += sign * EH(eh_row, nx + q);
    }
    J(row, l.off_t0) += sign * EH(eh_row, 2 * nx);
    J(row, l.off_tf) += sign * EH(eh_row, 2 * nx + 1);
    for (int m = 0; m < np; ++m) J(row, l.off_p + m) += sign * EH(eh_row, 2 * nx + 2 + m);
  };

  for (int k = 0; k < ne; ++k) {
    int r = l.row_ev + k;
    BoundRowEval be = bound_row(ee.e(k), ocp.e_lo(k), ocp.e_hi(k), s.nu(k), sigma_);
    for (int q = 0; q < nx; ++q) {
      J(r, l.col_x(q, 0)) += be.d_v * ex0(k, q);
      J(r, l.col_x(q, N)) += be.d_v * exf(k, q);
    }
    J(r, l.off_t0) += be.d_v * et0(k);
    J(r, l.off_tf) += be.d_v * etf(k);
    for (int m = 0; m < np; ++m) J(r, l.off_p + m) += be.d_v * ep(k, m);
    J(r, l.col_nu(k)) += be.d_mul;
  }

  for (int q = 0; q < nx; ++q) {
    int r0 = l.row_tr0 + q;
    J(r0, l.col_lam(q, 0)) -= 1.0;
    add_eh_row(r0, q, -1.0);
    for (int k = 0; k < ne; ++k) J(r0, l.col_nu(k)) -= ex0(k, q);

    int rf = l.row_trf + q;
    J(rf, l.col_lam(q, N)) += 1.0;
    add_eh_row(rf, nx + q, -1.0);
    for (int k = 0; k < ne; ++k) J(rf, l.col_nu(k)) -= exf(k, q);
  }

  if (is_fixed(ocp.t0_lo, ocp.t0_hi)) {
    J(l.row_time, l.off_t0) = 1.0;
  } else {
    int r = l.row_time;
    for (int q = 0; q < nx; ++q) J(r, l.col_x(q, 0)) += Hx0(q);
    for (int c = 0; c < nu; ++c) J(r, l.col_u(c, 0)) += Hu0(c);
    for (int q = 0; q < nx; ++q) J(r, l.col_lam(q, 0)) += f_first(q);
    J(r, l.off_t0) += Ht0;  // node-0 time moves one-for-one with t0
    for (int m = 0; m < np; ++m) J(r, l.off_p + m) += Hp0(m);
    add_eh_row(r, 2 * nx, -1.0);
    for (int k = 0; k < ne; ++k) J(r, l.col_nu(k)) -= et0(k);
  }
  if (is_fixed(ocp.tf_lo, ocp.tf_hi)) {
    J(l.row_time + 1, l.off_tf) = 1.0;
  } else {
    int r = l.row_time + 1;
    for (int q = 0; q < nx; ++q) J(r, l.col_x(q, N)) -= HxN(q);
    for (int c = 0; c < nu; ++c) J(r, l.col_u(c, N)) -= HuN(c);
    for (int q = 0; q < nx; ++q) J(r, l.col_lam(q, N)) -= f_last(q);
    J(r, l.off_tf) -= HtN;
    for (int m = 0; m < np; ++m) J(r, l.off_p + m) -= HpN(m);
    add_eh_row(r, 2 * nx + 1, -1.0);
    for (int k = 0; k < ne; ++k) J(r, l.col_nu(k)) -= etf(k);
  }

  for (int m = 0; m < np; ++m) {
    int r = l.row_par + m;
    add_eh_row(r, 2 * nx + 2 + m, 1.0);
    for (int k = 0; k < ne; ++k) J(r, l.col_nu(k)) += ep(k, m);
  }

  return row_w_.asDiagonal() * J;
}

double GeneralizedEquation::cost(const Vec& z) const {
  const Layout& l = lay_;
  PrimalDual s = unpack(l, z);
  const double gp = 0.5 * (s.tf - s.t0);
  double acc = 0.0;
  for (int i = 0; i <= l.N; ++i) {
    double t = node_time(pair_.grid, i, s.t0, s.tf);
    PathEval pe =
        eval_functions(*ocp_, s.X.row(i).transpose(), s.U.row(i).transpose(), t, s.p);
    acc += pair_.grid.w(i) * gp * pe.F;
  }
  EndpointEval ee = eval_endpoint(*ocp_, s.X.row(0).transpose(),
                                  s.X.row(l.N).transpose(), s.t0, s.tf, s.p);
  return acc + ee.E;
}

double GeneralizedEquation::feasibility_inf(const Vec& z) const {
  const Layout& l = lay_;
  const OcpDefinition& ocp = *ocp_;
  PrimalDual s = unpack(l, z);
  const int N = l.N;
  const Mat& B = pair_.A_v;
  const double gp = 0.5 * (s.tf - s.t0);

  double worst = 0.0;
  for (int q = 0; q < l.n_x; ++q) {
    Vec bx = B * s.V.col(q);
    for (int i = 1; i <= N; ++i)
      worst = std::max(worst, std::abs(s.X(0, q) + bx(i) - s.X(i, q)));
  }
  for (int i = 0; i <= N; ++i) {
    double t = node_time(pair_.grid, i, s.t0, s.tf);
    PathEval pe =
        eval_functions(ocp, s.X.row(i).transpose(), s.U.row(i).transpose(), t, s.p);
    for (int q = 0; q < l.n_x; ++q)
      worst = std::max(worst, std::abs(gp * pe.f(q) - s.V(i, q)));
    for (int j = 0; j < l.n_h; ++j)
      worst = std::max(worst, interval_dist(pe.h(j), ocp.h_lo(j), ocp.h_hi(j)));
  }
  EndpointEval ee = eval_endpoint(ocp, s.X.row(0).transpose(), s.X.row(N).transpose(),
                                  s.t0, s.tf, s.p);
  for (int k = 0; k < l.n_e; ++k)
    worst = std::max(worst, interval_dist(ee.e(k), ocp.e_lo(k), ocp.e_hi(k)));
  worst = std::max(worst, interval_dist(s.t0, ocp.t0_lo, ocp.t0_hi));
  worst = std::max(worst, interval_dist(s.tf, ocp.tf_lo, ocp.tf_hi));
  worst = std::max(worst, std::max(0.0, s.t0 - s.tf));
  return worst;
}

}  // namespace psopt
