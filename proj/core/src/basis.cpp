#include "psopt/basis.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace psopt {

namespace {

// Value and first derivative of P_N by the three-term recurrence.
void legendre_pair(int N, double tau, double& p, double& dp) {
  double p0 = 1.0, p1 = tau;
  if (N == 0) {
    p = p0;
    dp = 0.0;
    return;
  }
  for (int k = 2; k <= N; ++k) {
    double p2 = ((2.0 * k - 1.0) * tau * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  p = p1;
  // (1 - tau^2) P_N' = N (P_{N-1} - tau P_N)
  if (std::abs(tau) == 1.0) {
    dp = std::pow(tau, N - 1.0) * N * (N + 1.0) / 2.0;
  } else {
    dp = N * (p0 - tau * p1) / (1.0 - tau * tau);
  }
}

}  // namespace

double legendre(int N, double tau) {
  double p, dp;
  legendre_pair(N, tau, p, dp);
  return p;
}

double legendre_deriv(int N, double tau) {
  double p, dp;
  legendre_pair(N, tau, p, dp);
  return dp;
}

Grid lgl_grid(int N) {
  if (N < 1) throw std::invalid_argument("lgl_grid requires N >= 1");
  Grid g;
  g.N = N;
  g.tau.resize(N + 1);
  g.w.resize(N + 1);
  g.tau(0) = -1.0;
  g.tau(N) = 1.0;
  // Interior nodes: roots of P_N', Newton from Chebyshev-Lobatto points,
  // using the Legendre ODE for the second derivative:
  // (1 - tau^2) P'' = 2 tau P' - N(N+1) P.
  for (int i = 1; i < N; ++i) {
    double tau = -std::cos(M_PI * i / N);
    for (int it = 0; it < 50; ++it) {
      double p, dp;
      legendre_pair(N, tau, p, dp);
      double ddp = (2.0 * tau * dp - N * (N + 1.0) * p) / (1.0 - tau * tau);
      double step = dp / ddp;
      tau -= step;
      if (std::abs(step) < 1e-15) break;
    }
    g.tau(i) = tau;
  }
  // Enforce exact symmetry of the node set.
  for (int i = 0; i <= N / 2; ++i) {
    double s = 0.5 * (g.tau(i) - g.tau(N - i));
    g.tau(i) = s;
    g.tau(N - i) = -s;
  }
  if (N % 2 == 0) g.tau(N / 2) = 0.0;
  const double c = 2.0 / (N * (N + 1.0));
  for (int i = 0; i <= N; ++i) {
    double p = legendre(N, g.tau(i));
    g.w(i) = c / (p * p);
  }
  return g;
}

Vec barycentric_weights(const Vec& tau) {
  const int n = static_cast<int>(tau.size());
  Vec b = Vec::Ones(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j != i) b(i) /= (tau(i) - tau(j));
    }
  }
  // Normalize to limit overflow at large n.
  b /= b.cwiseAbs().maxCoeff();
  return b;
}

Mat lagrange_diff_matrix(const Grid& g) {
  const int n = g.N + 1;
  Vec b = barycentric_weights(g.tau);
  Mat D(n, n);
  for (int i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      D(i, j) = (b(j) / b(i)) / (g.tau(i) - g.tau(j));
      row_sum += D(i, j);
    }
    D(i, i) = -row_sum;  // rows of D annihilate constants
  }
  return D;
}

Mat birkhoff_matrix(const Grid& g) {
  const int N = g.N;
  const int n = N + 1;
  // Exact Legendre expansion of each Lagrange cardinal function:
  //   ell_j = sum_k c_jk P_k,  c_jk = w_j P_k(tau_j) / gamma_k
  // with discrete norms gamma_k = 2/(2k+1) for k < N and 2/N for k = N.
  // Antiderivatives of P_k vanish at -1:
  //   I_0 = tau + 1,  I_k = (P_{k+1} - P_{k-1}) / (2k+1).
  Mat P(n, n);  // P(k, i) = P_k(tau_i)
  for (int i = 0; i < n; ++i) {
    P(0, i) = 1.0;
    if (n > 1) P(1, i) = g.tau(i);
    for (int k = 2; k <= N; ++k)
      P(k, i) = ((2.0 * k - 1.0) * g.tau(i) * P(k - 1, i) - (k - 1.0) * P(k - 2, i)) / k;
  }
  Mat I(n, n);  // I(k, i) = antiderivative of P_k at tau_i
  for (int i = 0; i < n; ++i) {
    double pN1 = ((2.0 * N + 1.0) * g.tau(i) * P(N, i) - N * P(N - 1, i)) / (N + 1.0);
    I(0, i) = g.tau(i) + 1.0;
    for (int k = 1; k < N; ++k) I(k, i) = (P(k + 1, i) - P(k - 1, i)) / (2.0 * k + 1.0);
    I(N, i) = (pN1 - P(N - 1, i)) / (2.0 * N + 1.0);
  }
  Mat B(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int k = 0; k <= N; ++k) {
        double gamma = (k < N) ? 2.0 / (2.0 * k + 1.0) : 2.0 / N;
        acc += (g.w(j) * P(k, j) / gamma) * I(k, i);
      }
      B(i, j) = acc;
    }
  }
  B.row(0).setZero();  // exact at the anchor
  return B;
}

DiscretizationPair assemble_pair(PairKind kind, int N) {
  DiscretizationPair pair;
  pair.kind = kind;
  pair.grid = lgl_grid(N);
  const int n = N + 1;
  const Vec& w = pair.grid.w;
  if (kind == PairKind::BirkhoffLeft) {
    Mat B = birkhoff_matrix(pair.grid);
    pair.A_x = -Mat::Identity(n, n);
    pair.A_v = B;
    pair.As_lambda = -Mat::Identity(n, n);
    pair.As_omega = w.cwiseInverse().asDiagonal() * B.transpose() * w.asDiagonal();
  } else {
    Mat D = lagrange_diff_matrix(pair.grid);
    pair.A_x = -D;
    pair.A_v = Mat::Identity(n, n);
    pair.As_lambda = -(w.cwiseInverse().asDiagonal() * D.transpose() * w.asDiagonal());
    pair.As_omega = Mat::Identity(n, n);
  }
  return pair;
}

double condition_number(const Mat& m) {
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  double smin = s(s.size() - 1);
  if (smin <= 0.0) return kInf;
  return s(0) / smin;
}

Mat pair_system_matrix(PairKind kind, int N) {
  Grid g = lgl_grid(N);
  const int n = N + 1;
  if (kind == PairKind::LagrangeD) {
    Mat K = lagrange_diff_matrix(g);
    K.row(0).setZero();
    K(0, 0) = 1.0;  // anchor row replaces the singular direction
    return K;
  }
  Mat K = Mat::Zero(2 * n, 2 * n);
  K.topLeftCorner(n, n) = -Mat::Identity(n, n);
  K.topRightCorner(n, n) = birkhoff_matrix(g);
  K.bottomRightCorner(n, n) = Mat::Identity(n, n);
  return K;
}

CondGrowthStudy cond_growth_study(PairKind kind, const std::vector<int>& Ns) {
  CondGrowthStudy study;
  study.kind = kind;
  for (int N : Ns)
    study.rows.push_back({N, condition_number(pair_system_matrix(kind, N))});
  study.growth_ratio =
      study.rows.empty() ? 0.0 : study.rows.back().cond / study.rows.front().cond;
  return study;
}

double barycentric_eval(const Vec& tau, const Vec& bw, const Vec& f, double tq) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < tau.size(); ++i) {
    double d = tq - tau(i);
    if (d == 0.0) return f(i);
    double c = bw(i) / d;
    num += c * f(i);
    den += c;
  }
  return num / den;
}

Vec barycentric_interpolate(const Vec& tau, const Vec& f, const Vec& tq) {
  Vec bw = barycentric_weights(tau);
  Vec out(tq.size());
  for (int k = 0; k < tq.size(); ++k) out(k) = barycentric_eval(tau, bw, f, tq(k));
  return out;
}

std::size_t linear_block_doubles(int n_x, int N) {
  // Per state, the primal and dual linear blocks each store one dense
  // (N+1)^2 integration matrix image.
  return static_cast<std::size_t>(2) * n_x * (N + 1) * (N + 1);
}

}  // namespace psopt
