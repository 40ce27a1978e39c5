#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>
#include <unsupported/Eigen/KroneckerProduct>

#include "hazsurf/errors.hpp"
#include "hazsurf/format.hpp"

namespace hazsurf {

// Marginal B-spline basis on [domain_min, domain_max]: nseg equal segments,
// degree bdeg, giving nseg + bdeg basis functions.  The knot vector extends
// bdeg knots beyond each boundary at the same spacing, so the basis is a
// partition of unity on the whole closed domain.
struct MarginalBasis {
  double domain_min = 0.0;
  double domain_max = 1.0;
  int nseg = 1;
  int bdeg = 3;

  double dx() const { return (domain_max - domain_min) / nseg; }
  int n_basis() const { return nseg + bdeg; }

  std::vector<double> knots() const {
    std::vector<double> t(nseg + 2 * bdeg + 1);
    const double d = dx();
    for (int j = 0; j < static_cast<int>(t.size()); ++j)
      t[j] = domain_min + (j - bdeg) * d;
    return t;
  }

  // Segment index of x; the right edge belongs to the last segment.
  int segment_of(double x) const {
    if (x < domain_min || x > domain_max)
      throw OutOfDomainError("x = " + fmt_sig(x) + " outside basis domain [" +
                             fmt_sig(domain_min) + ", " + fmt_sig(domain_max) +
                             "]");
    int k = static_cast<int>(std::floor((x - domain_min) / dx()));
    if (k < 0) k = 0;
    if (k >= nseg) k = nseg - 1;
    return k;
  }
};

inline MarginalBasis make_basis(double domain_min, double domain_max, int nseg,
                                int bdeg) {
  if (nseg < 1)
    throw InvalidSpecError("nseg must be >= 1, got " + std::to_string(nseg));
  if (bdeg < 0)
    throw InvalidSpecError("bdeg must be >= 0, got " + std::to_string(bdeg));
  if (!(domain_max > domain_min))
    throw InvalidSpecError("domain_max (" + fmt_sig(domain_max) +
                           ") must exceed domain_min (" + fmt_sig(domain_min) +
                           ")");
  return MarginalBasis{domain_min, domain_max, nseg, bdeg};
}

// Evaluate all nonzero basis functions at x into N[0..bdeg] using the
// local Cox-de Boor triangle (Piegl & Tiller, "basis funs").  span is the
// index i with t[i] <= x < t[i+1]; the nonzero functions are i-bdeg .. i.
namespace detail {
inline void basis_funs(const std::vector<double> &t, int span, double x,
                       int deg, std::vector<double> &N, std::vector<double> &L,
                       std::vector<double> &R) {
  N[0] = 1.0;
  for (int j = 1; j <= deg; ++j) {
    L[j] = x - t[span + 1 - j];
    R[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      double temp = N[r] / (R[r + 1] + L[j - r]);
      N[r] = saved + R[r + 1] * temp;
      saved = L[j - r] * temp;
    }
    N[j] = saved;
  }
}
}  // namespace detail

// Dense basis matrix, one row per evaluation point, n_basis columns.
// Each row has at most bdeg + 1 nonzero entries and sums to one.
inline Eigen::MatrixXd bspline_basis(const MarginalBasis &basis,
                                     const Eigen::VectorXd &x) {
  const int deg = basis.bdeg;
  const std::vector<double> t = basis.knots();
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(x.size(), basis.n_basis());
  std::vector<double> N(deg + 1), L(deg + 1), R(deg + 1);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const int span = basis.segment_of(x[i]) + deg;
    detail::basis_funs(t, span, x[i], deg, N, L, R);
    for (int j = 0; j <= deg; ++j) B(i, span - deg + j) = N[j];
  }
  return B;
}

inline Eigen::MatrixXd bspline_basis(const MarginalBasis &basis,
                                     const std::vector<double> &x) {
  return bspline_basis(
      basis, Eigen::Map<const Eigen::VectorXd>(x.data(),
                                               static_cast<Eigen::Index>(x.size())));
}

// pord-th order difference operator, (c - pord) x c, built by composing
// first differences.
inline Eigen::MatrixXd difference_matrix(int c, int pord) {
  if (pord < 1 || pord >= c)
    throw InvalidSpecError("difference order " + std::to_string(pord) +
                           " invalid for " + std::to_string(c) +
                           " coefficients");
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(c, c);
  for (int p = 0; p < pord; ++p) {
    const Eigen::Index r = D.rows();
    D = (D.bottomRows(r - 1) - D.topRows(r - 1)).eval();
  }
  return D;
}

// Anisotropic smoothing amounts, stored on log10 scale.
struct PenaltySpec {
  int pord = 2;
  double log10_rho_u = 0.0;
  double log10_rho_s = 0.0;

  double rho_u() const { return std::pow(10.0, log10_rho_u); }
  double rho_s() const { return std::pow(10.0, log10_rho_s); }
};

// Two-dimensional difference penalty on vec(A) with the u index running
// fastest:  rho_u (I_cs  (x)  Du'Du)  +  rho_s (Ds'Ds  (x)  I_cu).
inline Eigen::MatrixXd penalty_2d(const PenaltySpec &spec, int c_u, int c_s) {
  if (spec.pord < 1 || spec.pord >= c_u || spec.pord >= c_s)
    throw InvalidSpecError("penalty order " + std::to_string(spec.pord) +
                           " invalid for coefficient dimensions " +
                           std::to_string(c_u) + " x " + std::to_string(c_s));
  const Eigen::MatrixXd Du = difference_matrix(c_u, spec.pord);
  const Eigen::MatrixXd Ds = difference_matrix(c_s, spec.pord);
  const Eigen::MatrixXd PuTPu = Du.transpose() * Du;
  const Eigen::MatrixXd PsTPs = Ds.transpose() * Ds;
  Eigen::MatrixXd P =
      spec.rho_u() * Eigen::kroneckerProduct(
                         Eigen::MatrixXd::Identity(c_s, c_s), PuTPu) +
      spec.rho_s() * Eigen::kroneckerProduct(
                         PsTPs, Eigen::MatrixXd::Identity(c_u, c_u));
  return P;
}

}  // namespace hazsurf
