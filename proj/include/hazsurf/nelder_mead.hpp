#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace hazsurf {

struct NelderMeadOptions {
  double step = 1.0;       // additive offset building the initial simplex
  double x_tol = 1e-4;     // simplex diameter (inf norm) to declare success
  double f_tol = 1e-4;     // value spread to declare success
  int max_evals = 200;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evals = 0;
  bool converged = false;
};

// Downhill simplex with the standard reflection/expansion/contraction/shrink
// moves.  The objective may return +inf for infeasible points.  Stops when
// both the coordinate and value spreads fall under tolerance, or at the
// evaluation cap (converged = false in that case, best vertex returned).
inline NelderMeadResult nelder_mead(
    const std::function<double(const Eigen::VectorXd &)> &f,
    const Eigen::VectorXd &x0, const NelderMeadOptions &opts = {}) {
  const int n = static_cast<int>(x0.size());
  const double alpha = 1.0, gamma = 2.0, beta = 0.5, sigma = 0.5;

  NelderMeadResult res;
  std::vector<Eigen::VectorXd> X(n + 1, x0);
  std::vector<double> F(n + 1);
  for (int i = 1; i <= n; ++i) X[i][i - 1] += opts.step;
  for (int i = 0; i <= n; ++i) {
    F[i] = f(X[i]);
    ++res.evals;
  }

  std::vector<int> ord(n + 1);
  auto sort_simplex = [&]() {
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(),
                     [&](int a, int b) { return F[a] < F[b]; });
    std::vector<Eigen::VectorXd> X2(n + 1);
    std::vector<double> F2(n + 1);
    for (int i = 0; i <= n; ++i) {
      X2[i] = X[ord[i]];
      F2[i] = F[ord[i]];
    }
    X.swap(X2);
    F.swap(F2);
  };

  while (true) {
    sort_simplex();
    double spread_x = 0.0;
    for (int i = 1; i <= n; ++i)
      spread_x = std::max(spread_x, (X[i] - X[0]).cwiseAbs().maxCoeff());
    const double spread_f = F[n] - F[0];
    if (std::isfinite(F[0]) && spread_x <= opts.x_tol &&
        spread_f <= opts.f_tol) {
      res.converged = true;
      break;
    }
    if (res.evals >= opts.max_evals) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += X[i];
    centroid /= n;

    Eigen::VectorXd xr = centroid + alpha * (centroid - X[n]);
    double fr = f(xr);
    ++res.evals;
    if (fr < F[0]) {
      Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
      double fe = f(xe);
      ++res.evals;
      if (fe < fr) {
        X[n] = xe;
        F[n] = fe;
      } else {
        X[n] = xr;
        F[n] = fr;
      }
    } else if (fr < F[n - 1]) {
      X[n] = xr;
      F[n] = fr;
    } else {
      // contract toward the better of the reflected / worst point
      const bool outside = fr < F[n];
      Eigen::VectorXd xc;
      if (outside)
        xc = centroid + beta * (xr - centroid);
      else
        xc = centroid - beta * (centroid - X[n]);
      double fc = f(xc);
      ++res.evals;
      if (fc < std::min(fr, F[n])) {
        X[n] = xc;
        F[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          X[i] = X[0] + sigma * (X[i] - X[0]);
          F[i] = f(X[i]);
          ++res.evals;
          if (res.evals >= opts.max_evals) break;
        }
      }
    }
  }

  sort_simplex();
  res.x = X[0];
  res.value = F[0];
  return res;
}

}  // namespace hazsurf
