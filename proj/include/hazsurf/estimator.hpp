#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hazsurf/basis.hpp"
#include "hazsurf/binning.hpp"
#include "hazsurf/errors.hpp"
#include "hazsurf/format.hpp"
#include "hazsurf/nelder_mead.hpp"

namespace hazsurf {

// ---------------------------------------------------------------------------
// GLAM products.  The Poisson design over the grid is the Kronecker product
// Bs (x) Bu; its weighted cross-products can be computed from the marginal
// bases alone via the row-tensor rearrangement, avoiding the (nu*ns) x
// (cu*cs) matrix entirely.
// ---------------------------------------------------------------------------

namespace detail {
// Row-wise tensor: T(i, a + c*b) = B(i,a) * B(i,b).
inline Eigen::MatrixXd row_tensor(const Eigen::MatrixXd &B) {
  const Eigen::Index n = B.rows(), c = B.cols();
  Eigen::MatrixXd T(n, c * c);
  for (Eigen::Index b = 0; b < c; ++b)
    T.middleCols(b * c, c) = B.array().colwise() * B.col(b).array();
  return T;
}
}  // namespace detail

// vec(Bu' M Bs) with the u index fastest.
inline Eigen::VectorXd glam_vec(const Eigen::MatrixXd &Bu,
                                const Eigen::MatrixXd &Bs,
                                const Eigen::MatrixXd &M) {
  Eigen::MatrixXd T = Bu.transpose() * M * Bs;
  return Eigen::Map<Eigen::VectorXd>(T.data(), T.size());
}

// (Bs (x) Bu)' diag(vec W) (Bs (x) Bu) for a weight array W (nu x ns).
inline Eigen::MatrixXd glam_gram(const Eigen::MatrixXd &Bu,
                                 const Eigen::MatrixXd &Bs,
                                 const Eigen::MatrixXd &W) {
  const Eigen::Index cu = Bu.cols(), cs = Bs.cols();
  Eigen::MatrixXd M =
      detail::row_tensor(Bu).transpose() * W * detail::row_tensor(Bs);
  Eigen::MatrixXd G(cu * cs, cu * cs);
  for (Eigen::Index m2 = 0; m2 < cs; ++m2)
    for (Eigen::Index m1 = 0; m1 < cs; ++m1)
      for (Eigen::Index l2 = 0; l2 < cu; ++l2)
        for (Eigen::Index l1 = 0; l1 < cu; ++l1)
          G(l1 + cu * m1, l2 + cu * m2) = M(l1 + cu * l2, m1 + cs * m2);
  return G;
}

// Weighted gram matrix and score vector in one call; Resid is the array of
// working residuals y - mu.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> glam_products(
    const Eigen::MatrixXd &Bu, const Eigen::MatrixXd &Bs,
    const Eigen::MatrixXd &W, const Eigen::MatrixXd &Resid) {
  return {glam_gram(Bu, Bs, W), glam_vec(Bu, Bs, Resid)};
}

// ---------------------------------------------------------------------------
// Model structures
// ---------------------------------------------------------------------------

enum class Criterion { aic, bic };

inline Criterion parse_criterion(const std::string &s) {
  if (s == "aic") return Criterion::aic;
  if (s == "bic") return Criterion::bic;
  throw InvalidSpecError("unknown criterion '" + s + "' (want aic or bic)");
}

struct ModelSpec {
  MarginalBasis basis_u;
  MarginalBasis basis_s;
  int pord = 2;
};

struct FitOptions {
  int max_iter = 50;
  double coef_tol = 1e-7;  // max absolute coefficient change
  double dev_tol = 1e-8;   // relative penalized-deviance change
};

struct FittedModel {
  ModelSpec spec;
  BinGrid grid;
  PenaltySpec penalty;
  Eigen::MatrixXd coef;  // cu x cs spline coefficients A
  Eigen::VectorXd beta;  // proportional-hazards coefficients (may be empty)
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd covariance;  // (cu*cs + p) square, penalized information inverse
  double deviance = 0.0;
  double ed = 0.0;
  double aic = 0.0;
  double bic = 0.0;         // BIC with n = included Poisson cells
  double bic_events = 0.0;  // BIC with n = total event count
  long n_obs = 0;
  double n_events = 0.0;
  int iterations = 0;
  bool converged = false;
  bool selection_capped = false;  // smoothing search stopped at its eval cap
  std::vector<double> deviance_trace;  // penalized deviance per iteration

  int cu() const { return spec.basis_u.n_basis(); }
  int cs() const { return spec.basis_s.n_basis(); }
  int n_covariates() const { return static_cast<int>(beta.size()); }
  double criterion_value(Criterion c) const {
    return c == Criterion::aic ? aic : bic;
  }
  Eigen::VectorXd theta() const {
    Eigen::VectorXd t(coef.size() + beta.size());
    t.head(coef.size()) =
        Eigen::Map<const Eigen::VectorXd>(coef.data(), coef.size());
    t.tail(beta.size()) = beta;
    return t;
  }
};

// ---------------------------------------------------------------------------
// Penalized Poisson IWLS over the binned grid
// ---------------------------------------------------------------------------

namespace detail {

struct IwlsState {
  Eigen::MatrixXd H;   // unpenalized information at theta
  Eigen::VectorXd g;   // score X'(y - mu)
  double dev = 0.0;    // Poisson deviance over included observations
  double pen_dev = 0.0;
};

// Everything fixed across IWLS iterations for one fit.
struct FitContext {
  const BinnedData *data = nullptr;
  Eigen::MatrixXd Bu, Bs;
  Eigen::MatrixXd P;        // penalty on vec(A)
  int cu = 0, cs = 0, p = 0;
  long n_obs = 0;
  double n_events = 0.0;
  Eigen::VectorXd z_events_sum;  // sum of z over event records
  bool per_individual = false;

  int dim() const { return cu * cs + p; }
};

inline FitContext make_context(const BinnedData &data, const ModelSpec &spec,
                               const PenaltySpec &pen) {
  FitContext ctx;
  ctx.data = &data;
  const BinGrid &grid = data.grid;
  if (spec.basis_u.domain_min > grid.edges_u.front() + 1e-12 ||
      spec.basis_u.domain_max < grid.edges_u.back() - 1e-12 ||
      spec.basis_s.domain_min > grid.edges_s.front() + 1e-12 ||
      spec.basis_s.domain_max < grid.edges_s.back() - 1e-12)
    throw InvalidSpecError("basis domain does not cover the binning grid");

  ctx.p = static_cast<int>(data.covariate_names.size());
  ctx.per_individual = ctx.p > 0;
  if (ctx.per_individual && !data.individual)
    throw InvalidSpecError(
        "covariate model requires individually binned data (individual = "
        "true in bin_records)");

  ctx.Bu = bspline_basis(spec.basis_u, grid.midpoints_u());
  ctx.Bs = bspline_basis(spec.basis_s, grid.midpoints_s());
  ctx.cu = spec.basis_u.n_basis();
  ctx.cs = spec.basis_s.n_basis();
  ctx.P = penalty_2d(pen, ctx.cu, ctx.cs);

  ctx.n_events = data.total_events();
  if (!(data.total_exposure() > 0.0))
    throw DegenerateDataError("no exposure in any bin");
  if (!(ctx.n_events > 0.0))
    throw DegenerateDataError("no events in any bin");

  if (ctx.per_individual) {
    ctx.n_obs = 0;
    for (const auto &c : data.cells)
      for (double w : c.exposure)
        if (w > 0.0) ++ctx.n_obs;
    ctx.z_events_sum = Eigen::VectorXd::Zero(ctx.p);
    for (size_t i = 0; i < data.cells.size(); ++i)
      if (data.cells[i].event_bin >= 0)
        ctx.z_events_sum += data.covariates.row(static_cast<long>(i)).transpose();
  } else {
    ctx.n_obs = (data.exposure.array() > 0.0).count();
  }
  return ctx;
}

// State (information, score, deviance) at given coefficients.  Eta0 is the
// baseline log-hazard over the grid; gamma the per-record linear predictor
// offsets (empty without covariates).
inline IwlsState evaluate_state(const FitContext &ctx,
                                const Eigen::MatrixXd &Eta0,
                                const Eigen::VectorXd &beta,
                                double pen_quad) {
  const BinnedData &d = *ctx.data;
  const int nu = d.grid.n_u(), ns = d.grid.n_s();
  const int nA = ctx.cu * ctx.cs, p = ctx.p;
  IwlsState st;

  Eigen::MatrixXd E = Eta0.array().exp().matrix();

  if (!ctx.per_individual) {
    Eigen::MatrixXd W = (d.exposure.array() * E.array()).matrix();
    st.H = glam_gram(ctx.Bu, ctx.Bs, W);
    st.g = glam_vec(ctx.Bu, ctx.Bs, d.events - W);
    double dev = 0.0;
    for (int j = 0; j < ns; ++j)
      for (int k = 0; k < nu; ++k) {
        const double r = d.exposure(k, j);
        if (r <= 0.0) continue;
        const double y = d.events(k, j), mu = W(k, j);
        dev += (y > 0.0) ? y * std::log(y / mu) - (y - mu) : mu;
      }
    st.dev = 2.0 * dev;
  } else {
    // Accumulate the sufficient arrays over per-subject cells:
    //   SR   = sum_i R_ij e^{gamma_i}
    //   SRZ  = sum_i z_iq R_ij e^{gamma_i}
    //   SRZZ = sum_i z_iq z_iq' R_ij e^{gamma_i}
    Eigen::VectorXd gamma = d.covariates * beta;
    Eigen::MatrixXd SR = Eigen::MatrixXd::Zero(nu, ns);
    std::vector<Eigen::MatrixXd> SRZ(p, Eigen::MatrixXd::Zero(nu, ns));
    std::vector<Eigen::MatrixXd> SRZZ(p * (p + 1) / 2,
                                      Eigen::MatrixXd::Zero(nu, ns));
    double ev_term = 0.0;
    for (size_t i = 0; i < d.cells.size(); ++i) {
      const IndividualCells &c = d.cells[i];
      const double eg = std::exp(gamma[static_cast<long>(i)]);
      const auto z = d.covariates.row(static_cast<long>(i));
      for (size_t jj = 0; jj < c.exposure.size(); ++jj) {
        const double w = c.exposure[jj] * eg;
        if (w <= 0.0) continue;
        const int j = c.s_first + static_cast<int>(jj);
        SR(c.u_bin, j) += w;
        int t = 0;
        for (int q = 0; q < p; ++q) {
          SRZ[q](c.u_bin, j) += w * z[q];
          for (int q2 = q; q2 < p; ++q2, ++t)
            SRZZ[t](c.u_bin, j) += w * z[q] * z[q2];
        }
      }
      if (c.event_bin >= 0) {
        const double r_ev = c.exposure[c.event_bin - c.s_first];
        const double log_mu =
            std::log(r_ev) + Eta0(c.u_bin, c.event_bin) + gamma[static_cast<long>(i)];
        ev_term += -log_mu - 1.0;
      }
    }
    Eigen::MatrixXd W = (SR.array() * E.array()).matrix();
    st.dev = 2.0 * (W.sum() + ev_term);

    st.H = Eigen::MatrixXd::Zero(nA + p, nA + p);
    st.g = Eigen::VectorXd::Zero(nA + p);
    st.H.topLeftCorner(nA, nA) = glam_gram(ctx.Bu, ctx.Bs, W);
    st.g.head(nA) = glam_vec(ctx.Bu, ctx.Bs, d.events - W);
    int t = 0;
    for (int q = 0; q < p; ++q) {
      Eigen::MatrixXd WZ = (SRZ[q].array() * E.array()).matrix();
      st.H.block(0, nA + q, nA, 1) = glam_vec(ctx.Bu, ctx.Bs, WZ);
      st.H.block(nA + q, 0, 1, nA) =
          st.H.block(0, nA + q, nA, 1).transpose();
      st.g[nA + q] = ctx.z_events_sum[q] - WZ.sum();
      for (int q2 = q; q2 < p; ++q2, ++t) {
        const double h = (SRZZ[t].array() * E.array()).sum();
        st.H(nA + q, nA + q2) = h;
        st.H(nA + q2, nA + q) = h;
      }
    }
  }
  st.pen_dev = st.dev + pen_quad;
  return st;
}

}  // namespace detail

// Fit the two-dimensional P-spline hazard (plus optional proportional
// covariate effects) at fixed smoothing.  Scheme: one weighted least-squares
// projection of a ridge-started log rate onto the spline space, then damped
// Newton steps on the penalized Poisson likelihood until the coefficients
// and penalized deviance stabilize.
inline FittedModel fit_at_rho(const BinnedData &data, const ModelSpec &spec,
                              double log10_rho_u, double log10_rho_s,
                              const FitOptions &opts = {}) {
  PenaltySpec pen{spec.pord, log10_rho_u, log10_rho_s};
  detail::FitContext ctx = detail::make_context(data, spec, pen);
  const int nA = ctx.cu * ctx.cs, p = ctx.p, dim = nA + p;
  const int nu = data.grid.n_u(), ns = data.grid.n_s();

  Eigen::MatrixXd Pt = Eigen::MatrixXd::Zero(dim, dim);
  Pt.topLeftCorner(nA, nA) = ctx.P;

  // Ridge start: log empirical rates with a small positive shift, projected
  // once through the working normal equations (offset-free cells excluded).
  double ybar = 0.0;
  {
    long m = 0;
    for (int j = 0; j < ns; ++j)
      for (int k = 0; k < nu; ++k)
        if (data.exposure(k, j) > 0.0) {
          ybar += data.events(k, j);
          ++m;
        }
    ybar /= static_cast<double>(m);
  }
  Eigen::MatrixXd eta_init = Eigen::MatrixXd::Zero(nu, ns);
  for (int j = 0; j < ns; ++j)
    for (int k = 0; k < nu; ++k)
      if (data.exposure(k, j) > 0.0)
        eta_init(k, j) =
            std::log((data.events(k, j) + 0.5 * ybar) / data.exposure(k, j));

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  {
    Eigen::MatrixXd E = eta_init.array().exp().matrix();
    Eigen::MatrixXd W =
        (data.exposure.array() * E.array()).matrix();  // gamma = 0
    Eigen::VectorXd rhs(dim);
    Eigen::MatrixXd H(dim, dim);
    Eigen::MatrixXd WA = (W.array() * eta_init.array()).matrix();
    if (p == 0) {
      H = glam_gram(ctx.Bu, ctx.Bs, W);
      rhs = glam_vec(ctx.Bu, ctx.Bs, WA + data.events - W);
    } else {
      // same accumulations as the Newton step, taken at beta = 0
      detail::IwlsState st0 =
          detail::evaluate_state(ctx, eta_init, Eigen::VectorXd::Zero(p), 0.0);
      H = st0.H;
      rhs = st0.g;
      rhs.head(nA) += glam_vec(ctx.Bu, ctx.Bs, WA);
      const Eigen::MatrixXd &Z = data.covariates;
      for (int q = 0; q < p; ++q) {
        double acc = 0.0;
        for (size_t i = 0; i < data.cells.size(); ++i) {
          const IndividualCells &c = data.cells[i];
          for (size_t jj = 0; jj < c.exposure.size(); ++jj) {
            const int j = c.s_first + static_cast<int>(jj);
            acc += Z(static_cast<long>(i), q) * c.exposure[jj] * E(c.u_bin, j) *
                   eta_init(c.u_bin, j);
          }
        }
        rhs[nA + q] += acc;
      }
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(
        (H + Pt).selfadjointView<Eigen::Lower>());
    if (ldlt.info() != Eigen::Success)
      throw ConvergenceError("initial working solve failed",
                             std::numeric_limits<double>::quiet_NaN());
    theta = ldlt.solve(rhs);
  }

  auto unpack = [&](const Eigen::VectorXd &t) {
    Eigen::MatrixXd A = Eigen::Map<const Eigen::MatrixXd>(t.data(), ctx.cu, ctx.cs);
    Eigen::VectorXd b = t.tail(p);
    return std::pair<Eigen::MatrixXd, Eigen::VectorXd>(std::move(A),
                                                       std::move(b));
  };
  // Penalty quadratic as sums of squared differences; the matrix form
  // vec(A)'P vec(A) cancels catastrophically at large rho.
  const Eigen::MatrixXd Du = difference_matrix(ctx.cu, spec.pord);
  const Eigen::MatrixXd Ds = difference_matrix(ctx.cs, spec.pord);
  auto state_at = [&](const Eigen::VectorXd &t) {
    auto [A, b] = unpack(t);
    Eigen::MatrixXd Eta0 = ctx.Bu * A * ctx.Bs.transpose();
    const double quad = pen.rho_u() * (Du * A).squaredNorm() +
                        pen.rho_s() * (A * Ds.transpose()).squaredNorm();
    return detail::evaluate_state(ctx, Eta0, b, quad);
  };

  FittedModel fit;
  fit.spec = spec;
  fit.grid = data.grid;
  fit.penalty = pen;
  fit.covariate_names = data.covariate_names;
  fit.n_obs = ctx.n_obs;
  fit.n_events = ctx.n_events;

  // Score tolerance at convergence, scaled by the largest observed count.
  const double y_inf = ctx.per_individual ? 1.0 : data.events.maxCoeff();
  const double score_tol = 1e-6 * (1.0 + y_inf);

  detail::IwlsState st = state_at(theta);
  fit.deviance_trace.push_back(st.pen_dev);
  fit.iterations = 1;
  if (!std::isfinite(st.pen_dev))
    throw ConvergenceError("non-finite deviance after initial projection",
                           st.pen_dev);

  for (int it = 2; it <= opts.max_iter; ++it) {
    Eigen::VectorXd grad = st.g - Pt * theta;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(
        (st.H + Pt).selfadjointView<Eigen::Lower>());
    if (ldlt.info() != Eigen::Success)
      throw ConvergenceError("information matrix factorization failed",
                             st.pen_dev);
    Eigen::VectorXd delta = ldlt.solve(grad);
    if (grad.dot(delta) < 1e-15 * (1.0 + std::abs(st.pen_dev))) {
      // objective flat along the Newton direction: already at the optimum
      fit.converged = true;
      break;
    }

    const double accept_tol =
        1e-10 + 4.0 * std::numeric_limits<double>::epsilon() *
                    std::abs(st.pen_dev);
    double lambda = 1.0;
    Eigen::VectorXd trial;
    detail::IwlsState st_trial;
    int halvings = 0;
    for (;; ++halvings) {
      trial = theta + lambda * delta;
      st_trial = state_at(trial);
      if (std::isfinite(st_trial.pen_dev) &&
          st_trial.pen_dev <= st.pen_dev + accept_tol)
        break;
      if (halvings >= 30)
        throw ConvergenceError(
            "penalized deviance failed to decrease despite step halving",
            st.pen_dev);
      lambda *= 0.5;
    }

    const double step_max = (lambda * delta).cwiseAbs().maxCoeff();
    const double dev_change = std::abs(st.pen_dev - st_trial.pen_dev);
    theta = trial;
    st = st_trial;
    fit.deviance_trace.push_back(st.pen_dev);
    fit.iterations = it;
    const double score_inf = (st.g - Pt * theta).cwiseAbs().maxCoeff();
    if ((step_max < opts.coef_tol ||
         dev_change < opts.dev_tol * (1.0 + std::abs(st.pen_dev))) &&
        score_inf < score_tol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged)
    throw ConvergenceError("IWLS did not converge in " +
                               std::to_string(opts.max_iter) + " iterations",
                           st.pen_dev);

  auto [A, b] = unpack(theta);
  fit.coef = A;
  fit.beta = b;
  fit.deviance = st.dev;

  Eigen::LDLT<Eigen::MatrixXd> ldlt((st.H + Pt).selfadjointView<Eigen::Lower>());
  fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(dim, dim));
  fit.covariance = (0.5 * (fit.covariance + fit.covariance.transpose())).eval();
  fit.ed = fit.covariance.cwiseProduct(st.H).sum();
  fit.aic = fit.deviance + 2.0 * fit.ed;
  fit.bic = fit.deviance + std::log(static_cast<double>(fit.n_obs)) * fit.ed;
  fit.bic_events = fit.deviance + std::log(fit.n_events) * fit.ed;
  return fit;
}

// ---------------------------------------------------------------------------
// Coefficient summaries
// ---------------------------------------------------------------------------

struct CoefficientSummary {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
  Eigen::VectorXd hazard_ratio;
  Eigen::VectorXd hr_lower;  // delta-method 95% bounds, symmetric around HR
  Eigen::VectorXd hr_upper;
  bool se_clipped = false;  // negative variance diagonals clipped to zero
};

inline CoefficientSummary coefficient_se(const FittedModel &fit) {
  const int p = fit.n_covariates();
  const int nA = fit.cu() * fit.cs();
  CoefficientSummary s;
  s.names = fit.covariate_names;
  s.beta = fit.beta;
  s.se.resize(p);
  s.hazard_ratio.resize(p);
  s.hr_lower.resize(p);
  s.hr_upper.resize(p);
  for (int q = 0; q < p; ++q) {
    double v = fit.covariance(nA + q, nA + q);
    if (v < 0.0) {
      v = 0.0;
      s.se_clipped = true;
    }
    s.se[q] = std::sqrt(v);
    const double hr = std::exp(fit.beta[q]);
    s.hazard_ratio[q] = hr;
    s.hr_lower[q] = hr - 1.96 * hr * s.se[q];
    s.hr_upper[q] = hr + 1.96 * hr * s.se[q];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Smoothing selection
// ---------------------------------------------------------------------------

struct RhoGridCell {
  double log10_rho_u = 0.0;
  double log10_rho_s = 0.0;
  double value = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
};

struct RhoSearchResult {
  FittedModel best;
  std::vector<RhoGridCell> table;  // row-major over (u, s)
};

// Exhaustive search over a log10 grid.  Cells whose fit fails are recorded
// with ok = false and skipped; ties resolve to the first cell in row-major
// order.
inline RhoSearchResult select_rho_grid(const BinnedData &data,
                                       const ModelSpec &spec,
                                       const std::vector<double> &log10_rho_u,
                                       const std::vector<double> &log10_rho_s,
                                       Criterion crit,
                                       const FitOptions &opts = {}) {
  if (log10_rho_u.empty() || log10_rho_s.empty())
    throw InvalidSpecError("smoothing grid must be non-empty on both axes");
  RhoSearchResult res;
  std::optional<FittedModel> best;
  double best_val = std::numeric_limits<double>::infinity();
  for (double lu : log10_rho_u)
    for (double ls : log10_rho_s) {
      RhoGridCell cell{lu, ls, std::numeric_limits<double>::quiet_NaN(), false};
      try {
        FittedModel m = fit_at_rho(data, spec, lu, ls, opts);
        cell.value = m.criterion_value(crit);
        cell.ok = true;
        if (cell.value < best_val) {
          best_val = cell.value;
          best = std::move(m);
        }
      } catch (const Error &) {
      }
      res.table.push_back(cell);
    }
  if (!best)
    throw SearchError("no smoothing-grid cell produced a valid fit");
  res.best = std::move(*best);
  return res;
}

// Stopping rule for the smoothing search: collapse of the criterion-value
// spread alone, coordinates free.
inline NelderMeadOptions rho_search_options() {
  NelderMeadOptions nm;
  nm.x_tol = std::numeric_limits<double>::infinity();
  nm.f_tol = 1e-4;
  nm.max_evals = 200;
  return nm;
}

// Nelder-Mead search over (log10 rho_u, log10 rho_s).  Failed fits count as
// +inf.  If the evaluation cap is reached before the simplex collapses, the
// best fit so far is returned with selection_capped set.
inline FittedModel select_rho_numeric(const BinnedData &data,
                                      const ModelSpec &spec,
                                      std::pair<double, double> start,
                                      Criterion crit,
                                      const FitOptions &opts = {},
                                      const NelderMeadOptions &nm =
                                          rho_search_options(),
                                      int *evals = nullptr) {
  std::optional<FittedModel> best;
  double best_val = std::numeric_limits<double>::infinity();
  auto objective = [&](const Eigen::VectorXd &x) -> double {
    try {
      FittedModel m = fit_at_rho(data, spec, x[0], x[1], opts);
      const double v = m.criterion_value(crit);
      if (v < best_val) {
        best_val = v;
        best = std::move(m);
      }
      return v;
    } catch (const Error &) {
      return std::numeric_limits<double>::infinity();
    }
  };
  Eigen::VectorXd x0(2);
  x0 << start.first, start.second;
  NelderMeadResult r = nelder_mead(objective, x0, nm);
  if (evals) *evals = r.evals;
  if (!best)
    throw SearchError("smoothing search failed at every evaluated point");
  best->selection_capped = !r.converged;
  return std::move(*best);
}

// ---------------------------------------------------------------------------
// Single-time-scale fit (same machinery, one margin)
// ---------------------------------------------------------------------------

struct Fitted1D {
  MarginalBasis basis;
  int pord = 2;
  double log10_rho = 0.0;
  Eigen::VectorXd coef;
  Eigen::MatrixXd covariance;
  double deviance = 0.0, ed = 0.0, aic = 0.0, bic = 0.0;
  long n_obs = 0;
  int iterations = 0;
  bool converged = false;
};

inline Fitted1D fit_1ts(const std::vector<double> &x,
                        const Eigen::VectorXd &exposure,
                        const Eigen::VectorXd &events,
                        const MarginalBasis &basis, int pord, double log10_rho,
                        const FitOptions &opts = {}) {
  if (static_cast<Eigen::Index>(x.size()) != exposure.size() ||
      exposure.size() != events.size())
    throw InvalidSpecError("x, exposure and events must have equal length");
  if (!(exposure.sum() > 0.0)) throw DegenerateDataError("no exposure");
  if (!(events.sum() > 0.0)) throw DegenerateDataError("no events");

  const Eigen::MatrixXd B = bspline_basis(basis, x);
  const int c = basis.n_basis();
  const Eigen::MatrixXd D = difference_matrix(c, pord);
  const double rho = std::pow(10.0, log10_rho);
  const Eigen::MatrixXd P = rho * (D.transpose() * D);
  auto quad_of = [&](const Eigen::VectorXd &th) {
    return rho * (D * th).squaredNorm();
  };
  const Eigen::Index n = x.size();

  long n_obs = (exposure.array() > 0.0).count();
  double ybar = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (exposure[i] > 0.0) ybar += events[i];
  ybar /= static_cast<double>(n_obs);

  Eigen::VectorXd eta_init = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (exposure[i] > 0.0)
      eta_init[i] = std::log((events[i] + 0.5 * ybar) / exposure[i]);

  auto dev_at = [&](const Eigen::VectorXd &mu) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (exposure[i] <= 0.0) continue;
      const double y = events[i];
      dev += (y > 0.0) ? y * std::log(y / mu[i]) - (y - mu[i]) : mu[i];
    }
    return 2.0 * dev;
  };

  Eigen::VectorXd theta;
  {
    Eigen::VectorXd w = exposure.array() * eta_init.array().exp();
    Eigen::MatrixXd H = B.transpose() * w.asDiagonal() * B;
    Eigen::VectorXd rhs =
        B.transpose() * (w.cwiseProduct(eta_init) + events - w);
    theta = (H + P).ldlt().solve(rhs);
  }

  Fitted1D fit;
  fit.basis = basis;
  fit.pord = pord;
  fit.log10_rho = log10_rho;
  fit.n_obs = n_obs;
  fit.iterations = 1;

  Eigen::VectorXd mu =
      exposure.array() * (B * theta).array().exp() *
      (exposure.array() > 0.0).cast<double>();
  double pen_dev = dev_at(mu) + quad_of(theta);
  Eigen::MatrixXd H;
  for (int it = 2; it <= opts.max_iter; ++it) {
    H = B.transpose() * mu.asDiagonal() * B;
    Eigen::VectorXd grad = B.transpose() * (events - mu) - P * theta;
    Eigen::VectorXd delta = (H + P).ldlt().solve(grad);
    if (grad.dot(delta) < 1e-15 * (1.0 + std::abs(pen_dev))) {
      fit.converged = true;
      break;
    }
    double lambda = 1.0;
    Eigen::VectorXd trial;
    double trial_pen = 0.0;
    Eigen::VectorXd mu_trial;
    for (int h = 0;; ++h) {
      trial = theta + lambda * delta;
      mu_trial = exposure.array() * (B * trial).array().exp() *
                 (exposure.array() > 0.0).cast<double>();
      trial_pen = dev_at(mu_trial) + quad_of(trial);
      if (std::isfinite(trial_pen) &&
          trial_pen <= pen_dev +
                           (1e-10 + 4.0 * std::numeric_limits<double>::epsilon() *
                                        std::abs(pen_dev)))
        break;
      if (h >= 30)
        throw ConvergenceError("1-D fit: deviance failed to decrease",
                               pen_dev);
      lambda *= 0.5;
    }
    const double step_max = (lambda * delta).cwiseAbs().maxCoeff();
    const double change = std::abs(pen_dev - trial_pen);
    theta = trial;
    mu = mu_trial;
    fit.iterations = it;
    const double score_inf =
        (B.transpose() * (events - mu) - P * theta).cwiseAbs().maxCoeff();
    const bool done = (step_max < opts.coef_tol ||
                       change < opts.dev_tol * (1.0 + std::abs(trial_pen))) &&
                      score_inf < 1e-6 * (1.0 + events.maxCoeff());
    pen_dev = trial_pen;
    if (done) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged)
    throw ConvergenceError("1-D IWLS did not converge", pen_dev);

  H = B.transpose() * mu.asDiagonal() * B;
  fit.coef = theta;
  fit.covariance = (H + P).ldlt().solve(Eigen::MatrixXd::Identity(c, c));
  fit.deviance = dev_at(mu);
  fit.ed = fit.covariance.cwiseProduct(H).sum();
  fit.aic = fit.deviance + 2.0 * fit.ed;
  fit.bic = fit.deviance + std::log(static_cast<double>(n_obs)) * fit.ed;
  return fit;
}

// Convenience: uniform bin midpoints over the basis domain.
inline Fitted1D fit_1ts(const Eigen::VectorXd &exposure,
                        const Eigen::VectorXd &events,
                        const MarginalBasis &basis, int pord, double log10_rho,
                        const FitOptions &opts = {}) {
  const Eigen::Index n = exposure.size();
  std::vector<double> x(n);
  const double w = (basis.domain_max - basis.domain_min) / n;
  for (Eigen::Index i = 0; i < n; ++i)
    x[i] = basis.domain_min + (i + 0.5) * w;
  return fit_1ts(x, exposure, events, basis, pord, log10_rho, opts);
}

inline Fitted1D fit_1ts_auto(const std::vector<double> &x,
                             const Eigen::VectorXd &exposure,
                             const Eigen::VectorXd &events,
                             const MarginalBasis &basis, int pord,
                             Criterion crit, double start_log10_rho = 0.0,
                             const FitOptions &opts = {},
                             const NelderMeadOptions &nm = {}) {
  std::optional<Fitted1D> best;
  double best_val = std::numeric_limits<double>::infinity();
  auto objective = [&](const Eigen::VectorXd &v) -> double {
    try {
      Fitted1D m = fit_1ts(x, exposure, events, basis, pord, v[0], opts);
      const double val = crit == Criterion::aic ? m.aic : m.bic;
      if (val < best_val) {
        best_val = val;
        best = std::move(m);
      }
      return val;
    } catch (const Error &) {
      return std::numeric_limits<double>::infinity();
    }
  };
  Eigen::VectorXd x0(1);
  x0 << start_log10_rho;
  nelder_mead(objective, x0, nm);
  if (!best) throw SearchError("1-D smoothing search failed everywhere");
  return std::move(*best);
}

// ---------------------------------------------------------------------------
// Text summary, R flavored
// ---------------------------------------------------------------------------

inline std::string summarize_fit(const FittedModel &fit) {
  std::ostringstream os;
  auto line = [&](const std::string &key, const std::string &val) {
    os << "  " << key << " =  " << val << " \n";
  };
  os << "Number of events =  " << fmt_sig(fit.n_events) << " \n\n";
  os << "Model specifications: \n";
  line("nu", std::to_string(fit.grid.n_u()));
  line("ns", std::to_string(fit.grid.n_s()));
  line("cu", std::to_string(fit.cu()));
  line("cs", std::to_string(fit.cs()));
  os << "\nOptimal smoothing: \n";
  line("log10(rho_u)", fmt_sig(fit.penalty.log10_rho_u));
  line("log10(rho_s)", fmt_sig(fit.penalty.log10_rho_s));
  line("rho_u", fmt_sig(fit.penalty.rho_u()));
  line("rho_s", fmt_sig(fit.penalty.rho_s()));

  if (fit.n_covariates() > 0) {
    CoefficientSummary cs = coefficient_se(fit);
    const std::vector<std::string> headers = {"beta", "se(beta)", "exp(beta)",
                                              "lower .95", "upper.95"};
    std::vector<std::vector<std::string>> cols(5);
    for (int q = 0; q < fit.n_covariates(); ++q) {
      cols[0].push_back(fmt_sig(cs.beta[q]));
      cols[1].push_back(fmt_sig(cs.se[q]));
      cols[2].push_back(fmt_sig(cs.hazard_ratio[q]));
      cols[3].push_back(fmt_sig(cs.hr_lower[q]));
      cols[4].push_back(fmt_sig(cs.hr_upper[q]));
    }
    size_t name_w = 0;
    for (const auto &n : cs.names) name_w = std::max(name_w, n.size());
    std::vector<size_t> w(5);
    for (int c = 0; c < 5; ++c) {
      w[c] = headers[c].size();
      for (const auto &v : cols[c]) w[c] = std::max(w[c], v.size());
    }
    os << "\n" << std::string(name_w, ' ');
    for (int c = 0; c < 5; ++c)
      os << " " << std::string(w[c] - headers[c].size(), ' ') << headers[c];
    os << "\n";
    for (size_t q = 0; q < cs.names.size(); ++q) {
      os << cs.names[q] << std::string(name_w - cs.names[q].size(), ' ');
      for (int c = 0; c < 5; ++c)
        os << " " << std::string(w[c] - cols[c][q].size(), ' ') << cols[c][q];
      os << "\n";
    }
    if (cs.se_clipped)
      os << "Warning: negative variance diagonal clipped to zero\n";
  }

  os << "\n\nModel diagnostics: \n";
  line("AIC", fmt_sig(fit.aic));
  line("BIC", fmt_sig(fit.bic));
  line("BIC (n = events)", fmt_sig(fit.bic_events));
  line("ED", fmt_sig(fit.ed));
  if (fit.selection_capped)
    os << "Warning: smoothing search stopped at the evaluation cap\n";
  return os.str();
}

}  // namespace hazsurf
