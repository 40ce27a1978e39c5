#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hazsurf/basis.hpp"
#include "hazsurf/errors.hpp"
#include "hazsurf/estimator.hpp"
#include "hazsurf/format.hpp"

namespace hazsurf {

// ---------------------------------------------------------------------------
// Evaluated hazard surfaces
// ---------------------------------------------------------------------------

enum class Plane { us, ts };

// A fitted (baseline) hazard surface evaluated on a rectangular grid.  In the
// ts plane the matrix layout is unchanged but cell (i, j) sits at coordinates
// (t = u_values[i] + s_values[j], s_values[j]); `present` distinguishes
// masked cells from cells that merely hold small values.
struct SurfaceGrid {
  Eigen::VectorXd u_values;
  Eigen::VectorXd s_values;
  Eigen::MatrixXd loghazard;     // n_u x n_s
  Eigen::MatrixXd hazard;
  Eigen::MatrixXd se_loghazard;
  Eigen::MatrixXd se_hazard;
  std::optional<Eigen::MatrixXd> cumhazard;
  std::optional<Eigen::MatrixXd> survival;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> present;
  Plane plane = Plane::us;

  Eigen::Index n_u() const { return u_values.size(); }
  Eigen::Index n_s() const { return s_values.size(); }
  bool cumulated() const { return cumhazard.has_value(); }
  double t_at(Eigen::Index i, Eigen::Index j) const {
    return u_values[i] + s_values[j];
  }
};

namespace detail {

inline Eigen::VectorXd to_eigen(const std::vector<double> &v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

inline void check_axis(const MarginalBasis &basis, const Eigen::VectorXd &g,
                       const char *axis) {
  if (g.size() == 0)
    throw InvalidSpecError(std::string(axis) + " grid is empty");
  for (Eigen::Index i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1]))
      throw InvalidSpecError(std::string(axis) +
                             " grid values must be strictly increasing");
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g[i] < basis.domain_min || g[i] > basis.domain_max)
      throw OutOfDomainError(std::string(axis) + " grid value " +
                             fmt_sig(g[i]) + " outside basis domain [" +
                             fmt_sig(basis.domain_min) + ", " +
                             fmt_sig(basis.domain_max) + "]");
}

// Rearranges the cu*cs square covariance block so that the pointwise
// variance of Bu A Bs' is row_tensor(Bu) * Vt * row_tensor(Bs)'.
inline Eigen::MatrixXd rearrange_covariance(const Eigen::MatrixXd &V,
                                            Eigen::Index cu, Eigen::Index cs) {
  Eigen::MatrixXd Vt(cu * cu, cs * cs);
  for (Eigen::Index d = 0; d < cs; ++d)
    for (Eigen::Index b = 0; b < cs; ++b)
      for (Eigen::Index c = 0; c < cu; ++c)
        for (Eigen::Index a = 0; a < cu; ++a)
          Vt(a + cu * c, b + cs * d) = V(a + cu * b, c + cu * d);
  return Vt;
}

inline double uniform_spacing(const Eigen::VectorXd &s) {
  if (s.size() < 2)
    throw InvalidSpecError(
        "cumulative hazard needs at least two s grid points");
  const double ds = s[1] - s[0];
  for (Eigen::Index j = 1; j + 1 < s.size(); ++j)
    if (std::abs((s[j + 1] - s[j]) - ds) > 1e-9 * std::max(1.0, std::abs(ds)))
      throw InvalidSpecError("s grid is not uniformly spaced (step " +
                             fmt_sig(s[j + 1] - s[j]) + " at index " +
                             std::to_string(j) + ", expected " + fmt_sig(ds) +
                             ")");
  return ds;
}

}  // namespace detail

// Baseline (log-)hazard surface with delta-method standard errors.  For a
// model with covariates this is the surface at covariate vector zero.
inline SurfaceGrid evaluate_surface(const FittedModel &model,
                                    const Eigen::VectorXd &u_grid,
                                    const Eigen::VectorXd &s_grid) {
  detail::check_axis(model.spec.basis_u, u_grid, "u");
  detail::check_axis(model.spec.basis_s, s_grid, "s");
  const Eigen::Index cu = model.cu(), cs = model.cs();
  const Eigen::MatrixXd Bu = bspline_basis(model.spec.basis_u, u_grid);
  const Eigen::MatrixXd Bs = bspline_basis(model.spec.basis_s, s_grid);

  SurfaceGrid g;
  g.u_values = u_grid;
  g.s_values = s_grid;
  g.loghazard = Bu * model.coef * Bs.transpose();
  // Scalar exp so extreme log-hazards underflow to an exact zero instead of
  // being clamped by the vectorized path.
  g.hazard = g.loghazard.unaryExpr([](double x) { return std::exp(x); });

  const Eigen::MatrixXd Vt = detail::rearrange_covariance(
      model.covariance.topLeftCorner(cu * cs, cu * cs), cu, cs);
  Eigen::MatrixXd var = detail::row_tensor(Bu) * Vt *
                        detail::row_tensor(Bs).transpose();
  g.se_loghazard = var.array().max(0.0).sqrt().matrix();
  g.se_hazard = (g.hazard.array() * g.se_loghazard.array()).matrix();
  g.present.setConstant(g.n_u(), g.n_s(), true);
  return g;
}

inline SurfaceGrid evaluate_surface(const FittedModel &model,
                                    const std::vector<double> &u_grid,
                                    const std::vector<double> &s_grid) {
  return evaluate_surface(model, detail::to_eigen(u_grid),
                          detail::to_eigen(s_grid));
}

// Fills cumhazard/survival by the left-rectangle rule including the first
// cell: Lambda(u, s_j) = sum_{k<=j} hazard(u, s_k) * ds.
inline SurfaceGrid cumulate(SurfaceGrid grid) {
  if (grid.plane != Plane::us)
    throw InvalidSpecError("cumulate expects a surface in the (u,s) plane");
  const double ds = detail::uniform_spacing(grid.s_values);
  Eigen::MatrixXd cum(grid.n_u(), grid.n_s());
  for (Eigen::Index i = 0; i < grid.n_u(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < grid.n_s(); ++j) {
      acc += grid.hazard(i, j) * ds;
      cum(i, j) = acc;
    }
  }
  grid.cumhazard = cum;
  grid.survival = cum.unaryExpr([](double x) { return std::exp(-x); });
  return grid;
}

inline SurfaceGrid cumulate(const FittedModel &model,
                            const Eigen::VectorXd &u_grid,
                            const Eigen::VectorXd &s_grid) {
  if (s_grid.size() > 0 &&
      std::abs(s_grid[0] - model.spec.basis_s.domain_min) >
          1e-9 * std::max(1.0, std::abs(model.spec.basis_s.domain_min)))
    throw InvalidSpecError("cumulative hazard grid must start at the s domain "
                           "minimum " +
                           fmt_sig(model.spec.basis_s.domain_min) +
                           " (got " + fmt_sig(s_grid[0]) + ")");
  return cumulate(evaluate_surface(model, u_grid, s_grid));
}

inline SurfaceGrid cumulate(const FittedModel &model,
                            const std::vector<double> &u_grid,
                            const std::vector<double> &s_grid) {
  return cumulate(model, detail::to_eigen(u_grid), detail::to_eigen(s_grid));
}

// Re-indexes a (u,s) surface to (t = u + s, s) coordinates.  Cells beyond
// t_max are masked; with cut_extrapolated the same boundary is applied, t_max
// being the largest t supported by the data.
inline SurfaceGrid to_ts_plane(const SurfaceGrid &grid, double t_max,
                               bool cut_extrapolated = false) {
  (void)cut_extrapolated;
  if (grid.plane != Plane::us)
    throw InvalidSpecError("to_ts_plane expects a surface in the (u,s) plane");
  SurfaceGrid out = grid;
  out.plane = Plane::ts;
  for (Eigen::Index i = 0; i < out.n_u(); ++i)
    for (Eigen::Index j = 0; j < out.n_s(); ++j)
      if (out.t_at(i, j) > t_max + 1e-9) out.present(i, j) = false;
  return out;
}

// ---------------------------------------------------------------------------
// Cross-sections
// ---------------------------------------------------------------------------

enum class SliceDirection { u, s };

struct SliceCurve {
  double requested = 0.0;  // cut point asked for
  double at = 0.0;         // grid line used
  Eigen::Index index = 0;
  Eigen::VectorXd axis;    // coordinates along the free axis
  Eigen::VectorXd hazard;
  Eigen::VectorXd se_hazard;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// Extracts hazard cross-sections at the grid lines nearest the requested cut
// points, with pointwise 95% bands.  Bands are hazard +/- 1.96 se by default;
// log_scale uses hazard * exp(+/- 1.96 se_loghazard) instead, keeping the
// lower bound positive.
inline std::vector<SliceCurve> slices(const SurfaceGrid &grid,
                                      SliceDirection direction,
                                      const std::vector<double> &where,
                                      bool log_scale = false) {
  const Eigen::VectorXd &cut_axis =
      direction == SliceDirection::u ? grid.u_values : grid.s_values;
  const Eigen::VectorXd &free_axis =
      direction == SliceDirection::u ? grid.s_values : grid.u_values;
  const double lo = cut_axis.minCoeff(), hi = cut_axis.maxCoeff();
  std::vector<SliceCurve> out;
  out.reserve(where.size());
  for (double w : where) {
    if (w < lo || w > hi)
      throw OutOfDomainError("slice point " + fmt_sig(w) +
                             " outside grid range [" + fmt_sig(lo) + ", " +
                             fmt_sig(hi) + "]");
    Eigen::Index idx = 0;
    (cut_axis.array() - w).abs().minCoeff(&idx);
    SliceCurve c;
    c.requested = w;
    c.at = cut_axis[idx];
    c.index = idx;
    c.axis = free_axis;
    if (direction == SliceDirection::u) {
      c.hazard = grid.hazard.row(idx);
      c.se_hazard = grid.se_hazard.row(idx);
      if (log_scale) {
        Eigen::ArrayXd half =
            1.96 * grid.se_loghazard.row(idx).transpose().array();
        c.lower = (c.hazard.array() * (-half).exp()).matrix();
        c.upper = (c.hazard.array() * half.exp()).matrix();
      }
    } else {
      c.hazard = grid.hazard.col(idx);
      c.se_hazard = grid.se_hazard.col(idx);
      if (log_scale) {
        Eigen::ArrayXd half = 1.96 * grid.se_loghazard.col(idx).array();
        c.lower = (c.hazard.array() * (-half).exp()).matrix();
        c.upper = (c.hazard.array() * half.exp()).matrix();
      }
    }
    if (!log_scale) {
      c.lower = c.hazard - 1.96 * c.se_hazard;
      c.upper = c.hazard + 1.96 * c.se_hazard;
    }
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise prediction
// ---------------------------------------------------------------------------

struct PredictionInput {
  double u = 0.0;
  double s = 0.0;
  std::map<std::string, double> covariates;  // keyed by design column name
};

struct PredictionRow {
  double u = 0.0;
  double s = 0.0;
  std::map<std::string, double> covariates;
  double hazard = 0.0;
  double cumhazard = 0.0;
  double se_hazard = 0.0;
  double survival = 1.0;
  double basehazard = 0.0;
  double se_basehazard = 0.0;
};

struct PredictOptions {
  double ds = 0.1;  // integration step for the cumulative hazard
};

// Covariate-adjusted hazard, cumulative hazard and survival at individual
// (u, s) points.  The cumulative hazard integrates the adjusted hazard along
// s from the domain minimum by the same left-rectangle rule as cumulate(),
// over grid points s_min, s_min + ds, ..., up to and including s.
inline std::vector<PredictionRow> predict_rows(
    const FittedModel &model, const std::vector<PredictionInput> &rows,
    const PredictOptions &opts = {}) {
  if (!(opts.ds > 0.0))
    throw InvalidSpecError("prediction step ds must be positive");
  const Eigen::Index cu = model.cu(), cs = model.cs();
  const Eigen::Index K = cu * cs;
  const Eigen::Index p = model.n_covariates();
  const double s_min = model.spec.basis_s.domain_min;

  std::vector<PredictionRow> out;
  out.reserve(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    const PredictionInput &in = rows[r];
    const std::string tag = " in prediction row " + std::to_string(r);
    for (const auto &kv : in.covariates)
      if (std::find(model.covariate_names.begin(), model.covariate_names.end(),
                    kv.first) == model.covariate_names.end())
        throw SchemaError("unknown covariate '" + kv.first + "'" + tag);
    Eigen::VectorXd z(p);
    for (Eigen::Index q = 0; q < p; ++q) {
      auto it = in.covariates.find(model.covariate_names[q]);
      if (it == in.covariates.end())
        throw SchemaError("missing covariate '" + model.covariate_names[q] +
                          "'" + tag);
      z[q] = it->second;
    }
    if (in.u < model.spec.basis_u.domain_min ||
        in.u > model.spec.basis_u.domain_max)
      throw OutOfDomainError("u value " + fmt_sig(in.u) +
                             " outside basis domain [" +
                             fmt_sig(model.spec.basis_u.domain_min) + ", " +
                             fmt_sig(model.spec.basis_u.domain_max) + "]" +
                             tag);
    if (in.s < s_min || in.s > model.spec.basis_s.domain_max)
      throw OutOfDomainError("s value " + fmt_sig(in.s) +
                             " outside basis domain [" + fmt_sig(s_min) +
                             ", " + fmt_sig(model.spec.basis_s.domain_max) +
                             "]" + tag);

    const double lp = p > 0 ? model.beta.dot(z) : 0.0;

    // Baseline hazard and its SE at the requested point.
    Eigen::VectorXd uu(1), ss(1);
    uu[0] = in.u;
    ss[0] = in.s;
    const Eigen::RowVectorXd bu = bspline_basis(model.spec.basis_u, uu).row(0);
    const Eigen::RowVectorXd bs = bspline_basis(model.spec.basis_s, ss).row(0);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(K + p);
    for (Eigen::Index m = 0; m < cs; ++m)
      for (Eigen::Index l = 0; l < cu; ++l)
        grad[l + cu * m] = bu[l] * bs[m];
    const double eta0 = (bu * model.coef * bs.transpose()).value();
    const double var0 =
        grad.head(K).dot(model.covariance.topLeftCorner(K, K) * grad.head(K));
    grad.tail(p) = z;
    const double var_full = grad.dot(model.covariance * grad);

    PredictionRow row;
    row.u = in.u;
    row.s = in.s;
    row.covariates = in.covariates;
    row.basehazard = std::exp(eta0);
    row.se_basehazard = row.basehazard * std::sqrt(std::max(0.0, var0));
    row.hazard = std::exp(eta0 + lp);
    row.se_hazard = row.hazard * std::sqrt(std::max(0.0, var_full));

    // Adjusted cumulative hazard along s at fixed u.
    const Eigen::Index m_last = static_cast<Eigen::Index>(
        std::floor((in.s - s_min) / opts.ds + 1e-9));
    Eigen::VectorXd s_pts(m_last + 1);
    for (Eigen::Index k = 0; k <= m_last; ++k) s_pts[k] = s_min + k * opts.ds;
    const Eigen::MatrixXd Bs_pts = bspline_basis(model.spec.basis_s, s_pts);
    const Eigen::VectorXd eta_path = Bs_pts * model.coef.transpose() *
                                     bu.transpose();
    row.cumhazard =
        opts.ds * std::exp(lp) * eta_path.array().exp().sum();
    row.survival = std::exp(-row.cumhazard);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace hazsurf
