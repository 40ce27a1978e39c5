#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hazsurf/binning.hpp"
#include "hazsurf/errors.hpp"
#include "hazsurf/estimator.hpp"
#include "hazsurf/surface.hpp"

namespace hazsurf {

// ---------------------------------------------------------------------------
// Cause-specific surfaces and cumulative incidence
// ---------------------------------------------------------------------------

struct CauseSurface {
  std::string cause;
  SurfaceGrid surface;  // must carry cumhazard for combination
};

struct CifBands {
  double level = 0.95;
  int n_reps = 0;     // replicates retained
  int n_dropped = 0;  // replicates dropped for failed fits
  std::vector<Eigen::MatrixXd> lower, upper;  // per cause
};

struct CifSet {
  std::vector<std::string> causes;
  Eigen::VectorXd u_values;
  Eigen::VectorXd s_values;
  Eigen::MatrixXd survival;           // overall survival exp(-sum of cumhazards)
  std::vector<Eigen::MatrixXd> cif;   // one matrix per cause
  std::optional<CifBands> bands;
};

namespace detail {

inline void check_cause_set(const std::vector<CauseSurface> &causes) {
  if (causes.empty())
    throw InvalidSpecError("at least one cause surface is required");
  std::set<std::string> names;
  for (const auto &c : causes) {
    if (!names.insert(c.cause).second)
      throw InvalidSpecError("duplicate cause name '" + c.cause + "'");
    if (!c.surface.cumulated())
      throw InvalidSpecError("cause '" + c.cause +
                             "' surface has no cumulative hazard; cumulate it "
                             "first");
    if (c.surface.plane != Plane::us)
      throw InvalidSpecError("cause '" + c.cause +
                             "' surface is not in the (u,s) plane");
  }
  const auto &ref = causes.front().surface;
  for (const auto &c : causes) {
    const auto &s = c.surface;
    if (s.n_u() != ref.n_u() || s.n_s() != ref.n_s() ||
        s.u_values != ref.u_values || s.s_values != ref.s_values)
      throw AlignmentError("cause '" + c.cause + "' and cause '" +
                           causes.front().cause +
                           "' are evaluated on different grids");
  }
}

// Type-7 quantile of an unsorted sample.
inline double quantile(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - lo) * (x[lo + 1] - x[lo]);
}

}  // namespace detail

// S(u,s) = exp(-sum_k Lambda_k(u,s)) over surfaces sharing one grid.
inline Eigen::MatrixXd overall_survival(
    const std::vector<CauseSurface> &causes) {
  detail::check_cause_set(causes);
  Eigen::MatrixXd total = *causes.front().surface.cumhazard;
  for (std::size_t k = 1; k < causes.size(); ++k)
    total += *causes[k].surface.cumhazard;
  return total.unaryExpr([](double x) { return std::exp(-x); });
}

// Cumulative incidence by the lagged rectangle rule:
//   CIF_k(u, s_j) = sum_{m<=j} lambda_k(u, s_m) * S(u, s_{m-1}) * ds
// with S(u, s_{-1}) = 1, so the first cell contributes lambda * 1 * ds.
inline CifSet cuminc(const std::vector<CauseSurface> &causes) {
  detail::check_cause_set(causes);
  const auto &ref = causes.front().surface;
  const double ds = detail::uniform_spacing(ref.s_values);
  const Eigen::Index nu = ref.n_u(), ns = ref.n_s();
  const Eigen::Index K = static_cast<Eigen::Index>(causes.size());

  CifSet out;
  out.u_values = ref.u_values;
  out.s_values = ref.s_values;
  out.survival = overall_survival(causes);
  out.cif.assign(K, Eigen::MatrixXd::Zero(nu, ns));
  for (Eigen::Index k = 0; k < K; ++k) out.causes.push_back(causes[k].cause);

  Eigen::VectorXd s_lag = Eigen::VectorXd::Ones(nu);
  for (Eigen::Index j = 0; j < ns; ++j) {
    for (Eigen::Index k = 0; k < K; ++k) {
      Eigen::VectorXd inc =
          causes[k].surface.hazard.col(j).cwiseProduct(s_lag) * ds;
      out.cif[k].col(j) = (j == 0 ? inc : Eigen::VectorXd(out.cif[k].col(j - 1) + inc));
    }
    s_lag = out.survival.col(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fitting cause-specific models from shared records
// ---------------------------------------------------------------------------

// One individual in a competing-risks data set; cause 0 is censoring, causes
// 1..K index the configured cause list.
struct CompetingRecord {
  double u = 0.0;
  double s_in = 0.0;
  double s_out = 0.0;
  int cause = 0;
};

struct CompetingConfig {
  BinGrid grid;                      // binning grid shared by all causes
  std::vector<std::string> causes;   // names for cause codes 1..K
  std::vector<ModelSpec> specs;      // one per cause
  std::vector<std::pair<double, double>> log10_rho;  // fixed per cause
  Eigen::VectorXd u_eval;            // evaluation grid for the CIFs
  Eigen::VectorXd s_eval;            // uniform, starting at the s domain min
  FitOptions fit;
};

namespace detail {

inline void check_competing_config(const CompetingConfig &cfg) {
  if (cfg.causes.empty()) throw InvalidSpecError("no causes configured");
  std::set<std::string> names(cfg.causes.begin(), cfg.causes.end());
  if (names.size() != cfg.causes.size())
    throw InvalidSpecError("duplicate cause name in configuration");
  if (cfg.specs.size() != cfg.causes.size() ||
      cfg.log10_rho.size() != cfg.causes.size())
    throw InvalidSpecError("causes, model specs and smoothing parameters "
                           "must have matching lengths");
}

}  // namespace detail

// Projects competing-risks records onto a single cause: events of that cause
// stay events, everything else is censored at exit.
inline BinnedData bin_cause(const std::vector<CompetingRecord> &records,
                            const BinGrid &grid, int cause_code,
                            int n_causes) {
  std::vector<IndividualRecord> recs;
  recs.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const CompetingRecord &cr = records[i];
    if (cr.cause < 0 || cr.cause > n_causes)
      throw SchemaError("record " + std::to_string(i) + " has cause code " +
                        std::to_string(cr.cause) + " outside 0.." +
                        std::to_string(n_causes));
    IndividualRecord r;
    r.u = cr.u;
    r.s_in = cr.s_in;
    r.s_out = cr.s_out;
    r.event = cr.cause == cause_code ? 1 : 0;
    recs.push_back(r);
  }
  return bin_records(recs, grid);
}

// Point estimate: fits each cause at its fixed smoothing parameters and
// combines the cumulated surfaces into a CifSet.
inline CifSet cuminc_from_records(const std::vector<CompetingRecord> &records,
                                  const CompetingConfig &cfg) {
  detail::check_competing_config(cfg);
  const int K = static_cast<int>(cfg.causes.size());
  std::vector<CauseSurface> surfaces;
  surfaces.reserve(K);
  for (int k = 0; k < K; ++k) {
    BinnedData d = bin_cause(records, cfg.grid, k + 1, K);
    FittedModel m = fit_at_rho(d, cfg.specs[k], cfg.log10_rho[k].first,
                               cfg.log10_rho[k].second, cfg.fit);
    surfaces.push_back({cfg.causes[k], cumulate(m, cfg.u_eval, cfg.s_eval)});
  }
  return cuminc(surfaces);
}

struct BootstrapOptions {
  int n_reps = 200;
  double level = 0.95;
  std::uint64_t seed = 1;
  double max_drop_frac = 0.10;
};

// Non-parametric bootstrap over individuals with the smoothing parameters
// held fixed at the configured values.  Replicates whose fits fail are
// dropped; more than max_drop_frac of them failing is an error.  The whole
// computation is determined by (records, cfg, opts.seed).
inline CifSet bootstrap_cif(const std::vector<CompetingRecord> &records,
                            const CompetingConfig &cfg,
                            const BootstrapOptions &opts = {}) {
  detail::check_competing_config(cfg);
  if (opts.n_reps < 2)
    throw InvalidSpecError("bootstrap needs at least 2 replicates");
  if (records.empty()) throw DegenerateDataError("no records to resample");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    throw InvalidSpecError("band level must lie strictly between 0 and 1");

  CifSet point = cuminc_from_records(records, cfg);
  const Eigen::Index K = static_cast<Eigen::Index>(cfg.causes.size());
  const Eigen::Index nu = point.survival.rows(), ns = point.survival.cols();

  std::mt19937_64 rng(opts.seed);
  const std::size_t n = records.size();
  std::vector<std::vector<Eigen::MatrixXd>> reps(K);
  int dropped = 0;
  std::vector<CompetingRecord> sample(n);
  for (int rep = 0; rep < opts.n_reps; ++rep) {
    for (std::size_t i = 0; i < n; ++i)
      sample[i] = records[static_cast<std::size_t>(rng() % n)];
    try {
      CifSet c = cuminc_from_records(sample, cfg);
      for (Eigen::Index k = 0; k < K; ++k)
        reps[k].push_back(std::move(c.cif[k]));
    } catch (const ConvergenceError &) {
      ++dropped;
    } catch (const DegenerateDataError &) {
      ++dropped;
    }
  }
  if (dropped == opts.n_reps || dropped > opts.max_drop_frac * opts.n_reps)
    throw BootstrapError(std::to_string(dropped) + " of " +
                         std::to_string(opts.n_reps) +
                         " bootstrap replicates failed to fit");

  CifBands bands;
  bands.level = opts.level;
  bands.n_reps = opts.n_reps - dropped;
  bands.n_dropped = dropped;
  const double p_lo = (1.0 - opts.level) / 2.0, p_hi = 1.0 - p_lo;
  std::vector<double> cell(static_cast<std::size_t>(bands.n_reps));
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::MatrixXd lo(nu, ns), hi(nu, ns);
    for (Eigen::Index i = 0; i < nu; ++i)
      for (Eigen::Index j = 0; j < ns; ++j) {
        for (int r = 0; r < bands.n_reps; ++r)
          cell[static_cast<std::size_t>(r)] = reps[k][r](i, j);
        lo(i, j) = detail::quantile(cell, p_lo);
        hi(i, j) = detail::quantile(cell, p_hi);
      }
    bands.lower.push_back(std::move(lo));
    bands.upper.push_back(std::move(hi));
  }
  point.bands = std::move(bands);
  return point;
}

}  // namespace hazsurf
