#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "hazsurf/errors.hpp"
#include "hazsurf/format.hpp"

namespace hazsurf {

using CovariateValue = std::variant<double, std::string>;

// One subject: entry age u on the first time scale, exposure window
// [s_in, s_out] on the second, event indicator at s_out.
struct IndividualRecord {
  double u = 0.0;
  double s_in = 0.0;
  double s_out = 0.0;
  int event = 0;
  std::map<std::string, CovariateValue> covariates;
};

// Rectangular Lexis grid.  Bins are half-open [lower, upper) except the
// last one on each axis, which is closed.
struct BinGrid {
  std::vector<double> edges_u;
  std::vector<double> edges_s;

  int n_u() const { return static_cast<int>(edges_u.size()) - 1; }
  int n_s() const { return static_cast<int>(edges_s.size()) - 1; }
  double du() const { return edges_u[1] - edges_u[0]; }
  double ds() const { return edges_s[1] - edges_s[0]; }

  std::vector<double> midpoints_u() const {
    std::vector<double> m(n_u());
    for (int k = 0; k < n_u(); ++k) m[k] = 0.5 * (edges_u[k] + edges_u[k + 1]);
    return m;
  }
  std::vector<double> midpoints_s() const {
    std::vector<double> m(n_s());
    for (int j = 0; j < n_s(); ++j) m[j] = 0.5 * (edges_s[j] + edges_s[j + 1]);
    return m;
  }

  int u_bin(double u) const {
    int k = static_cast<int>(std::floor((u - edges_u.front()) / du()));
    return std::clamp(k, 0, n_u() - 1);
  }
  // Bin receiving an event observed at exit time s: an exit exactly on an
  // interior edge belongs to the bin on its left.
  int event_s_bin(double s) const {
    int j = static_cast<int>(std::ceil((s - edges_s.front()) / ds())) - 1;
    return std::clamp(j, 0, n_s() - 1);
  }
};

namespace detail {
inline int bin_count(double lo, double hi, double width) {
  int n = static_cast<int>(std::ceil((hi - lo) / width - 1e-9));
  if (n < 1) n = 1;
  while (lo + n * width < hi - 1e-12 * std::max(1.0, std::abs(hi))) ++n;
  return n;
}
}  // namespace detail

// Bins of fixed width covering [min, max] on each axis; the last edge is
// the smallest multiple of the width at or beyond max.
inline BinGrid make_grid(double min_u, double max_u, double du, double min_s,
                         double max_s, double ds) {
  if (!(du > 0.0) || !(ds > 0.0))
    throw InvalidSpecError("bin widths must be positive (du = " + fmt_sig(du) +
                           ", ds = " + fmt_sig(ds) + ")");
  if (!(max_u > min_u) || !(max_s > min_s))
    throw InvalidSpecError("grid bounds must satisfy max > min");
  BinGrid g;
  const int nu = detail::bin_count(min_u, max_u, du);
  const int ns = detail::bin_count(min_s, max_s, ds);
  g.edges_u.resize(nu + 1);
  g.edges_s.resize(ns + 1);
  for (int k = 0; k <= nu; ++k) g.edges_u[k] = min_u + k * du;
  for (int j = 0; j <= ns; ++j) g.edges_s[j] = min_s + j * ds;
  return g;
}

// Per-subject slice through the grid: the subject sits in one u bin and
// contributes exposure to a contiguous run of s bins starting at s_first.
struct IndividualCells {
  int u_bin = 0;
  int s_first = 0;
  std::vector<double> exposure;
  int event_bin = -1;  // -1 when censored
};

struct BinnedData {
  BinGrid grid;
  Eigen::MatrixXd exposure;  // n_u x n_s, person-time R
  Eigen::MatrixXd events;    // n_u x n_s, event counts Y
  bool individual = false;
  std::vector<IndividualCells> cells;   // one per record when individual
  Eigen::MatrixXd covariates;           // n_records x p, dummy-coded
  std::vector<std::string> covariate_names;
  long n_records = 0;

  double total_exposure() const { return exposure.sum(); }
  double total_events() const { return events.sum(); }
};

namespace detail {

// Dummy coding plan for the requested covariates.  A covariate whose values
// are all numeric contributes one column; string-valued covariates are
// treated as factors with sorted levels, first level as reference.
struct CovariatePlan {
  struct Entry {
    std::string name;
    bool factor = false;
    std::vector<std::string> levels;  // factors only
  };
  std::vector<Entry> entries;
  std::vector<std::string> column_names;
};

inline CovariatePlan plan_covariates(const std::vector<IndividualRecord> &recs,
                                     const std::vector<std::string> &names) {
  CovariatePlan plan;
  for (const auto &name : names) {
    CovariatePlan::Entry e;
    e.name = name;
    std::set<std::string> levels;
    bool any_num = false, any_str = false;
    for (size_t i = 0; i < recs.size(); ++i) {
      auto it = recs[i].covariates.find(name);
      if (it == recs[i].covariates.end())
        throw SchemaError("record " + std::to_string(i) +
                          " missing covariate '" + name + "'");
      if (std::holds_alternative<double>(it->second)) {
        any_num = true;
      } else {
        any_str = true;
        levels.insert(std::get<std::string>(it->second));
      }
    }
    if (any_num && any_str)
      throw SchemaError("covariate '" + name +
                        "' mixes numeric and string values");
    e.factor = any_str;
    if (e.factor) {
      e.levels.assign(levels.begin(), levels.end());
      if (e.levels.size() < 2)
        throw SchemaError("factor covariate '" + name +
                          "' has a single level '" + e.levels.front() + "'");
      for (size_t l = 1; l < e.levels.size(); ++l)
        plan.column_names.push_back(name + "_" + e.levels[l]);
    } else {
      plan.column_names.push_back(name);
    }
    plan.entries.push_back(std::move(e));
  }
  return plan;
}

}  // namespace detail

// Bin subjects onto the grid.  Exposure in bin j is the length of the
// overlap of [s_in, s_out] with the bin; the event (if any) goes to
// event_s_bin(s_out).  With individual = true the per-subject slices are
// kept, which the covariate model needs; the aggregated arrays are always
// filled.
inline BinnedData bin_records(const std::vector<IndividualRecord> &records,
                              const BinGrid &grid, bool individual = false,
                              const std::vector<std::string> &covariate_names =
                                  {}) {
  BinnedData out;
  out.grid = grid;
  const int nu = grid.n_u(), ns = grid.n_s();
  out.exposure = Eigen::MatrixXd::Zero(nu, ns);
  out.events = Eigen::MatrixXd::Zero(nu, ns);
  out.individual = individual;
  out.n_records = static_cast<long>(records.size());

  const double u_lo = grid.edges_u.front(), u_hi = grid.edges_u.back();
  const double s_lo = grid.edges_s.front(), s_hi = grid.edges_s.back();

  detail::CovariatePlan plan =
      detail::plan_covariates(records, covariate_names);
  out.covariate_names = plan.column_names;
  const int p = static_cast<int>(plan.column_names.size());
  out.covariates = Eigen::MatrixXd::Zero(out.n_records, p);

  if (individual) out.cells.resize(records.size());

  for (size_t i = 0; i < records.size(); ++i) {
    const IndividualRecord &r = records[i];
    if (r.u < u_lo || r.u > u_hi)
      throw SchemaError("record " + std::to_string(i) + ": u = " +
                        fmt_sig(r.u) + " outside grid [" + fmt_sig(u_lo) +
                        ", " + fmt_sig(u_hi) + "]");
    if (r.s_in < s_lo || r.s_out > s_hi)
      throw SchemaError("record " + std::to_string(i) + ": [" +
                        fmt_sig(r.s_in) + ", " + fmt_sig(r.s_out) +
                        "] outside grid [" + fmt_sig(s_lo) + ", " +
                        fmt_sig(s_hi) + "]");
    if (!(r.s_out > r.s_in))
      throw SchemaError("record " + std::to_string(i) +
                        ": s_out must exceed s_in");
    if (r.event != 0 && r.event != 1)
      throw SchemaError("record " + std::to_string(i) + ": event must be 0/1");

    const int k = grid.u_bin(r.u);
    const int j0 = std::clamp(
        static_cast<int>(std::floor((r.s_in - s_lo) / grid.ds())), 0, ns - 1);
    const int j1 = grid.event_s_bin(r.s_out);  // last bin with any exposure
    IndividualCells cell;
    cell.u_bin = k;
    cell.s_first = j0;
    cell.exposure.resize(j1 - j0 + 1, 0.0);
    for (int j = j0; j <= j1; ++j) {
      const double lo = std::max(r.s_in, grid.edges_s[j]);
      const double hi = std::min(r.s_out, grid.edges_s[j + 1]);
      const double w = std::max(0.0, hi - lo);
      cell.exposure[j - j0] = w;
      out.exposure(k, j) += w;
    }
    if (r.event == 1) {
      cell.event_bin = j1;
      out.events(k, j1) += 1.0;
    }
    if (individual) out.cells[i] = std::move(cell);

    int col = 0;
    for (const auto &e : plan.entries) {
      const CovariateValue &v = r.covariates.at(e.name);
      if (e.factor) {
        const std::string &lev = std::get<std::string>(v);
        auto it = std::find(e.levels.begin(), e.levels.end(), lev);
        for (size_t l = 1; l < e.levels.size(); ++l, ++col)
          out.covariates(static_cast<long>(i), col) =
              (it - e.levels.begin() == static_cast<long>(l)) ? 1.0 : 0.0;
      } else {
        out.covariates(static_cast<long>(i), col++) = std::get<double>(v);
      }
    }
  }
  return out;
}

inline std::string summarize(const BinnedData &d) {
  std::ostringstream os;
  os << "Binned data:\n";
  os << "  u bins = " << d.grid.n_u() << " on [" << fmt_sig(d.grid.edges_u.front())
     << ", " << fmt_sig(d.grid.edges_u.back()) << "], width "
     << fmt_sig(d.grid.du()) << "\n";
  os << "  s bins = " << d.grid.n_s() << " on [" << fmt_sig(d.grid.edges_s.front())
     << ", " << fmt_sig(d.grid.edges_s.back()) << "], width "
     << fmt_sig(d.grid.ds()) << "\n";
  os << "  records = " << d.n_records << "\n";
  os << "  total exposure = " << fmt_sig(d.total_exposure()) << "\n";
  os << "  total events = " << fmt_sig(d.total_events()) << "\n";
  if (!d.covariate_names.empty()) {
    os << "  covariate columns:";
    for (const auto &n : d.covariate_names) os << " " << n;
    os << "\n";
  }
  return os.str();
}

}  // namespace hazsurf
