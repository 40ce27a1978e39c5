#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hazsurf/binning.hpp"
#include "hazsurf/competing.hpp"
#include "hazsurf/csv.hpp"
#include "hazsurf/errors.hpp"
#include "hazsurf/estimator.hpp"
#include "hazsurf/format.hpp"
#include "hazsurf/model_io.hpp"
#include "hazsurf/surface.hpp"
#include "hazsurf/svg_render.hpp"

namespace hazsurf::cli {

// Everything the commands read from the JSON config and/or command-line
// flags.  NaN limits mean "take from the data".
struct RunConfig {
  std::string input;
  std::string col_u = "u";
  std::string col_s_in;  // empty: entry at s = 0
  std::string col_s_out = "s";
  std::string col_event = "event";
  std::string col_cause = "cause";
  std::vector<std::string> covariates;

  double du = 1.0, ds = 1.0;
  double min_u = std::numeric_limits<double>::quiet_NaN();
  double max_u = std::numeric_limits<double>::quiet_NaN();
  double min_s = std::numeric_limits<double>::quiet_NaN();
  double max_s = std::numeric_limits<double>::quiet_NaN();

  int nseg_u = 10, nseg_s = 10, bdeg = 3, pord = 2;
  std::string method = "numeric";   // grid | numeric
  std::string criterion = "aic";
  std::vector<double> start{0.0, 0.0};  // log10 rho starting pair
  std::vector<double> grid_u, grid_s;   // grid-method log10 rho values
  int max_iter = 50;

  std::string out_dir = ".";
  std::uint64_t seed = 1;
};

namespace detail {

using hazsurf::json;

// Config key -> the command-line options bound to it (one per subcommand
// that exposes the key), so the merge can tell which values were given
// explicitly.  Flags win over the config file.
struct OptMap {
  std::map<std::string, std::vector<CLI::Option *>> m;
  CLI::Option *put(const std::string &key, CLI::Option *o) {
    m[key].push_back(o);
    return o;
  }
  bool given(const std::string &key) const {
    auto it = m.find(key);
    if (it == m.end()) return false;
    for (const CLI::Option *o : it->second)
      if (o->count() > 0) return true;
    return false;
  }
};

struct ConfigMerge {
  const json *config = nullptr;
  const OptMap *opts = nullptr;

  template <typename T>
  void bind(const char *key, T &dst) const {
    if (!config) return;
    if (opts->given(key)) return;  // flag given: it wins
    auto it = config->find(key);
    if (it == config->end()) return;
    try {
      dst = it->template get<T>();
    } catch (const json::exception &e) {
      throw SchemaError(std::string("config field '") + key +
                        "': " + e.what());
    }
  }
};

inline json load_config(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error &e) {
    throw SchemaError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_object())
    throw SchemaError(path + ": config must be a JSON object");
  return j;
}

inline void merge_common(const ConfigMerge &cm, RunConfig &rc) {
  cm.bind("input", rc.input);
  cm.bind("col_u", rc.col_u);
  cm.bind("col_s_in", rc.col_s_in);
  cm.bind("col_s_out", rc.col_s_out);
  cm.bind("col_event", rc.col_event);
  cm.bind("col_cause", rc.col_cause);
  cm.bind("covariates", rc.covariates);
  cm.bind("du", rc.du);
  cm.bind("ds", rc.ds);
  cm.bind("min_u", rc.min_u);
  cm.bind("max_u", rc.max_u);
  cm.bind("min_s", rc.min_s);
  cm.bind("max_s", rc.max_s);
  cm.bind("nseg_u", rc.nseg_u);
  cm.bind("nseg_s", rc.nseg_s);
  cm.bind("bdeg", rc.bdeg);
  cm.bind("pord", rc.pord);
  cm.bind("method", rc.method);
  cm.bind("criterion", rc.criterion);
  cm.bind("start", rc.start);
  cm.bind("grid_u", rc.grid_u);
  cm.bind("grid_s", rc.grid_s);
  cm.bind("max_iter", rc.max_iter);
  cm.bind("out", rc.out_dir);
  cm.bind("seed", rc.seed);
}

inline bool is_number(const std::string &s) {
  if (s.empty()) return false;
  char *end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

inline std::filesystem::path out_file(const RunConfig &rc,
                                      const std::string &name) {
  std::error_code ec;
  std::filesystem::create_directories(rc.out_dir, ec);
  if (ec)
    throw IoError("cannot create output directory '" + rc.out_dir +
                  "': " + ec.message());
  return std::filesystem::path(rc.out_dir) / name;
}

// ---------------------------------------------------------------------------
// CSV -> records
// ---------------------------------------------------------------------------

inline int event_indicator(const CsvTable &t, std::size_t row, int col) {
  const double v = parse_csv_double(t, row, col);
  if (v != 0.0 && v != 1.0)
    throw SchemaError("row " + std::to_string(row) + ", column '" +
                      t.header[static_cast<std::size_t>(col)] +
                      "': event indicator must be 0 or 1, found '" +
                      t.rows[row][static_cast<std::size_t>(col)] + "'");
  return static_cast<int>(v);
}

inline std::vector<IndividualRecord> records_from_csv(const CsvTable &t,
                                                      const RunConfig &rc) {
  const int c_u = t.require_column(rc.col_u);
  const int c_out = t.require_column(rc.col_s_out);
  const int c_ev = t.require_column(rc.col_event);
  const int c_in = rc.col_s_in.empty() ? -1 : t.require_column(rc.col_s_in);

  struct Cov {
    std::string name;
    int col;
    bool numeric;
  };
  std::vector<Cov> covs;
  for (const auto &name : rc.covariates) {
    Cov c{name, t.require_column(name), true};
    for (std::size_t r = 0; r < t.n_rows() && c.numeric; ++r)
      c.numeric = is_number(t.rows[r][static_cast<std::size_t>(c.col)]);
    covs.push_back(c);
  }

  std::vector<IndividualRecord> recs;
  recs.reserve(t.n_rows());
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    IndividualRecord rec;
    rec.u = parse_csv_double(t, r, c_u);
    rec.s_out = parse_csv_double(t, r, c_out);
    rec.s_in = c_in >= 0 ? parse_csv_double(t, r, c_in) : 0.0;
    rec.event = event_indicator(t, r, c_ev);
    for (const auto &c : covs) {
      const std::string &cell = t.rows[r][static_cast<std::size_t>(c.col)];
      if (c.numeric)
        rec.covariates[c.name] = parse_csv_double(t, r, c.col);
      else if (cell.empty())
        throw SchemaError("row " + std::to_string(r) + ", column '" + c.name +
                          "': empty covariate value");
      else
        rec.covariates[c.name] = cell;
    }
    recs.push_back(std::move(rec));
  }
  return recs;
}

inline std::vector<CompetingRecord> competing_records_from_csv(
    const CsvTable &t, const RunConfig &rc,
    const std::vector<std::string> &causes) {
  const int c_u = t.require_column(rc.col_u);
  const int c_out = t.require_column(rc.col_s_out);
  const int c_cause = t.require_column(rc.col_cause);
  const int c_in = rc.col_s_in.empty() ? -1 : t.require_column(rc.col_s_in);
  const int K = static_cast<int>(causes.size());

  std::vector<CompetingRecord> recs;
  recs.reserve(t.n_rows());
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    CompetingRecord rec;
    rec.u = parse_csv_double(t, r, c_u);
    rec.s_out = parse_csv_double(t, r, c_out);
    rec.s_in = c_in >= 0 ? parse_csv_double(t, r, c_in) : 0.0;
    const std::string &cell = t.rows[r][static_cast<std::size_t>(c_cause)];
    if (cell.empty()) {
      rec.cause = 0;  // censored
    } else if (is_number(cell)) {
      const double v = parse_csv_double(t, r, c_cause);
      if (v != std::floor(v) || v < 0.0 || v > K)
        throw SchemaError("row " + std::to_string(r) + ", column '" +
                          rc.col_cause + "': cause code must be an integer "
                          "in 0.." + std::to_string(K) + ", found '" + cell +
                          "'");
      rec.cause = static_cast<int>(v);
    } else {
      const auto it = std::find(causes.begin(), causes.end(), cell);
      if (it == causes.end())
        throw SchemaError("row " + std::to_string(r) + ", column '" +
                          rc.col_cause + "': unknown cause '" + cell + "'");
      rec.cause = static_cast<int>(it - causes.begin()) + 1;
    }
    recs.push_back(rec);
  }
  return recs;
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

inline BinnedData bin_from_csv(const RunConfig &rc) {
  if (rc.input.empty()) throw InvalidSpecError("no input file given");
  const CsvTable t = read_csv_file(rc.input);
  const std::vector<IndividualRecord> recs = records_from_csv(t, rc);
  if (recs.empty()) throw DegenerateDataError(rc.input + ": no records");

  auto limit = [](double configured, double fallback) {
    return std::isnan(configured) ? fallback : configured;
  };
  double u_lo = recs[0].u, u_hi = recs[0].u;
  double s_lo = recs[0].s_in, s_hi = recs[0].s_out;
  for (const auto &r : recs) {
    u_lo = std::min(u_lo, r.u);
    u_hi = std::max(u_hi, r.u);
    s_lo = std::min(s_lo, r.s_in);
    s_hi = std::max(s_hi, r.s_out);
  }
  const BinGrid grid =
      make_grid(limit(rc.min_u, u_lo), limit(rc.max_u, u_hi), rc.du,
                limit(rc.min_s, s_lo), limit(rc.max_s, s_hi), rc.ds);
  return bin_records(recs, grid, !rc.covariates.empty(), rc.covariates);
}

inline ModelSpec spec_for_grid(const BinGrid &g, const RunConfig &rc) {
  ModelSpec spec;
  spec.basis_u =
      make_basis(g.edges_u.front(), g.edges_u.back(), rc.nseg_u, rc.bdeg);
  spec.basis_s =
      make_basis(g.edges_s.front(), g.edges_s.back(), rc.nseg_s, rc.bdeg);
  spec.pord = rc.pord;
  return spec;
}

inline Eigen::VectorXd eval_axis(double lo, double hi, double step) {
  if (!(step > 0.0))
    throw InvalidSpecError("evaluation step must be positive (got " +
                           fmt_sig(step) + ")");
  const auto n =
      static_cast<Eigen::Index>(std::floor((hi - lo) / step + 1e-9)) + 1;
  Eigen::VectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = lo + static_cast<double>(k) * step;
  return v;
}

inline std::string safe_name(const std::string &s) {
  std::string o = s;
  for (char &c : o)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_')
      c = '_';
  return o.empty() ? "_" : o;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_prepare(const RunConfig &rc, std::ostream &out) {
  const BinnedData d = bin_from_csv(rc);
  const auto path = out_file(rc, "binned.json");
  save_binned(path.string(), d);
  out << summarize(d);
  out << "wrote " << path.string() << "\n";
  return 0;
}

struct FitArgs {
  std::string data;     // prepared binned.json; empty -> bin rc.input
  double eval_du = 0.0;  // surface evaluation spacing; 0: binning widths
  double eval_ds = 0.0;
};

inline int cmd_fit(const RunConfig &rc, const FitArgs &fa, std::ostream &out) {
  if (rc.start.size() != 2)
    throw InvalidSpecError("start must be a pair of log10 smoothing values");
  const BinnedData d =
      fa.data.empty() ? bin_from_csv(rc) : load_binned(fa.data);
  const ModelSpec spec = spec_for_grid(d.grid, rc);
  FitOptions fo;
  fo.max_iter = rc.max_iter;
  const Criterion crit = parse_criterion(rc.criterion);

  FittedModel m;
  SelectionInfo sel;
  sel.criterion = rc.criterion;
  if (rc.method == "grid") {
    const std::vector<double> gu =
        rc.grid_u.empty() ? std::vector<double>{rc.start[0]} : rc.grid_u;
    const std::vector<double> gs =
        rc.grid_s.empty() ? std::vector<double>{rc.start[1]} : rc.grid_s;
    RhoSearchResult r = select_rho_grid(d, spec, gu, gs, crit, fo);
    m = std::move(r.best);
    sel.method = "grid";
    sel.evals = static_cast<int>(r.table.size());
  } else if (rc.method == "numeric") {
    int evals = 0;
    m = select_rho_numeric(d, spec, {rc.start[0], rc.start[1]}, crit, fo,
                           rho_search_options(), &evals);
    sel.method = "numeric";
    sel.evals = evals;
  } else {
    throw InvalidSpecError("unknown selection method '" + rc.method +
                           "' (want grid or numeric)");
  }

  const auto path = out_file(rc, "model.json");
  save_model(path.string(), m, sel);

  // Baseline surface over the basis domain, cumulated so downstream render
  // can color any field.
  const double edu = fa.eval_du > 0.0 ? fa.eval_du : d.grid.du();
  const double eds = fa.eval_ds > 0.0 ? fa.eval_ds : d.grid.ds();
  const SurfaceGrid surf = cumulate(
      m, eval_axis(spec.basis_u.domain_min, spec.basis_u.domain_max, edu),
      eval_axis(spec.basis_s.domain_min, spec.basis_s.domain_max, eds));
  const auto surf_path = out_file(rc, "surface.csv");
  save_surface_grid(surf_path.string(), surf);

  out << summarize_fit(m);
  out << "wrote " << path.string() << "\n";
  out << "wrote " << surf_path.string() << "\n";
  return 0;
}

struct PredictArgs {
  std::string model;
  std::string newdata;
  double step = 0.1;
};

inline int cmd_predict(const RunConfig &rc, const PredictArgs &pa,
                       std::ostream &out) {
  if (pa.model.empty()) throw InvalidSpecError("predict needs --model");
  if (pa.newdata.empty()) throw InvalidSpecError("predict needs --newdata");
  const FittedModel m = load_model(pa.model);
  const CsvTable t = read_csv_file(pa.newdata);
  const int c_u = t.require_column(rc.col_u);
  const int c_s = t.require_column(rc.col_s_out);
  std::vector<int> c_cov;
  for (const auto &name : m.covariate_names)
    c_cov.push_back(t.require_column(name));

  std::vector<PredictionInput> in;
  in.reserve(t.n_rows());
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    PredictionInput pi;
    pi.u = parse_csv_double(t, r, c_u);
    pi.s = parse_csv_double(t, r, c_s);
    for (std::size_t q = 0; q < c_cov.size(); ++q)
      pi.covariates[m.covariate_names[q]] = parse_csv_double(t, r, c_cov[q]);
    in.push_back(std::move(pi));
  }
  PredictOptions po;
  po.ds = pa.step;
  const std::vector<PredictionRow> rows = predict_rows(m, in, po);

  CsvTable o;
  o.header = {rc.col_u, rc.col_s_out};
  for (const auto &name : m.covariate_names) o.header.push_back(name);
  for (const char *name : {"hazard", "cumhazard", "se_hazard", "survival",
                           "basehazard", "se_basehazard"})
    o.header.emplace_back(name);
  for (const auto &row : rows) {
    std::vector<std::string> cells{fmt_full(row.u), fmt_full(row.s)};
    for (const auto &name : m.covariate_names)
      cells.push_back(fmt_full(row.covariates.at(name)));
    for (double v : {row.hazard, row.cumhazard, row.se_hazard, row.survival,
                     row.basehazard, row.se_basehazard})
      cells.push_back(fmt_full(v));
    o.rows.push_back(std::move(cells));
  }
  const auto path = out_file(rc, "predictions.csv");
  write_csv_file(path.string(), o);
  out << "predictions: " << rows.size() << " rows\n";
  out << "wrote " << path.string() << "\n";
  return 0;
}

struct CifArgs {
  std::vector<std::string> models;  // NAME=PATH or PATH (stem names the cause)
  double eval_du = 0.0;             // 0: binning grid widths
  double eval_ds = 0.0;
  int reps = 0;
  double level = 0.95;
  double max_drop_frac = 0.10;
};

inline int cmd_cif(const RunConfig &rc, const CifArgs &ca, std::ostream &out) {
  if (ca.models.size() < 2)
    throw InvalidSpecError("cif needs at least two cause model files");

  std::vector<std::string> causes;
  std::vector<FittedModel> models;
  for (const auto &entry : ca.models) {
    const auto eq = entry.find('=');
    std::string name, path;
    if (eq == std::string::npos) {
      path = entry;
      name = std::filesystem::path(entry).stem().string();
    } else {
      name = entry.substr(0, eq);
      path = entry.substr(eq + 1);
    }
    if (std::find(causes.begin(), causes.end(), name) != causes.end())
      throw InvalidSpecError("duplicate cause name '" + name + "'");
    causes.push_back(name);
    models.push_back(load_model(path));
  }
  for (std::size_t k = 1; k < models.size(); ++k)
    if (models[k].grid.edges_u != models[0].grid.edges_u ||
        models[k].grid.edges_s != models[0].grid.edges_s)
      throw AlignmentError("cause '" + causes[k] +
                           "' was fit on a different grid");

  const BinGrid &grid = models[0].grid;
  const double edu = ca.eval_du > 0.0 ? ca.eval_du : grid.du();
  const double eds = ca.eval_ds > 0.0 ? ca.eval_ds : grid.ds();
  const MarginalBasis &bu = models[0].spec.basis_u;
  const MarginalBasis &bs = models[0].spec.basis_s;
  const Eigen::VectorXd u_eval =
      detail::eval_axis(bu.domain_min, bu.domain_max, edu);
  const Eigen::VectorXd s_eval =
      detail::eval_axis(bs.domain_min, bs.domain_max, eds);

  std::vector<CauseSurface> surfaces;
  for (std::size_t k = 0; k < models.size(); ++k)
    surfaces.push_back({causes[k], cumulate(models[k], u_eval, s_eval)});
  CifSet cs = cuminc(surfaces);

  if (ca.reps > 0) {
    if (rc.input.empty())
      throw InvalidSpecError(
          "bootstrap bands need the original records (--input)");
    CompetingConfig ccfg;
    ccfg.grid = grid;
    ccfg.causes = causes;
    for (const auto &m : models) {
      ccfg.specs.push_back(m.spec);
      ccfg.log10_rho.emplace_back(m.penalty.log10_rho_u,
                                  m.penalty.log10_rho_s);
    }
    ccfg.u_eval = u_eval;
    ccfg.s_eval = s_eval;
    ccfg.fit.max_iter = rc.max_iter;
    const CsvTable t = read_csv_file(rc.input);
    const std::vector<CompetingRecord> recs =
        competing_records_from_csv(t, rc, causes);
    BootstrapOptions bo;
    bo.n_reps = ca.reps;
    bo.level = ca.level;
    bo.seed = rc.seed;
    bo.max_drop_frac = ca.max_drop_frac;
    const CifSet booted = bootstrap_cif(recs, ccfg, bo);
    cs.bands = booted.bands;
  }

  json meta;
  meta["type"] = "hazsurf-cif";
  meta["version"] = 1;
  meta["causes"] = causes;
  meta["u_values"] = std::vector<double>(
      cs.u_values.data(), cs.u_values.data() + cs.u_values.size());
  meta["s_values"] = std::vector<double>(
      cs.s_values.data(), cs.s_values.data() + cs.s_values.size());
  json files = json::object();

  const bool bands = cs.bands.has_value();
  for (std::size_t k = 0; k < causes.size(); ++k) {
    CsvTable o;
    o.header = {"u", "s", "cif"};
    if (bands) {
      o.header.emplace_back("lower");
      o.header.emplace_back("upper");
    }
    for (Eigen::Index i = 0; i < cs.u_values.size(); ++i)
      for (Eigen::Index j = 0; j < cs.s_values.size(); ++j) {
        std::vector<std::string> cells{fmt_full(cs.u_values[i]),
                                       fmt_full(cs.s_values[j]),
                                       fmt_full(cs.cif[k](i, j))};
        if (bands) {
          cells.push_back(fmt_full(cs.bands->lower[k](i, j)));
          cells.push_back(fmt_full(cs.bands->upper[k](i, j)));
        }
        o.rows.push_back(std::move(cells));
      }
    const std::string fname = "cif_" + safe_name(causes[k]) + ".csv";
    write_csv_file(out_file(rc, fname).string(), o);
    files[causes[k]] = fname;
  }
  meta["files"] = files;

  CsvTable sv;
  sv.header = {"u", "s", "survival"};
  for (Eigen::Index i = 0; i < cs.u_values.size(); ++i)
    for (Eigen::Index j = 0; j < cs.s_values.size(); ++j)
      sv.rows.push_back({fmt_full(cs.u_values[i]), fmt_full(cs.s_values[j]),
                         fmt_full(cs.survival(i, j))});
  write_csv_file(out_file(rc, "survival.csv").string(), sv);
  meta["survival_file"] = "survival.csv";

  if (bands) {
    meta["bands"] = {{"level", cs.bands->level},
                     {"n_reps", cs.bands->n_reps},
                     {"n_dropped", cs.bands->n_dropped},
                     {"seed", rc.seed},
                     {"note", "smoothing parameters held fixed at each "
                              "cause's fitted values"}};
  }
  const auto meta_path = out_file(rc, "cif.meta.json");
  hazsurf::detail::write_json_file(meta_path.string(), meta);

  out << "causes:";
  for (const auto &c : causes) out << " " << c;
  out << "\n";
  out << "evaluation grid: " << cs.u_values.size() << " x "
      << cs.s_values.size() << "\n";
  const Eigen::Index last = cs.s_values.size() - 1;
  for (std::size_t k = 0; k < causes.size(); ++k)
    out << "  CIF(" << causes[k] << ") at s = " << fmt_sig(cs.s_values[last])
        << ": " << fmt_sig(cs.cif[k].col(last).minCoeff()) << " .. "
        << fmt_sig(cs.cif[k].col(last).maxCoeff()) << "\n";
  if (bands)
    out << "bands: level " << fmt_sig(cs.bands->level) << ", "
        << cs.bands->n_reps << " replicates kept, " << cs.bands->n_dropped
        << " dropped\n";
  out << "wrote " << meta_path.string() << "\n";
  return 0;
}

struct RenderArgs {
  std::string grid;
  RenderOptions options;
  double tmax = std::numeric_limits<double>::quiet_NaN();
  bool cut_extrapolated = false;
};

inline int cmd_render(const RunConfig &rc, const RenderArgs &ra,
                      std::ostream &out) {
  if (ra.grid.empty()) throw InvalidSpecError("render needs --grid");
  SurfaceGrid g = load_surface_grid(ra.grid);
  if (!std::isnan(ra.tmax)) g = to_ts_plane(g, ra.tmax, ra.cut_extrapolated);
  const std::string svg = render_svg(g, ra.options);
  const std::string stem = std::filesystem::path(ra.grid).stem().string();
  const auto path = out_file(rc, stem + ".svg");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << svg;
  if (!f) throw IoError("write to '" + path.string() + "' failed");
  out << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace detail

// Entry point shared by the binary and the tests.  Returns the process exit
// code: 0 success, 2 specification/schema error, 3 numerical failure,
// 4 I/O failure.
inline int run(std::vector<std::string> args, std::ostream &out,
               std::ostream &err) {
  RunConfig rc;
  std::string config_path;
  detail::OptMap om;

  CLI::App app{"Hazard surfaces over two time scales", "hazsurf"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App *sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    om.put("out", sub->add_option("--out", rc.out_dir, "output directory"));
    om.put("seed", sub->add_option("--seed", rc.seed, "random seed"));
  };
  auto add_input = [&](CLI::App *sub) {
    om.put("input", sub->add_option("--input", rc.input, "input CSV file"));
    om.put("col_u", sub->add_option("--col-u", rc.col_u,
                                    "column with the first-scale entry time"));
    om.put("col_s_in",
           sub->add_option("--col-s-in", rc.col_s_in,
                           "column with the second-scale entry time"));
    om.put("col_s_out", sub->add_option("--col-s-out", rc.col_s_out,
                                        "column with the exit time"));
  };
  auto add_binning = [&](CLI::App *sub) {
    om.put("col_event", sub->add_option("--col-event", rc.col_event,
                                        "column with the event indicator"));
    om.put("covariates",
           sub->add_option("--covariates", rc.covariates,
                           "covariate columns for the proportional model"));
    om.put("du", sub->add_option("--du", rc.du, "bin width on the u axis"));
    om.put("ds", sub->add_option("--ds", rc.ds, "bin width on the s axis"));
    om.put("min_u", sub->add_option("--min-u", rc.min_u, "u axis lower limit"));
    om.put("max_u", sub->add_option("--max-u", rc.max_u, "u axis upper limit"));
    om.put("min_s", sub->add_option("--min-s", rc.min_s, "s axis lower limit"));
    om.put("max_s", sub->add_option("--max-s", rc.max_s, "s axis upper limit"));
  };

  CLI::App *prep = app.add_subcommand("prepare", "bin records onto the grid");
  add_common(prep);
  add_input(prep);
  add_binning(prep);

  detail::FitArgs fa;
  CLI::App *fit = app.add_subcommand("fit", "fit the hazard surface");
  add_common(fit);
  add_input(fit);
  add_binning(fit);
  om.put("data", fit->add_option("--data", fa.data, "prepared binned file"));
  om.put("nseg_u", fit->add_option("--nseg-u", rc.nseg_u,
                                   "basis segments on the u axis"));
  om.put("nseg_s", fit->add_option("--nseg-s", rc.nseg_s,
                                   "basis segments on the s axis"));
  om.put("bdeg", fit->add_option("--bdeg", rc.bdeg, "B-spline degree"));
  om.put("pord", fit->add_option("--pord", rc.pord, "penalty order"));
  om.put("method", fit->add_option("--method", rc.method,
                                   "smoothing selection: grid or numeric"));
  om.put("criterion", fit->add_option("--criterion", rc.criterion,
                                      "selection criterion: aic or bic"));
  om.put("start", fit->add_option("--start", rc.start,
                                  "starting log10 smoothing pair")
                      ->expected(2));
  om.put("grid_u", fit->add_option("--grid-u", rc.grid_u,
                                   "log10 smoothing grid, u axis"));
  om.put("grid_s", fit->add_option("--grid-s", rc.grid_s,
                                   "log10 smoothing grid, s axis"));
  om.put("max_iter",
         fit->add_option("--max-iter", rc.max_iter, "IWLS iteration cap"));
  om.put("eval_du", fit->add_option("--eval-du", fa.eval_du,
                                    "surface evaluation spacing, u axis"));
  om.put("eval_ds", fit->add_option("--eval-ds", fa.eval_ds,
                                    "surface evaluation spacing, s axis"));

  detail::PredictArgs pa;
  CLI::App *pred = app.add_subcommand("predict", "predict at new data points");
  add_common(pred);
  om.put("model", pred->add_option("--model", pa.model, "model file"));
  om.put("newdata",
         pred->add_option("--newdata", pa.newdata, "CSV of (u, s) points"));
  om.put("step", pred->add_option("--step", pa.step,
                                  "integration step for cumulative hazards"));
  om.put("col_u", pred->add_option("--col-u", rc.col_u,
                                   "newdata column with u values"));
  om.put("col_s_out", pred->add_option("--col-s-out", rc.col_s_out,
                                       "newdata column with s values"));

  detail::CifArgs ca;
  CLI::App *cif =
      app.add_subcommand("cif", "cumulative incidence from cause models");
  add_common(cif);
  add_input(cif);
  om.put("col_cause", cif->add_option("--col-cause", rc.col_cause,
                                      "column with the cause of failure"));
  om.put("models", cif->add_option("--model", ca.models,
                                   "cause model file, NAME=PATH or PATH"));
  om.put("eval_du", cif->add_option("--eval-du", ca.eval_du,
                                    "evaluation spacing on the u axis"));
  om.put("eval_ds", cif->add_option("--eval-ds", ca.eval_ds,
                                    "evaluation spacing on the s axis"));
  om.put("reps", cif->add_option("--reps", ca.reps,
                                 "bootstrap replicates (0: no bands)"));
  om.put("level", cif->add_option("--level", ca.level, "band level"));
  om.put("max_drop_frac",
         cif->add_option("--max-drop-frac", ca.max_drop_frac,
                         "largest tolerated fraction of failed replicates"));
  om.put("max_iter",
         cif->add_option("--max-iter", rc.max_iter, "IWLS iteration cap"));

  detail::RenderArgs ra;
  CLI::App *rend = app.add_subcommand("render", "render a grid file as SVG");
  add_common(rend);
  om.put("grid", rend->add_option("--grid", ra.grid, "grid CSV file"));
  om.put("value", rend->add_option("--value", ra.options.value,
                                   "surface field to color"));
  om.put("palette", rend->add_option("--palette", ra.options.palette,
                                     "color palette: viridis or grays"));
  om.put("levels", rend->add_option("--levels", ra.options.contour_levels,
                                    "explicit contour levels"));
  om.put("n_contours", rend->add_option("--n-contours", ra.options.n_contours,
                                        "automatic contour count"));
  om.put("tmax", rend->add_option("--tmax", ra.tmax,
                                  "convert to the (t, s) plane, masking "
                                  "t beyond this value"));
  om.put("cut_extrapolated",
         rend->add_flag("--cut-extrapolated", ra.cut_extrapolated,
                        "also drop cells the ts conversion extrapolates"));
  om.put("title", rend->add_option("--title", ra.options.title, "plot title"));
  om.put("x_label",
         rend->add_option("--x-label", ra.options.x_label, "x axis label"));
  om.put("y_label",
         rend->add_option("--y-label", ra.options.y_label, "y axis label"));

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp &) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    json config;
    if (!config_path.empty()) {
      config = detail::load_config(config_path);
      detail::ConfigMerge cm{&config, &om};
      detail::merge_common(cm, rc);
      cm.bind("data", fa.data);
      cm.bind("eval_du", fa.eval_du);
      cm.bind("eval_ds", fa.eval_ds);
      cm.bind("model", pa.model);
      cm.bind("newdata", pa.newdata);
      cm.bind("step", pa.step);
      cm.bind("models", ca.models);
      cm.bind("eval_du", ca.eval_du);
      cm.bind("eval_ds", ca.eval_ds);
      cm.bind("reps", ca.reps);
      cm.bind("level", ca.level);
      cm.bind("max_drop_frac", ca.max_drop_frac);
      cm.bind("grid", ra.grid);
      cm.bind("value", ra.options.value);
      cm.bind("palette", ra.options.palette);
      cm.bind("levels", ra.options.contour_levels);
      cm.bind("n_contours", ra.options.n_contours);
      cm.bind("tmax", ra.tmax);
      cm.bind("cut_extrapolated", ra.cut_extrapolated);
      cm.bind("title", ra.options.title);
      cm.bind("x_label", ra.options.x_label);
      cm.bind("y_label", ra.options.y_label);
    }

    if (app.got_subcommand(prep)) return detail::cmd_prepare(rc, out);
    if (app.got_subcommand(fit)) return detail::cmd_fit(rc, fa, out);
    if (app.got_subcommand(pred)) return detail::cmd_predict(rc, pa, out);
    if (app.got_subcommand(cif)) return detail::cmd_cif(rc, ca, out);
    if (app.got_subcommand(rend)) return detail::cmd_render(rc, ra, out);
    err << "error: no command given\n";
    return 2;
  } catch (const InvalidSpecError &e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const OutOfDomainError &e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const SchemaError &e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError &e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error &e) {  // convergence, degenerate data, search, bootstrap
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace hazsurf::cli
