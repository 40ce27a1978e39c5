#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hazsurf/binning.hpp"
#include "hazsurf/csv.hpp"
#include "hazsurf/errors.hpp"
#include "hazsurf/estimator.hpp"
#include "hazsurf/format.hpp"
#include "hazsurf/surface.hpp"

namespace hazsurf {

using json = nlohmann::json;

namespace detail {

inline json matrix_to_json(const Eigen::MatrixXd &m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(m.data(), m.data() + m.size());
  j["data"] = data;  // column-major
  return j;
}

inline const json &json_field(const json &j, const char *key,
                              const std::string &where) {
  auto it = j.find(key);
  if (it == j.end())
    throw SchemaError(where + ": missing field '" + key + "'");
  return *it;
}

inline Eigen::MatrixXd matrix_from_json(const json &j,
                                        const std::string &where) {
  const Eigen::Index rows = json_field(j, "rows", where).get<Eigen::Index>();
  const Eigen::Index cols = json_field(j, "cols", where).get<Eigen::Index>();
  const auto data = json_field(j, "data", where).get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw SchemaError(where + ": matrix data length " +
                      std::to_string(data.size()) + " does not match " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

inline json parse_json_file(const std::string &path, const char *expect_type) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error &e) {
    throw SchemaError(path + ": invalid JSON: " + e.what());
  }
  const auto type = json_field(j, "type", path).get<std::string>();
  if (type != expect_type)
    throw SchemaError(path + ": expected a '" + std::string(expect_type) +
                      "' artifact, found '" + type + "'");
  return j;
}

inline void write_json_file(const std::string &path, const json &j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline json basis_to_json(const MarginalBasis &b) {
  return json{{"min", b.domain_min},
              {"max", b.domain_max},
              {"nseg", b.nseg},
              {"bdeg", b.bdeg}};
}

inline MarginalBasis basis_from_json(const json &j, const std::string &where) {
  return make_basis(json_field(j, "min", where).get<double>(),
                    json_field(j, "max", where).get<double>(),
                    json_field(j, "nseg", where).get<int>(),
                    json_field(j, "bdeg", where).get<int>());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binned-data artifact
// ---------------------------------------------------------------------------

inline void save_binned(const std::string &path, const BinnedData &d) {
  json j;
  j["type"] = "hazsurf-binned";
  j["version"] = 1;
  j["grid"] = {{"edges_u", d.grid.edges_u}, {"edges_s", d.grid.edges_s}};
  j["exposure"] = detail::matrix_to_json(d.exposure);
  j["events"] = detail::matrix_to_json(d.events);
  j["individual"] = d.individual;
  j["n_records"] = d.n_records;
  j["covariate_names"] = d.covariate_names;
  if (d.individual) {
    j["covariates"] = detail::matrix_to_json(d.covariates);
    json cells = json::array();
    for (const auto &c : d.cells)
      cells.push_back(json{{"u_bin", c.u_bin},
                           {"s_first", c.s_first},
                           {"exposure", c.exposure},
                           {"event_bin", c.event_bin}});
    j["cells"] = cells;
  }
  detail::write_json_file(path, j);
}

inline BinnedData load_binned(const std::string &path) {
  const json j = detail::parse_json_file(path, "hazsurf-binned");
  BinnedData d;
  const json &g = detail::json_field(j, "grid", path);
  d.grid.edges_u =
      detail::json_field(g, "edges_u", path).get<std::vector<double>>();
  d.grid.edges_s =
      detail::json_field(g, "edges_s", path).get<std::vector<double>>();
  for (const auto *edges : {&d.grid.edges_u, &d.grid.edges_s}) {
    if (edges->size() < 2)
      throw SchemaError(path + ": grid needs at least two bin edges");
    for (std::size_t i = 1; i < edges->size(); ++i)
      if (!((*edges)[i] > (*edges)[i - 1]))
        throw SchemaError(path + ": grid edges are not increasing");
  }
  d.exposure =
      detail::matrix_from_json(detail::json_field(j, "exposure", path), path);
  d.events =
      detail::matrix_from_json(detail::json_field(j, "events", path), path);
  if (d.exposure.rows() != d.grid.n_u() || d.exposure.cols() != d.grid.n_s() ||
      d.events.rows() != d.grid.n_u() || d.events.cols() != d.grid.n_s())
    throw SchemaError(path + ": matrix shapes do not match the grid");
  d.individual = detail::json_field(j, "individual", path).get<bool>();
  d.n_records = detail::json_field(j, "n_records", path).get<long>();
  d.covariate_names = detail::json_field(j, "covariate_names", path)
                          .get<std::vector<std::string>>();
  if (d.individual) {
    d.covariates = detail::matrix_from_json(
        detail::json_field(j, "covariates", path), path);
    for (const json &c : detail::json_field(j, "cells", path)) {
      IndividualCells ic;
      ic.u_bin = detail::json_field(c, "u_bin", path).get<int>();
      ic.s_first = detail::json_field(c, "s_first", path).get<int>();
      ic.exposure =
          detail::json_field(c, "exposure", path).get<std::vector<double>>();
      ic.event_bin = detail::json_field(c, "event_bin", path).get<int>();
      d.cells.push_back(std::move(ic));
    }
    if (static_cast<long>(d.cells.size()) != d.n_records ||
        d.covariates.rows() != d.n_records)
      throw SchemaError(path + ": record count mismatch between cells, "
                                "covariates and n_records");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Model artifact
// ---------------------------------------------------------------------------

struct SelectionInfo {
  std::string method;     // "fixed", "grid" or "numeric"
  std::string criterion;  // "aic" or "bic"
  int evals = 0;
};

inline void save_model(const std::string &path, const FittedModel &m,
                       const SelectionInfo &sel = {}) {
  json j;
  j["type"] = "hazsurf-model";
  j["version"] = 1;
  j["spec"] = {{"basis_u", detail::basis_to_json(m.spec.basis_u)},
               {"basis_s", detail::basis_to_json(m.spec.basis_s)},
               {"pord", m.spec.pord}};
  j["grid"] = {{"edges_u", m.grid.edges_u}, {"edges_s", m.grid.edges_s}};
  j["penalty"] = {{"log10_rho_u", m.penalty.log10_rho_u},
                  {"log10_rho_s", m.penalty.log10_rho_s}};
  j["coef"] = detail::matrix_to_json(m.coef);
  j["beta"] = std::vector<double>(m.beta.data(), m.beta.data() + m.beta.size());
  j["covariate_names"] = m.covariate_names;
  j["covariance"] = detail::matrix_to_json(m.covariance);
  j["deviance"] = m.deviance;
  j["ed"] = m.ed;
  j["aic"] = m.aic;
  j["bic"] = m.bic;
  j["bic_events"] = m.bic_events;
  j["n_obs"] = m.n_obs;
  j["n_events"] = m.n_events;
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  j["selection_capped"] = m.selection_capped;
  j["deviance_trace"] = m.deviance_trace;
  if (!sel.method.empty())
    j["selection"] = {{"method", sel.method},
                      {"criterion", sel.criterion},
                      {"evals", sel.evals}};
  detail::write_json_file(path, j);
}

inline FittedModel load_model(const std::string &path,
                              SelectionInfo *sel = nullptr) {
  const json j = detail::parse_json_file(path, "hazsurf-model");
  FittedModel m;
  const json &spec = detail::json_field(j, "spec", path);
  m.spec.basis_u = detail::basis_from_json(
      detail::json_field(spec, "basis_u", path), path);
  m.spec.basis_s = detail::basis_from_json(
      detail::json_field(spec, "basis_s", path), path);
  m.spec.pord = detail::json_field(spec, "pord", path).get<int>();
  const json &g = detail::json_field(j, "grid", path);
  m.grid.edges_u =
      detail::json_field(g, "edges_u", path).get<std::vector<double>>();
  m.grid.edges_s =
      detail::json_field(g, "edges_s", path).get<std::vector<double>>();
  const json &pen = detail::json_field(j, "penalty", path);
  m.penalty.pord = m.spec.pord;
  m.penalty.log10_rho_u =
      detail::json_field(pen, "log10_rho_u", path).get<double>();
  m.penalty.log10_rho_s =
      detail::json_field(pen, "log10_rho_s", path).get<double>();
  m.coef = detail::matrix_from_json(detail::json_field(j, "coef", path), path);
  const auto beta =
      detail::json_field(j, "beta", path).get<std::vector<double>>();
  m.beta = Eigen::Map<const Eigen::VectorXd>(
      beta.data(), static_cast<Eigen::Index>(beta.size()));
  m.covariate_names = detail::json_field(j, "covariate_names", path)
                          .get<std::vector<std::string>>();
  m.covariance = detail::matrix_from_json(
      detail::json_field(j, "covariance", path), path);
  if (m.coef.rows() != m.cu() || m.coef.cols() != m.cs())
    throw SchemaError(path + ": coefficient shape does not match the bases");
  const Eigen::Index dim = m.coef.size() + m.beta.size();
  if (m.covariance.rows() != dim || m.covariance.cols() != dim)
    throw SchemaError(path + ": covariance shape does not match the model");
  m.deviance = detail::json_field(j, "deviance", path).get<double>();
  m.ed = detail::json_field(j, "ed", path).get<double>();
  m.aic = detail::json_field(j, "aic", path).get<double>();
  m.bic = detail::json_field(j, "bic", path).get<double>();
  m.bic_events = detail::json_field(j, "bic_events", path).get<double>();
  m.n_obs = detail::json_field(j, "n_obs", path).get<long>();
  m.n_events = detail::json_field(j, "n_events", path).get<double>();
  m.iterations = detail::json_field(j, "iterations", path).get<int>();
  m.converged = detail::json_field(j, "converged", path).get<bool>();
  m.selection_capped =
      detail::json_field(j, "selection_capped", path).get<bool>();
  m.deviance_trace =
      detail::json_field(j, "deviance_trace", path).get<std::vector<double>>();
  if (sel && j.contains("selection")) {
    const json &s = j["selection"];
    sel->method = detail::json_field(s, "method", path).get<std::string>();
    sel->criterion =
        detail::json_field(s, "criterion", path).get<std::string>();
    sel->evals = detail::json_field(s, "evals", path).get<int>();
  }
  return m;
}

// ---------------------------------------------------------------------------
// Long-format grid files: <name>.csv plus <name>.meta.json sidecar
// ---------------------------------------------------------------------------

inline std::string sidecar_path(const std::string &csv_path) {
  const std::string suffix = ".csv";
  if (csv_path.size() > suffix.size() &&
      csv_path.compare(csv_path.size() - suffix.size(), suffix.size(),
                       suffix) == 0)
    return csv_path.substr(0, csv_path.size() - suffix.size()) + ".meta.json";
  return csv_path + ".meta.json";
}

inline void save_surface_grid(const std::string &csv_path,
                              const SurfaceGrid &g) {
  CsvTable t;
  t.header = {"u", "s", "loghazard", "hazard", "se_loghazard", "se_hazard"};
  if (g.cumulated()) {
    t.header.push_back("cumhazard");
    t.header.push_back("survival");
  }
  t.header.push_back("present");
  for (Eigen::Index i = 0; i < g.n_u(); ++i)
    for (Eigen::Index j = 0; j < g.n_s(); ++j) {
      std::vector<std::string> row;
      row.push_back(fmt_full(g.u_values[i]));
      row.push_back(fmt_full(g.s_values[j]));
      row.push_back(fmt_full(g.loghazard(i, j)));
      row.push_back(fmt_full(g.hazard(i, j)));
      row.push_back(fmt_full(g.se_loghazard(i, j)));
      row.push_back(fmt_full(g.se_hazard(i, j)));
      if (g.cumulated()) {
        row.push_back(fmt_full((*g.cumhazard)(i, j)));
        row.push_back(fmt_full((*g.survival)(i, j)));
      }
      row.push_back(g.present(i, j) ? "1" : "0");
      t.rows.push_back(std::move(row));
    }
  write_csv_file(csv_path, t);

  json meta;
  meta["type"] = "hazsurf-grid";
  meta["version"] = 1;
  meta["plane"] = g.plane == Plane::us ? "us" : "ts";
  meta["u_values"] = std::vector<double>(
      g.u_values.data(), g.u_values.data() + g.u_values.size());
  meta["s_values"] = std::vector<double>(
      g.s_values.data(), g.s_values.data() + g.s_values.size());
  meta["cumulated"] = g.cumulated();
  detail::write_json_file(sidecar_path(csv_path), meta);
}

inline SurfaceGrid load_surface_grid(const std::string &csv_path) {
  const json meta =
      detail::parse_json_file(sidecar_path(csv_path), "hazsurf-grid");
  SurfaceGrid g;
  const auto uv = detail::json_field(meta, "u_values", csv_path)
                      .get<std::vector<double>>();
  const auto sv = detail::json_field(meta, "s_values", csv_path)
                      .get<std::vector<double>>();
  g.u_values = Eigen::Map<const Eigen::VectorXd>(
      uv.data(), static_cast<Eigen::Index>(uv.size()));
  g.s_values = Eigen::Map<const Eigen::VectorXd>(
      sv.data(), static_cast<Eigen::Index>(sv.size()));
  const std::string plane =
      detail::json_field(meta, "plane", csv_path).get<std::string>();
  if (plane == "us") g.plane = Plane::us;
  else if (plane == "ts") g.plane = Plane::ts;
  else throw SchemaError(csv_path + ": unknown plane tag '" + plane + "'");
  const bool cumulated =
      detail::json_field(meta, "cumulated", csv_path).get<bool>();

  const CsvTable t = read_csv_file(csv_path);
  const Eigen::Index nu = g.n_u(), ns = g.n_s();
  if (static_cast<Eigen::Index>(t.n_rows()) != nu * ns)
    throw SchemaError(csv_path + ": expected " + std::to_string(nu * ns) +
                      " rows, found " + std::to_string(t.n_rows()));
  const int c_lh = t.require_column("loghazard"),
            c_h = t.require_column("hazard"),
            c_slh = t.require_column("se_loghazard"),
            c_sh = t.require_column("se_hazard"),
            c_p = t.require_column("present");
  g.loghazard.resize(nu, ns);
  g.hazard.resize(nu, ns);
  g.se_loghazard.resize(nu, ns);
  g.se_hazard.resize(nu, ns);
  g.present.setConstant(nu, ns, true);
  int c_ch = -1, c_sv = -1;
  if (cumulated) {
    c_ch = t.require_column("cumhazard");
    c_sv = t.require_column("survival");
    g.cumhazard = Eigen::MatrixXd(nu, ns);
    g.survival = Eigen::MatrixXd(nu, ns);
  }
  for (Eigen::Index i = 0; i < nu; ++i)
    for (Eigen::Index j = 0; j < ns; ++j) {
      const std::size_t r = static_cast<std::size_t>(i * ns + j);
      g.loghazard(i, j) = parse_csv_double(t, r, c_lh);
      g.hazard(i, j) = parse_csv_double(t, r, c_h);
      g.se_loghazard(i, j) = parse_csv_double(t, r, c_slh);
      g.se_hazard(i, j) = parse_csv_double(t, r, c_sh);
      if (cumulated) {
        (*g.cumhazard)(i, j) = parse_csv_double(t, r, c_ch);
        (*g.survival)(i, j) = parse_csv_double(t, r, c_sv);
      }
      g.present(i, j) = parse_csv_double(t, r, c_p) != 0.0;
    }
  return g;
}

}  // namespace hazsurf
