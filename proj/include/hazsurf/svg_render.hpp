#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "hazsurf/errors.hpp"
#include "hazsurf/surface.hpp"

namespace hazsurf {

struct RenderOptions {
  int width = 720;
  int height = 540;
  int margin_left = 64;
  int margin_right = 96;
  int margin_top = 44;
  int margin_bottom = 56;
  std::string value = "hazard";        // which surface field to color
  std::string palette = "viridis";     // viridis | grays
  std::vector<double> contour_levels;  // explicit levels; empty -> automatic
  int n_contours = 7;
  std::string title;
  std::string x_label;
  std::string y_label;
};

namespace detail {

// Anchor colors interpolated linearly in RGB.
inline std::string palette_color(const std::string &name, double t) {
  static const unsigned char viridis[][3] = {
      {68, 1, 84},    {71, 44, 122},  {59, 81, 139},  {44, 113, 142},
      {33, 144, 141}, {39, 173, 129}, {92, 200, 99},  {170, 220, 50},
      {253, 231, 37}};
  static const unsigned char grays[][3] = {{20, 20, 20}, {240, 240, 240}};
  const unsigned char(*anchors)[3];
  int n;
  if (name == "viridis") {
    anchors = viridis;
    n = 9;
  } else if (name == "grays") {
    anchors = grays;
    n = 2;
  } else {
    throw InvalidSpecError("unknown palette '" + name +
                           "' (want viridis or grays)");
  }
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * (n - 1);
  const int lo = std::min(n - 2, static_cast<int>(pos));
  const double f = pos - lo;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(std::lround(anchors[lo][0] +
                                             f * (anchors[lo + 1][0] -
                                                  anchors[lo][0]))),
                static_cast<int>(std::lround(anchors[lo][1] +
                                             f * (anchors[lo + 1][1] -
                                                  anchors[lo][1]))),
                static_cast<int>(std::lround(anchors[lo][2] +
                                             f * (anchors[lo + 1][2] -
                                                  anchors[lo][2]))));
  return buf;
}

inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline const Eigen::MatrixXd &surface_field(const SurfaceGrid &g,
                                            const std::string &name) {
  if (name == "hazard") return g.hazard;
  if (name == "loghazard") return g.loghazard;
  if (name == "se_hazard") return g.se_hazard;
  if (name == "se_loghazard") return g.se_loghazard;
  if (name == "cumhazard" || name == "survival") {
    if (!g.cumulated())
      throw InvalidSpecError("surface has no cumulative hazard; cannot "
                             "render '" + name + "'");
    return name == "cumhazard" ? *g.cumhazard : *g.survival;
  }
  throw InvalidSpecError("unknown surface field '" + name + "'");
}

// Cell boundaries halfway between grid points, end cells mirrored.
inline std::vector<double> cell_edges(const Eigen::VectorXd &v) {
  const Eigen::Index n = v.size();
  std::vector<double> e(static_cast<std::size_t>(n) + 1);
  if (n == 1) {
    e[0] = v[0] - 0.5;
    e[1] = v[0] + 0.5;
    return e;
  }
  e[0] = v[0] - (v[1] - v[0]) / 2.0;
  for (Eigen::Index i = 1; i < n; ++i)
    e[static_cast<std::size_t>(i)] = (v[i - 1] + v[i]) / 2.0;
  e[static_cast<std::size_t>(n)] = v[n - 1] + (v[n - 1] - v[n - 2]) / 2.0;
  return e;
}

}  // namespace detail

// Deterministic SVG heatmap with contour overlay.  Cells are drawn only
// where present, so masked regions stay transparent.  In the ts plane each
// cell is shifted right by its s coordinate (t = u + s).
inline std::string render_svg(const SurfaceGrid &g,
                              const RenderOptions &opts = {}) {
  const Eigen::MatrixXd &val = detail::surface_field(g, opts.value);
  const Eigen::Index nu = g.n_u(), ns = g.n_s();
  const bool ts = g.plane == Plane::ts;

  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (Eigen::Index i = 0; i < nu; ++i)
    for (Eigen::Index j = 0; j < ns; ++j)
      if (g.present(i, j)) {
        vmin = std::min(vmin, val(i, j));
        vmax = std::max(vmax, val(i, j));
      }
  if (!(vmin <= vmax)) {  // fully masked surface
    vmin = 0.0;
    vmax = 1.0;
  }
  const double span = vmax > vmin ? vmax - vmin : 1.0;

  const std::vector<double> ue = detail::cell_edges(g.u_values);
  const std::vector<double> se = detail::cell_edges(g.s_values);
  const double x_min = ue.front() + (ts ? se.front() : 0.0);
  const double x_max = ue.back() + (ts ? se.back() : 0.0);
  const double y_min = se.front(), y_max = se.back();

  const double pw = opts.width - opts.margin_left - opts.margin_right;
  const double ph = opts.height - opts.margin_top - opts.margin_bottom;
  auto X = [&](double x) {
    return opts.margin_left + (x - x_min) / (x_max - x_min) * pw;
  };
  auto Y = [&](double s) {
    return opts.margin_top + (y_max - s) / (y_max - y_min) * ph;
  };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width
      << "\" height=\"" << opts.height << "\" viewBox=\"0 0 " << opts.width
      << " " << opts.height << "\">\n"
      << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << opts.width
      << "\" height=\"" << opts.height << "\" fill=\"#ffffff\"/>\n";

  svg << "<g class=\"cells\" stroke=\"none\">\n";
  for (Eigen::Index i = 0; i < nu; ++i)
    for (Eigen::Index j = 0; j < ns; ++j) {
      if (!g.present(i, j)) continue;  // masked: not painted at all
      const double shift = ts ? g.s_values[j] : 0.0;
      const double x0 = X(ue[static_cast<std::size_t>(i)] + shift);
      const double x1 = X(ue[static_cast<std::size_t>(i) + 1] + shift);
      const double y0 = Y(se[static_cast<std::size_t>(j) + 1]);
      const double y1 = Y(se[static_cast<std::size_t>(j)]);
      svg << "<rect class=\"cell\" x=\"" << detail::px(x0) << "\" y=\""
          << detail::px(y0) << "\" width=\"" << detail::px(x1 - x0)
          << "\" height=\"" << detail::px(y1 - y0) << "\" fill=\""
          << detail::palette_color(opts.palette, (val(i, j) - vmin) / span)
          << "\"/>\n";
    }
  svg << "</g>\n";

  // Contours by marching squares over grid-point values; squares touching a
  // masked point are skipped.
  std::vector<double> levels = opts.contour_levels;
  if (levels.empty() && vmax > vmin)
    for (int k = 1; k <= opts.n_contours; ++k)
      levels.push_back(vmin + span * k / (opts.n_contours + 1));
  svg << "<g class=\"contours\" fill=\"none\" stroke=\"#ffffff\""
      << " stroke-width=\"0.8\">\n";
  for (double level : levels) {
    std::ostringstream path;
    for (Eigen::Index i = 0; i + 1 < nu; ++i)
      for (Eigen::Index j = 0; j + 1 < ns; ++j) {
        if (!g.present(i, j) || !g.present(i + 1, j) ||
            !g.present(i, j + 1) || !g.present(i + 1, j + 1))
          continue;
        const double v00 = val(i, j), v10 = val(i + 1, j);
        const double v01 = val(i, j + 1), v11 = val(i + 1, j + 1);
        auto corner = [&](Eigen::Index a, Eigen::Index b) {
          const double shift = ts ? g.s_values[b] : 0.0;
          return std::pair<double, double>(X(g.u_values[a] + shift),
                                           Y(g.s_values[b]));
        };
        const auto p00 = corner(i, j), p10 = corner(i + 1, j),
                   p01 = corner(i, j + 1), p11 = corner(i + 1, j + 1);
        auto lerp = [&](std::pair<double, double> a,
                        std::pair<double, double> b, double va, double vb) {
          const double f = (level - va) / (vb - va);
          return std::pair<double, double>(a.first + f * (b.first - a.first),
                                           a.second +
                                               f * (b.second - a.second));
        };
        std::vector<std::pair<double, double>> pts;
        if ((v00 < level) != (v10 < level))
          pts.push_back(lerp(p00, p10, v00, v10));
        if ((v10 < level) != (v11 < level))
          pts.push_back(lerp(p10, p11, v10, v11));
        if ((v01 < level) != (v11 < level))
          pts.push_back(lerp(p01, p11, v01, v11));
        if ((v00 < level) != (v01 < level))
          pts.push_back(lerp(p00, p01, v00, v01));
        if (pts.size() == 2) {
          path << "M" << detail::px(pts[0].first) << " "
               << detail::px(pts[0].second) << "L" << detail::px(pts[1].first)
               << " " << detail::px(pts[1].second);
        } else if (pts.size() == 4) {
          // Saddle: split by the cell-center value.
          const double centre = (v00 + v10 + v01 + v11) / 4.0;
          const int a = centre < level ? 1 : 3;
          path << "M" << detail::px(pts[0].first) << " "
               << detail::px(pts[0].second) << "L" << detail::px(pts[a].first)
               << " " << detail::px(pts[a].second);
          path << "M" << detail::px(pts[2].first) << " "
               << detail::px(pts[2].second) << "L"
               << detail::px(pts[a == 1 ? 3 : 1].first) << " "
               << detail::px(pts[a == 1 ? 3 : 1].second);
        }
      }
    const std::string d = path.str();
    if (!d.empty())
      svg << "<path class=\"contour\" d=\"" << d << "\"/>\n";
  }
  svg << "</g>\n";

  // Axes and labels.
  const double ax0 = opts.margin_left, ax1 = opts.margin_left + pw;
  const double ay0 = opts.margin_top, ay1 = opts.margin_top + ph;
  svg << "<g class=\"axes\" stroke=\"#000000\" stroke-width=\"1\">\n"
      << "<line x1=\"" << detail::px(ax0) << "\" y1=\"" << detail::px(ay1)
      << "\" x2=\"" << detail::px(ax1) << "\" y2=\"" << detail::px(ay1)
      << "\"/>\n"
      << "<line x1=\"" << detail::px(ax0) << "\" y1=\"" << detail::px(ay0)
      << "\" x2=\"" << detail::px(ax0) << "\" y2=\"" << detail::px(ay1)
      << "\"/>\n</g>\n";
  svg << "<g class=\"labels\" font-family=\"sans-serif\" font-size=\"12\""
      << " fill=\"#000000\">\n";
  svg << "<text x=\"" << detail::px(ax0) << "\" y=\"" << detail::px(ay1 + 16)
      << "\">" << fmt_sig(x_min) << "</text>\n";
  svg << "<text x=\"" << detail::px(ax1 - 24) << "\" y=\""
      << detail::px(ay1 + 16) << "\">" << fmt_sig(x_max) << "</text>\n";
  svg << "<text x=\"" << detail::px(ax0 - 28) << "\" y=\""
      << detail::px(ay1) << "\">" << fmt_sig(y_min) << "</text>\n";
  svg << "<text x=\"" << detail::px(ax0 - 28) << "\" y=\""
      << detail::px(ay0 + 10) << "\">" << fmt_sig(y_max) << "</text>\n";
  if (!opts.title.empty())
    svg << "<text class=\"title\" x=\"" << detail::px((ax0 + ax1) / 2 - 40)
        << "\" y=\"" << detail::px(ay0 - 14) << "\" font-size=\"15\">"
        << opts.title << "</text>\n";
  if (!opts.x_label.empty())
    svg << "<text class=\"x-label\" x=\"" << detail::px((ax0 + ax1) / 2 - 20)
        << "\" y=\"" << detail::px(ay1 + 36) << "\">" << opts.x_label
        << "</text>\n";
  if (!opts.y_label.empty())
    svg << "<text class=\"y-label\" x=\"" << detail::px(ax0 - 44) << "\" y=\""
        << detail::px((ay0 + ay1) / 2)
        << "\" transform=\"rotate(-90 " << detail::px(ax0 - 44) << " "
        << detail::px((ay0 + ay1) / 2) << ")\">" << opts.y_label
        << "</text>\n";
  svg << "</g>\n";

  // Color legend.
  const double lx = ax1 + 18, lw = 16, ly0 = ay0, lh = ph;
  svg << "<g class=\"legend\">\n";
  const int steps = 48;
  for (int k = 0; k < steps; ++k) {
    const double f0 = static_cast<double>(k) / steps;
    const double f1 = static_cast<double>(k + 1) / steps;
    svg << "<rect x=\"" << detail::px(lx) << "\" y=\""
        << detail::px(ly0 + lh * (1.0 - f1)) << "\" width=\""
        << detail::px(lw) << "\" height=\"" << detail::px(lh / steps + 0.5)
        << "\" fill=\"" << detail::palette_color(opts.palette, f0)
        << "\"/>\n";
  }
  svg << "<text x=\"" << detail::px(lx + lw + 4) << "\" y=\""
      << detail::px(ly0 + lh) << "\" font-family=\"sans-serif\""
      << " font-size=\"11\">" << fmt_sig(vmin, 4) << "</text>\n";
  svg << "<text x=\"" << detail::px(lx + lw + 4) << "\" y=\""
      << detail::px(ly0 + 10) << "\" font-family=\"sans-serif\""
      << " font-size=\"11\">" << fmt_sig(vmax, 4) << "</text>\n";
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace hazsurf
