#pragma once

#include <string>
#include <vector>

namespace ntl {

/// Loss vs distance of the wrongly favored digit: label 4, probability q on
/// digit t, (1-q)/9 on every other digit. One CSV row per (q, t).
void write_distance_figure_csv(const std::string& path,
                               const std::vector<double>& qs = {0.5, 0.8, 0.95});

/// Loss over the (p3, p5) simplex grid with residual mass on the true digit 4.
/// Header: p3,p5,loss_ce,loss_ntl_mse,loss_ntl_was; rows restricted to
/// p3 + p5 <= 1. resolution = points per axis.
void write_simplex_figure_csv(const std::string& path, int resolution = 101);

/// Rectangle-grid SVG heatmap of one loss ("ce" | "ntl-mse" | "ntl-was") over
/// the same grid, with a fixed 3-stop color ramp.
void write_simplex_figure_svg(const std::string& path, const std::string& loss,
                              int resolution = 101);

}  // namespace ntl
