#include "ntl/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "ntl/losses.hpp"

namespace ntl {

namespace {

const std::vector<double>& digit_values() {
    static const std::vector<double> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    return v;
}

struct SimplexPoint {
    double p3, p5, ce, mse, was;
};

SimplexPoint simplex_losses(double p3, double p5) {
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(10);
    probs[3] = p3;
    probs[5] = p5;
    probs[4] = 1.0 - p3 - p5;
    return {p3, p5, ce_from_probs(probs, 4), ntl_mse_from_probs(probs, 4.0, digit_values()),
            ntl_was_from_probs(probs, 4.0, digit_values())};
}

}  // namespace

void write_distance_figure_csv(const std::string& path, const std::vector<double>& qs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "q,t,distance,loss_ce,loss_ntl_mse,loss_ntl_was\n";
    char buf[192];
    for (double q : qs) {
        if (!(q >= 0 && q <= 1)) throw std::invalid_argument("q must lie in [0,1]");
        for (int t = 0; t < 10; ++t) {
            if (t == 4) continue;
            Eigen::VectorXd probs = Eigen::VectorXd::Constant(10, (1.0 - q) / 9.0);
            probs[t] = q;
            std::snprintf(buf, sizeof(buf), "%.10g,%d,%d,%.10g,%.10g,%.10g\n", q, t,
                          std::abs(t - 4), ce_from_probs(probs, 4),
                          ntl_mse_from_probs(probs, 4.0, digit_values()),
                          ntl_was_from_probs(probs, 4.0, digit_values()));
            out << buf;
        }
    }
}

void write_simplex_figure_csv(const std::string& path, int resolution) {
    if (resolution < 2) throw std::invalid_argument("resolution must be >= 2");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "p3,p5,loss_ce,loss_ntl_mse,loss_ntl_was\n";
    char buf[192];
    const double step = 1.0 / (resolution - 1);
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j) {
            const double p3 = i * step, p5 = j * step;
            if (p3 + p5 > 1.0 + 1e-12) continue;
            const SimplexPoint p = simplex_losses(std::min(p3, 1.0), std::min(p5, 1.0 - p3));
            std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g\n", p3, p5, p.ce,
                          p.mse, p.was);
            out << buf;
        }
}

void write_simplex_figure_svg(const std::string& path, const std::string& loss,
                              int resolution) {
    if (resolution < 2) throw std::invalid_argument("resolution must be >= 2");
    int which;
    if (loss == "ce") which = 0;
    else if (loss == "ntl-mse") which = 1;
    else if (loss == "ntl-was") which = 2;
    else throw std::invalid_argument("unknown loss for heatmap: " + loss);

    const double step = 1.0 / (resolution - 1);
    std::vector<std::vector<double>> grid(resolution, std::vector<double>(resolution, -1));
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j) {
            const double p3 = i * step, p5 = j * step;
            if (p3 + p5 > 1.0 + 1e-12) continue;
            const SimplexPoint p = simplex_losses(std::min(p3, 1.0), std::min(p5, 1.0 - p3));
            const double v = which == 0 ? p.ce : which == 1 ? p.mse : p.was;
            grid[i][j] = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }

    // 3-stop ramp: dark blue -> pale yellow -> dark red
    const int ramp[3][3] = {{29, 56, 126}, {247, 243, 196}, {158, 16, 22}};
    auto channel = [&](double u, int c) {
        const double t = u <= 0.5 ? u * 2 : (u - 0.5) * 2;
        const int a = u <= 0.5 ? 0 : 1;
        return static_cast<int>(std::lround(ramp[a][c] + t * (ramp[a + 1][c] - ramp[a][c])));
    };

    const int cell = 6;
    const int size = cell * resolution;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
        << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n";
    char buf[192];
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j) {
            if (grid[i][j] < 0) continue;
            const double u = hi > lo ? (grid[i][j] - lo) / (hi - lo) : 0.0;
            // p3 on x, p5 on y, origin bottom-left
            std::snprintf(buf, sizeof(buf),
                          "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                          "fill=\"rgb(%d,%d,%d)\"/>\n",
                          i * cell, (resolution - 1 - j) * cell, cell, cell, channel(u, 0),
                          channel(u, 1), channel(u, 2));
            out << buf;
        }
    out << "</svg>\n";
}

}  // namespace ntl
