#include "ntl/cost.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace ntl {

namespace {

Eigen::MatrixXd euclidean_matrix(const NumberVocabulary& vocab) {
    const auto& vals = vocab.number_values();
    const int n = static_cast<int>(vals.size());
    if (n < 2) throw std::invalid_argument("cost matrix needs >= 2 number tokens");
    Eigen::MatrixXd c(n, n);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) c(j, k) = std::abs(vals[j] - vals[k]);
    return c;
}

}  // namespace

CostSpec build_cost_euclidean(const NumberVocabulary& vocab) {
    return {CostKind::Euclidean, 0.0, euclidean_matrix(vocab)};
}

CostSpec build_cost_squashed(const NumberVocabulary& vocab, double s) {
    if (!(s > 0.0)) throw std::invalid_argument("squash factor must be > 0");
    Eigen::MatrixXd d = euclidean_matrix(vocab);
    double d_min = std::numeric_limits<double>::infinity();
    double d_max = 0.0;
    for (int j = 0; j < d.rows(); ++j)
        for (int k = 0; k < d.cols(); ++k)
            if (d(j, k) > 0.0) {
                d_min = std::min(d_min, d(j, k));
                d_max = std::max(d_max, d(j, k));
            }
    if (!std::isfinite(d_min)) throw std::invalid_argument("all number values coincide");
    Eigen::MatrixXd c = d;
    if (d_max > d_min) {
        const double beta = std::log(s) / std::log(d_max / d_min);
        for (int j = 0; j < c.rows(); ++j)
            for (int k = 0; k < c.cols(); ++k)
                if (d(j, k) > 0.0) c(j, k) = d_min * std::pow(d(j, k) / d_min, beta);
    }
    // d_max == d_min: distances are already nominal, squashing is a no-op.
    return {CostKind::Squashed, s, std::move(c)};
}

CostSpec build_cost_explicit(const NumberVocabulary& vocab, const Eigen::MatrixXd& matrix) {
    const int n = vocab.number_count();
    if (matrix.rows() != n || matrix.cols() != n)
        throw std::invalid_argument("explicit cost matrix has wrong shape");
    const auto& vals = vocab.number_values();
    for (int j = 0; j < n; ++j) {
        if (matrix(j, j) != 0.0)
            throw std::invalid_argument("explicit cost matrix has nonzero diagonal");
        for (int k = 0; k < n; ++k) {
            if (matrix(j, k) != matrix(k, j))
                throw std::invalid_argument("explicit cost matrix not symmetric");
            if (j != k && vals[j] != vals[k] && !(matrix(j, k) > 0.0))
                throw std::invalid_argument("explicit cost matrix needs positive off-diagonal");
        }
    }
    return {CostKind::Explicit, 0.0, matrix};
}

void save_cost_csv(const CostSpec& cost, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    char buf[64];
    for (int j = 0; j < cost.matrix.rows(); ++j) {
        for (int k = 0; k < cost.matrix.cols(); ++k) {
            auto [end, ec] =
                std::to_chars(buf, buf + sizeof(buf), cost.matrix(j, k),
                              std::chars_format::general, 17);
            if (k) f << ',';
            f.write(buf, end - buf);
        }
        f << '\n';
    }
}

}  // namespace ntl
