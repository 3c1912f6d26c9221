#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "ntl/batch.hpp"
#include "ntl/vocab.hpp"

namespace ntl {

/// Worst relative error between analytic grad_logits and central finite
/// differences of fn(logits).total. The denominator max(|a|,|fd|,1) keeps
/// near-zero entries from blowing up the ratio.
template <typename LossFn>
double max_grad_rel_error(LossFn&& fn, Mat<double> logits, double h = 1e-6) {
    const Mat<double> analytic = fn(logits).dense_grad(logits.cols());
    double worst = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r)
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            const double keep = logits(r, c);
            logits(r, c) = keep + h;
            const double fp = fn(logits).total;
            logits(r, c) = keep - h;
            const double fm = fn(logits).total;
            logits(r, c) = keep;
            const double fd = (fp - fm) / (2 * h);
            const double a = analytic(r, c);
            const double rel =
                std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1.0});
            worst = std::max(worst, rel);
        }
    return worst;
}

/// One random loss-op test instance: V = 30 (10 digit tokens), P = 8, logits
/// standard normal, labels a mix of digits and text with one padded position.
struct GradCase {
    Mat<double> logits;
    LabelBatch labels;
};

inline NumberVocabulary gradcheck_vocab() {
    std::vector<std::pair<std::string, std::optional<double>>> entries;
    for (int j = 0; j < 10; ++j)
        entries.emplace_back(std::string(1, static_cast<char>('0' + j)),
                             static_cast<double>(j));
    for (int j = 10; j < 30; ++j) entries.emplace_back("t" + std::to_string(j), std::nullopt);
    return NumberVocabulary::from_entries(entries);
}

inline GradCase make_grad_case(std::mt19937_64& rng, const NumberVocabulary& vocab,
                               int positions = 8) {
    GradCase c;
    std::normal_distribution<double> normal(0.0, 1.0);
    c.logits.resize(positions, vocab.size());
    for (int i = 0; i < positions; ++i)
        for (int j = 0; j < vocab.size(); ++j) c.logits(i, j) = normal(rng);
    std::uniform_int_distribution<int> num(0, vocab.number_count() - 1);
    std::uniform_int_distribution<int> any(0, vocab.size() - 1);
    std::bernoulli_distribution is_number(0.7);
    for (int i = 0; i < positions; ++i) {
        c.labels.ids.push_back(is_number(rng) ? vocab.number_indices()[num(rng)] : any(rng));
        c.labels.pad_mask.push_back(true);
    }
    c.labels.pad_mask[positions / 2] = false;  // one masked position
    return c;
}

}  // namespace ntl
