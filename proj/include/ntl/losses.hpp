#pragma once

#include <cmath>
#include <stdexcept>

#include "ntl/batch.hpp"
#include "ntl/cost.hpp"
#include "ntl/vocab.hpp"

namespace ntl {

/// Where the probabilities behind the number-token losses come from.
/// Slice: softmax over the number columns only (renormalized).
/// Full: softmax over the whole vocabulary, restricted to the number columns.
enum class SoftmaxDomain { Slice, Full };

enum class LpVariant { MSE, MAE, Huber };

namespace detail {

/// Per-row softmax machinery shared by the number-token losses. Computes the
/// probabilities q over the number slice for one position and chains a
/// gradient dL/dq back to the logits.
template <typename S>
class SliceSoftmax {
public:
    SliceSoftmax(const Mat<S>& logits, const NumberVocabulary& vocab, SoftmaxDomain domain)
        : logits_(logits), idx_(vocab.number_indices()), domain_(domain) {
        const int n = static_cast<int>(idx_.size());
        q_.resize(n);
        if (domain_ == SoftmaxDomain::Full) p_.resize(logits.cols());
    }

    void compute(int row) {
        const int n = static_cast<int>(idx_.size());
        if (domain_ == SoftmaxDomain::Slice) {
            S mx = logits_(row, idx_[0]);
            for (int j = 1; j < n; ++j) mx = std::max(mx, logits_(row, idx_[j]));
            S sum = 0;
            for (int j = 0; j < n; ++j) {
                q_[j] = std::exp(logits_(row, idx_[j]) - mx);
                sum += q_[j];
            }
            q_ /= sum;
        } else {
            const auto z = logits_.row(row);
            const S mx = z.maxCoeff();
            p_ = (z.array() - mx).exp();
            p_ /= p_.sum();
            for (int j = 0; j < n; ++j) q_[j] = p_[idx_[j]];
        }
    }

    const Vec<S>& probs() const { return q_; }

    /// grad.row(row) += scale * dL/dz given h = dL/dq at the current row.
    /// Slice domain writes into a compact rows-by-n matrix (column j is the
    /// j-th number token); Full domain writes into a logits-shaped matrix.
    void add_grad(int row, const Vec<S>& h, S scale, Mat<S>& grad) const {
        const int n = static_cast<int>(idx_.size());
        const S s = q_.dot(h);
        if (domain_ == SoftmaxDomain::Slice) {
            for (int j = 0; j < n; ++j)
                grad(row, j) += scale * q_[j] * (h[j] - s);
        } else {
            grad.row(row) -= (scale * s) * p_.transpose();
            for (int j = 0; j < n; ++j)
                grad(row, idx_[j]) += scale * p_[idx_[j]] * h[j];
        }
    }

private:
    const Mat<S>& logits_;
    const std::vector<int>& idx_;
    SoftmaxDomain domain_;
    Vec<S> q_;
    Vec<S> p_;  // full-vocabulary probabilities, Full domain only
};

template <typename S>
void check_labels(const Mat<S>& logits, const LabelBatch& labels, int vocab_size) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
        throw std::invalid_argument("labels/logits position count mismatch");
    if (logits.cols() != vocab_size)
        throw std::invalid_argument("logits width does not match vocabulary");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels.ids[i] < 0 || labels.ids[i] >= vocab_size)
            throw std::out_of_range("label id out of range");
}

template <typename S>
constexpr S stochastic_tol() {
    return std::is_same_v<S, float> ? S(1e-5) : S(1e-9);
}

}  // namespace detail

/// Probabilities over the number slice, one row per position. Stable
/// (max-subtracted) softmax over the slice columns only.
template <typename S>
Mat<S> number_softmax(const Mat<S>& logits, const NumberVocabulary& vocab) {
    if (vocab.number_count() < 2)
        throw std::invalid_argument("number_softmax needs >= 2 number tokens");
    detail::SliceSoftmax<S> sm(logits, vocab, SoftmaxDomain::Slice);
    Mat<S> out(logits.rows(), vocab.number_count());
    for (int i = 0; i < logits.rows(); ++i) {
        sm.compute(i);
        out.row(i) = sm.probs().transpose();
    }
    return out;
}

/// Full-vocabulary cross-entropy, mean over non-padded positions.
template <typename S>
LossResult<S> cross_entropy(const Mat<S>& logits, const LabelBatch& labels) {
    detail::check_labels(logits, labels, static_cast<int>(logits.cols()));
    LossResult<S> r;
    r.per_position = Vec<S>::Zero(logits.rows());
    r.grad_logits = Mat<S>::Zero(logits.rows(), logits.cols());
    int count = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) count += labels.pad_mask[i] ? 1 : 0;
    if (count == 0) return r;
    const S inv = S(1) / S(count);
    Vec<S> p(logits.cols());
    for (int i = 0; i < logits.rows(); ++i) {
        if (!labels.pad_mask[i]) continue;
        const auto z = logits.row(i);
        const S mx = z.maxCoeff();
        p = (z.array() - mx).exp();
        const S sum = p.sum();
        const S lse = mx + std::log(sum);
        r.per_position[i] = lse - z[labels.ids[i]];
        r.total += inv * r.per_position[i];
        r.grad_logits.row(i) = (inv / sum) * p.transpose();
        r.grad_logits(i, labels.ids[i]) -= inv;
    }
    return r;
}

/// NTL-Lp family: penalty on the difference between the label value and the
/// probability-weighted mean of number-token values, averaged over number
/// positions. Huber transition point is `delta`.
template <typename S>
LossResult<S> ntl_lp(const Mat<S>& logits, const LabelBatch& labels,
                     const NumberVocabulary& vocab, LpVariant variant,
                     S delta = S(1), SoftmaxDomain domain = SoftmaxDomain::Slice) {
    detail::check_labels(logits, labels, vocab.size());
    const int n = vocab.number_count();
    if (n < 2) throw std::invalid_argument("ntl_lp needs >= 2 number tokens");
    if (variant == LpVariant::Huber && !(delta > S(0)))
        throw std::invalid_argument("huber delta must be > 0");

    LossResult<S> r;
    r.per_position = Vec<S>::Zero(logits.rows());
    if (domain == SoftmaxDomain::Slice) {
        r.sparse_cols = vocab.number_indices();
        r.grad_logits = Mat<S>::Zero(logits.rows(), n);
    } else {
        r.grad_logits = Mat<S>::Zero(logits.rows(), logits.cols());
    }
    const auto mask = vocab.number_mask(labels.ids, labels.pad_mask);
    for (bool m : mask) r.number_position_count += m ? 1 : 0;
    if (r.number_position_count == 0) return r;
    const S inv = S(1) / S(r.number_position_count);

    detail::SliceSoftmax<S> sm(logits, vocab, domain);
    Vec<S> values(n), centered(n), h(n);
    const auto& vals = vocab.number_values();
    for (int j = 0; j < n; ++j) values[j] = S(vals[j]);
    // Slice probabilities sum to one, so resid = q.dot(values) - y and the
    // softmax gradient chain q_j * (h_j - q.h) is invariant to shifting h by
    // a constant; the per-position centered vector is only needed when the
    // probabilities come from the full-vocabulary softmax.
    const bool slice = domain == SoftmaxDomain::Slice;
    for (int i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) continue;
        sm.compute(i);
        const S y = S(*vocab.value_of(labels.ids[i]));
        S resid;  // yhat - y
        if (slice) {
            resid = sm.probs().dot(values) - y;
        } else {
            centered = values.array() - y;
            resid = sm.probs().dot(centered);
        }
        S loss, dresid;
        switch (variant) {
            case LpVariant::MSE:
                loss = resid * resid;
                dresid = S(2) * resid;
                break;
            case LpVariant::MAE:
                loss = std::abs(resid);
                dresid = resid > S(0) ? S(1) : (resid < S(0) ? S(-1) : S(0));
                break;
            case LpVariant::Huber:
                if (std::abs(resid) <= delta) {
                    loss = S(0.5) * resid * resid;
                    dresid = resid;
                } else {
                    loss = delta * (std::abs(resid) - S(0.5) * delta);
                    dresid = resid > S(0) ? delta : -delta;
                }
                break;
        }
        r.per_position[i] = loss;
        r.total += inv * loss;
        h = dresid * (slice ? values : centered);
        sm.add_grad(i, h, inv, r.grad_logits);
    }
    return r;
}

/// NTL-WAS (one-hot labels): per number position the expected transport cost
/// from the label token, averaged over number positions. With euclidean cost
/// this is the probability-weighted absolute value difference.
template <typename S>
LossResult<S> ntl_was(const Mat<S>& logits, const LabelBatch& labels,
                      const NumberVocabulary& vocab, const CostSpec& cost,
                      SoftmaxDomain domain = SoftmaxDomain::Slice) {
    detail::check_labels(logits, labels, vocab.size());
    const int n = vocab.number_count();
    if (cost.matrix.rows() != n) throw std::invalid_argument("cost matrix shape mismatch");

    LossResult<S> r;
    r.per_position = Vec<S>::Zero(logits.rows());
    if (domain == SoftmaxDomain::Slice) {
        r.sparse_cols = vocab.number_indices();
        r.grad_logits = Mat<S>::Zero(logits.rows(), n);
    } else {
        r.grad_logits = Mat<S>::Zero(logits.rows(), logits.cols());
    }
    const auto mask = vocab.number_mask(labels.ids, labels.pad_mask);
    for (bool m : mask) r.number_position_count += m ? 1 : 0;
    if (r.number_position_count == 0) return r;
    const S inv = S(1) / S(r.number_position_count);

    const Mat<S> c_all = cost.matrix.template cast<S>();
    detail::SliceSoftmax<S> sm(logits, vocab, domain);
    Vec<S> c(n);
    for (int i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) continue;
        sm.compute(i);
        c = c_all.row(vocab.slice_index(labels.ids[i])).transpose();
        const S loss = sm.probs().dot(c);
        r.per_position[i] = loss;
        r.total += inv * loss;
        sm.add_grad(i, c, inv, r.grad_logits);
    }
    return r;
}

/// Gaussian label smoothing over the number slice: rows proportional to
/// exp(-(v_j - y)^2 / (2 sigma^2)), renormalized to sum 1. Rows are emitted
/// only at number positions; other rows stay zero.
template <typename S>
Mat<S> gaussian_smooth_labels(const LabelBatch& labels, S sigma,
                              const NumberVocabulary& vocab) {
    if (!(sigma > S(0))) throw std::invalid_argument("sigma must be > 0");
    const int n = vocab.number_count();
    Mat<S> out = Mat<S>::Zero(labels.size(), n);
    const auto mask = vocab.number_mask(labels.ids, labels.pad_mask);
    const auto& vals = vocab.number_values();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!mask[i]) continue;
        const S y = S(*vocab.value_of(labels.ids[i]));
        S sum = 0;
        for (int j = 0; j < n; ++j) {
            const S d = S(vals[j]) - y;
            out(i, j) = std::exp(-d * d / (S(2) * sigma * sigma));
            sum += out(i, j);
        }
        out.row(i) /= sum;
    }
    return out;
}

/// Gaussian cross-entropy over the number slice against smoothed targets,
/// mean over number positions. Predicted probabilities are clamped below at
/// 1e-12 inside the logarithm.
template <typename S>
LossResult<S> gce(const Mat<S>& logits, const Mat<S>& targets, const LabelBatch& labels,
                  const NumberVocabulary& vocab, SoftmaxDomain domain = SoftmaxDomain::Slice) {
    detail::check_labels(logits, labels, vocab.size());
    const int n = vocab.number_count();
    if (targets.rows() != logits.rows() || targets.cols() != n)
        throw std::invalid_argument("target distribution shape mismatch");

    LossResult<S> r;
    r.per_position = Vec<S>::Zero(logits.rows());
    if (domain == SoftmaxDomain::Slice) {
        r.sparse_cols = vocab.number_indices();
        r.grad_logits = Mat<S>::Zero(logits.rows(), n);
    } else {
        r.grad_logits = Mat<S>::Zero(logits.rows(), logits.cols());
    }
    const auto mask = vocab.number_mask(labels.ids, labels.pad_mask);
    for (bool m : mask) r.number_position_count += m ? 1 : 0;
    if (r.number_position_count == 0) return r;
    const S inv = S(1) / S(r.number_position_count);
    constexpr S floor = S(1e-12);

    detail::SliceSoftmax<S> sm(logits, vocab, domain);
    Vec<S> h(n);
    for (int i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) continue;
        const auto t = targets.row(i);
        if (std::abs(t.sum() - S(1)) > detail::stochastic_tol<S>() || t.minCoeff() < S(0))
            throw std::invalid_argument("target row is not a probability distribution");
        sm.compute(i);
        const auto& q = sm.probs();
        S loss = 0;
        for (int j = 0; j < n; ++j) {
            if (q[j] > floor) {
                loss -= t[j] * std::log(q[j]);
                h[j] = -t[j] / q[j];
            } else {
                loss -= t[j] * std::log(floor);
                h[j] = S(0);  // clamped region: forward is constant in q_j
            }
        }
        r.per_position[i] = loss;
        r.total += inv * loss;
        sm.add_grad(i, h, inv, r.grad_logits);
    }
    return r;
}

/// NTL-WAS-CDF: Wasserstein-1 via CDF differences, valid for sorted
/// equidistant number values and arbitrary target distributions. Rescaled by
/// the value spacing so one-hot targets reproduce ntl_was with euclidean cost.
template <typename S>
LossResult<S> ntl_was_cdf(const Mat<S>& logits, const Mat<S>& targets,
                          const LabelBatch& labels, const NumberVocabulary& vocab,
                          SoftmaxDomain domain = SoftmaxDomain::Slice) {
    detail::check_labels(logits, labels, vocab.size());
    const int n = vocab.number_count();
    if (n < 2) throw std::invalid_argument("ntl_was_cdf needs >= 2 number tokens");
    if (!vocab.sorted_equidistant())
        throw std::invalid_argument("ntl_was_cdf requires a sorted equidistant vocabulary");
    if (targets.rows() != logits.rows() || targets.cols() != n)
        throw std::invalid_argument("target distribution shape mismatch");

    LossResult<S> r;
    r.per_position = Vec<S>::Zero(logits.rows());
    if (domain == SoftmaxDomain::Slice) {
        r.sparse_cols = vocab.number_indices();
        r.grad_logits = Mat<S>::Zero(logits.rows(), n);
    } else {
        r.grad_logits = Mat<S>::Zero(logits.rows(), logits.cols());
    }
    const auto mask = vocab.number_mask(labels.ids, labels.pad_mask);
    for (bool m : mask) r.number_position_count += m ? 1 : 0;
    if (r.number_position_count == 0) return r;
    const S inv = S(1) / S(r.number_position_count);
    const S spacing = S(vocab.value_spacing());

    detail::SliceSoftmax<S> sm(logits, vocab, domain);
    Vec<S> sign(n), h(n);
    for (int i = 0; i < logits.rows(); ++i) {
        if (!mask[i]) continue;
        const auto t = targets.row(i);
        if (std::abs(t.sum() - S(1)) > detail::stochastic_tol<S>() || t.minCoeff() < S(0))
            throw std::invalid_argument("target row is not a probability distribution");
        sm.compute(i);
        const auto& q = sm.probs();
        // D_v = CDF(target) - CDF(prediction); the last entry is ~0 and skipped.
        S loss = 0, ct = 0, cq = 0;
        for (int v = 0; v + 1 < n; ++v) {
            ct += t[v];
            cq += q[v];
            const S d = ct - cq;
            loss += std::abs(d);
            sign[v] = d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0));
        }
        loss *= spacing;
        // dL/dq_u = -spacing * sum_{v >= u} sign(D_v), a reverse cumulative sum.
        S acc = 0;
        h[n - 1] = S(0);
        for (int u = n - 2; u >= 0; --u) {
            acc += sign[u];
            h[u] = -spacing * acc;
        }
        r.per_position[i] = loss;
        r.total += inv * loss;
        sm.add_grad(i, h, inv, r.grad_logits);
    }
    return r;
}

/// Combined objective: total = ce + lambda * ntl, gradients likewise. When the
/// batch has no number positions the CE result is returned verbatim so text
/// batches are bit-for-bit unaffected.
template <typename S>
LossResult<S> combine(const LossResult<S>& ce, const LossResult<S>& ntl, S lambda = S(0.3)) {
    if (!(lambda >= S(0))) throw std::invalid_argument("lambda must be >= 0");
    if (ce.sparse()) throw std::invalid_argument("combine: base loss gradient must be dense");
    if (ce.grad_logits.rows() != ntl.grad_logits.rows() ||
        (!ntl.sparse() && ce.grad_logits.cols() != ntl.grad_logits.cols()))
        throw std::invalid_argument("combine: shape mismatch");
    if (ntl.number_position_count == 0 || lambda == S(0)) {
        LossResult<S> r = ce;
        r.number_position_count = ntl.number_position_count;
        return r;
    }
    LossResult<S> r;
    r.total = ce.total + lambda * ntl.total;
    r.per_position = ce.per_position + lambda * ntl.per_position;
    r.grad_logits = ce.grad_logits;
    ntl.add_grad_to(r.grad_logits, lambda);
    r.number_position_count = ntl.number_position_count;
    return r;
}

// Probability-space evaluators for the loss-landscape figures. These take an
// explicit distribution over the number slice instead of logits and return the
// loss value only.

/// -log of the probability on the label's slice position, floored at 1e-12.
inline double ce_from_probs(const Eigen::VectorXd& probs, int label_slice_index) {
    return -std::log(std::max(probs[label_slice_index], 1e-12)) + 0.0;  // +0.0 avoids -0
}

inline double ntl_mse_from_probs(const Eigen::VectorXd& probs, double label_value,
                                 const std::vector<double>& values) {
    double resid = 0;
    for (int j = 0; j < probs.size(); ++j) resid += probs[j] * (values[j] - label_value);
    return resid * resid;
}

inline double ntl_was_from_probs(const Eigen::VectorXd& probs, double label_value,
                                 const std::vector<double>& values) {
    double w = 0;
    for (int j = 0; j < probs.size(); ++j) w += probs[j] * std::abs(values[j] - label_value);
    return w;
}

}  // namespace ntl
