#pragma once

#include <Eigen/Dense>
#include <vector>

namespace ntl {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Token labels per position plus the mask of positions that count.
/// pad_mask[i] == false excludes position i from every loss.
struct LabelBatch {
    std::vector<int> ids;
    std::vector<bool> pad_mask;

    std::size_t size() const { return ids.size(); }
};

/// Value, per-position breakdown and analytic gradient of one loss call.
/// Losses whose gradient touches only the number columns store it compactly:
/// `sparse_cols` lists the vocabulary columns covered and `grad_logits` has
/// one column per entry; every other vocabulary column is implicitly zero.
/// When `sparse_cols` is empty, `grad_logits` matches the logits shape.
template <typename Scalar>
struct LossResult {
    Scalar total = 0;
    Vec<Scalar> per_position;   // zero at positions the loss ignores
    Mat<Scalar> grad_logits;
    std::vector<int> sparse_cols;
    int number_position_count = 0;

    bool sparse() const { return !sparse_cols.empty(); }

    /// dst += scale * gradient, scattering compact columns when needed.
    void add_grad_to(Mat<Scalar>& dst, Scalar scale = Scalar(1)) const {
        if (!sparse()) {
            dst += scale * grad_logits;
            return;
        }
        for (std::size_t j = 0; j < sparse_cols.size(); ++j)
            dst.col(sparse_cols[j]) += scale * grad_logits.col(static_cast<Eigen::Index>(j));
    }

    /// The gradient as a full logits-shaped matrix.
    Mat<Scalar> dense_grad(Eigen::Index vocab_cols) const {
        if (!sparse()) return grad_logits;
        Mat<Scalar> out = Mat<Scalar>::Zero(grad_logits.rows(), vocab_cols);
        add_grad_to(out);
        return out;
    }
};

}  // namespace ntl
