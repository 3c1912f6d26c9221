#pragma once

#include <Eigen/Dense>

#include "ntl/vocab.hpp"

namespace ntl {

enum class CostKind { Euclidean, Squashed, Explicit };

/// Pairwise transport cost between number tokens. Symmetric, zero diagonal,
/// positive off-diagonal for distinct values.
struct CostSpec {
    CostKind kind = CostKind::Euclidean;
    double squash_factor = 0.0;  // meaningful for Squashed only
    Eigen::MatrixXd matrix;      // realized n x n cost over the number slice
};

/// Euclidean: C[j][k] = |v_j - v_k|.
CostSpec build_cost_euclidean(const NumberVocabulary& vocab);

/// Power-law squash: C = d_min * (d / d_min)^beta with
/// beta = ln(s) / ln(d_max / d_min) over nonzero euclidean distances d.
/// s = d_max/d_min recovers euclidean; s = 1 makes all off-diagonal costs
/// equal (nominal scale). Throws on s <= 0.
CostSpec build_cost_squashed(const NumberVocabulary& vocab, double s);

/// Validates and wraps a user matrix. Throws on asymmetry, nonzero diagonal,
/// non-positive off-diagonal for distinct values, or shape mismatch.
CostSpec build_cost_explicit(const NumberVocabulary& vocab, const Eigen::MatrixXd& matrix);

/// CSV, row-major, shortest exact decimal representation per entry.
void save_cost_csv(const CostSpec& cost, const std::string& path);

}  // namespace ntl
