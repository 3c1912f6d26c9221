#pragma once

#include <Eigen/Dense>

#include "ntl/cost.hpp"

namespace ntl {

/// Exact Wasserstein-1 on the real line: sort the support by value and
/// integrate the absolute CDF difference.
double wasserstein_closed_form(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& values);

/// Exact transportation linear program for an arbitrary cost matrix, solved
/// with the transportation simplex (Bland pivoting, ties broken by lowest
/// cell index). Support size <= 64.
double wasserstein_lp(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                      const Eigen::MatrixXd& cost);

/// Exact optimum of the discrete optimal-transport problem between p and q
/// on the shared support `values`. Euclidean cost uses the closed form,
/// everything else the transportation simplex. Test oracle; not on any
/// training path. Throws on non-stochastic inputs or support mismatch.
double wasserstein_oracle(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                          const Eigen::VectorXd& values, const CostSpec& cost);

}  // namespace ntl
