#include "ntl/ot_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ntl {

namespace {

void check_distribution(const Eigen::VectorXd& p, const char* name) {
    if (p.size() == 0 || p.size() > 64)
        throw std::invalid_argument(std::string(name) + ": support size must be in [1, 64]");
    if (p.minCoeff() < 0.0 || std::abs(p.sum() - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(name) + ": not a probability distribution");
}

}  // namespace

double wasserstein_closed_form(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                               const Eigen::VectorXd& values) {
    check_distribution(p, "p");
    check_distribution(q, "q");
    if (q.size() != p.size() || values.size() != p.size())
        throw std::invalid_argument("support mismatch");
    const int n = static_cast<int>(p.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return values[a] < values[b]; });
    double w = 0.0, cdf_diff = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
        cdf_diff += p[order[k]] - q[order[k]];
        w += std::abs(cdf_diff) * (values[order[k + 1]] - values[order[k]]);
    }
    return w;
}

double wasserstein_lp(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                      const Eigen::MatrixXd& cost) {
    check_distribution(p, "p");
    check_distribution(q, "q");
    const int n = static_cast<int>(p.size());
    const int m = static_cast<int>(q.size());
    if (cost.rows() != n || cost.cols() != m)
        throw std::invalid_argument("cost matrix shape mismatch");

    // Balance supplies and demands exactly so the northwest-corner pass
    // terminates cleanly.
    std::vector<double> supply(p.data(), p.data() + n);
    std::vector<double> demand(q.data(), q.data() + m);
    const double imbalance = std::accumulate(supply.begin(), supply.end(), 0.0) -
                             std::accumulate(demand.begin(), demand.end(), 0.0);
    demand[m - 1] += imbalance;

    struct Cell {
        int i, j;
        double x;
    };
    std::vector<Cell> basis;  // exactly n + m - 1 cells, degenerate zeros allowed
    basis.reserve(n + m - 1);

    // Northwest-corner initial basic feasible solution. Each step advances
    // exactly one index, so the walk from (0,0) to (n-1,m-1) yields the
    // required n+m-1 basic cells, degenerate zeros included.
    {
        int i = 0, j = 0;
        std::vector<double> s = supply, d = demand;
        while (true) {
            const double x = std::max(0.0, std::min(s[i], d[j]));
            basis.push_back({i, j, x});
            s[i] -= x;
            d[j] -= x;
            if (i == n - 1 && j == m - 1) break;
            if (i < n - 1 && (s[i] <= d[j] || j == m - 1))
                ++i;
            else
                ++j;
        }
    }

    auto basic_index = [&](int i, int j) {
        for (std::size_t k = 0; k < basis.size(); ++k)
            if (basis[k].i == i && basis[k].j == j) return static_cast<int>(k);
        return -1;
    };

    const int max_pivots = 20000;
    for (int pivot = 0; pivot < max_pivots; ++pivot) {
        // Potentials from the basis tree: u_i + v_j = c_ij on basic cells.
        std::vector<double> u(n), v(m);
        std::vector<bool> u_set(n, false), v_set(m, false);
        u[0] = 0.0;
        u_set[0] = true;
        bool progressed = true;
        while (progressed) {
            progressed = false;
            for (const auto& c : basis) {
                if (u_set[c.i] && !v_set[c.j]) {
                    v[c.j] = cost(c.i, c.j) - u[c.i];
                    v_set[c.j] = true;
                    progressed = true;
                } else if (!u_set[c.i] && v_set[c.j]) {
                    u[c.i] = cost(c.i, c.j) - v[c.j];
                    u_set[c.i] = true;
                    progressed = true;
                }
            }
        }

        // Bland's rule: entering cell = lowest-index cell with negative
        // reduced cost. Guarantees termination under degeneracy.
        int ei = -1, ej = -1;
        for (int i = 0; i < n && ei < 0; ++i)
            for (int j = 0; j < m; ++j) {
                if (basic_index(i, j) >= 0) continue;
                if (cost(i, j) - u[i] - v[j] < -1e-12) {
                    ei = i;
                    ej = j;
                    break;
                }
            }
        if (ei < 0) break;  // optimal

        // Unique cycle through the entering cell: alternate row and column
        // moves along basic cells until a row move lands back in column ej.
        // The basis graph is a spanning tree, so a non-backtracking walk
        // cannot loop and exactly one closing path exists.
        std::vector<std::pair<int, int>> cycle{{ei, ej}};
        {
            auto dfs = [&](auto&& self, bool row_move) -> bool {
                const auto [ci, cj] = cycle.back();
                if (row_move) {
                    for (int j = 0; j < m; ++j) {
                        if (j == cj || basic_index(ci, j) < 0) continue;
                        cycle.emplace_back(ci, j);
                        if (j == ej && cycle.size() % 2 == 0) return true;
                        if (self(self, false)) return true;
                        cycle.pop_back();
                    }
                } else {
                    for (int i = 0; i < n; ++i) {
                        if (i == ci || basic_index(i, cj) < 0) continue;
                        cycle.emplace_back(i, cj);
                        if (self(self, true)) return true;
                        cycle.pop_back();
                    }
                }
                return false;
            };
            if (!dfs(dfs, true)) throw std::logic_error("transportation simplex: no cycle");
        }

        // Alternate +/- along the cycle; theta = min over '-' cells (odd
        // positions), leaving cell = lowest cell index among the minimizers.
        double theta = std::numeric_limits<double>::infinity();
        int leave = -1;
        for (std::size_t k = 1; k < cycle.size(); k += 2) {
            const int bi = basic_index(cycle[k].first, cycle[k].second);
            const bool better =
                basis[bi].x < theta ||
                (basis[bi].x == theta && leave >= 0 &&
                 cycle[k].first * m + cycle[k].second < basis[leave].i * m + basis[leave].j);
            if (leave < 0 || better) {
                theta = basis[bi].x;
                leave = bi;
            }
        }
        for (std::size_t k = 1; k < cycle.size(); ++k) {
            const int bi = basic_index(cycle[k].first, cycle[k].second);
            basis[bi].x += (k % 2 == 0) ? theta : -theta;
        }
        basis[leave] = {ei, ej, theta};
    }

    double total = 0.0;
    for (const auto& c : basis) total += c.x * cost(c.i, c.j);
    return total;
}

double wasserstein_oracle(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                          const Eigen::VectorXd& values, const CostSpec& cost) {
    if (cost.kind == CostKind::Euclidean)
        return wasserstein_closed_form(p, q, values);
    return wasserstein_lp(p, q, cost.matrix);
}

}  // namespace ntl
