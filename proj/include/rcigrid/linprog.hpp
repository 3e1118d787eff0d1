#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <vector>

namespace rcigrid {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    double objective = 0.0;
    Eigen::VectorXd x;
};

namespace detail {

// Dense two-phase tableau simplex for
//     maximize c'x  subject to  A x <= b,  x free.
//
// Free variables are split as x = xp - xm. Rows with negative right-hand
// side are negated and given an artificial variable; phase 1 minimizes the
// artificial sum, phase 2 the actual objective. Bland's rule (lowest
// eligible index enters, lowest basic index breaks ratio ties) keeps the
// iteration from cycling on the degenerate tableaus that polytope
// calculus produces constantly.
class SimplexTableau {
public:
    SimplexTableau(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                   const Eigen::VectorXd& c)
        : m_(static_cast<int>(A.rows())), n_(static_cast<int>(A.cols())) {
        if (b.size() != m_ || c.size() != n_)
            throw std::invalid_argument("solve_lp: inconsistent dimensions");

        n_art_ = 0;
        for (int i = 0; i < m_; ++i)
            if (b(i) < 0.0) ++n_art_;

        const int cols = 2 * n_ + m_ + n_art_ + 1;
        T_.setZero(m_, cols);
        basis_.resize(m_);
        active_.assign(m_, true);

        int art = 0;
        for (int i = 0; i < m_; ++i) {
            const double sign = (b(i) < 0.0) ? -1.0 : 1.0;
            T_.block(i, 0, 1, n_) = sign * A.row(i);
            T_.block(i, n_, 1, n_) = -sign * A.row(i);
            T_(i, 2 * n_ + i) = sign;  // slack
            T_(i, cols - 1) = sign * b(i);
            if (sign < 0.0) {
                T_(i, 2 * n_ + m_ + art) = 1.0;
                basis_[i] = 2 * n_ + m_ + art;
                ++art;
            } else {
                basis_[i] = 2 * n_ + i;
            }
        }
        c_ = c;
    }

    LpResult run() {
        LpResult res;
        if (n_art_ > 0) {
            Eigen::VectorXd cost1 = Eigen::VectorXd::Zero(num_cols());
            cost1.segment(2 * n_ + m_, n_art_).setOnes();
            if (!iterate(cost1, /*allow_artificial=*/true)) {
                res.status = LpStatus::IterationLimit;
                return res;
            }
            if (phase_objective(cost1) > kFeasTol) {
                res.status = LpStatus::Infeasible;
                return res;
            }
            expel_artificials();
        }

        Eigen::VectorXd cost2 = Eigen::VectorXd::Zero(num_cols());
        cost2.segment(0, n_) = -c_;
        cost2.segment(n_, n_) = c_;
        if (!iterate(cost2, /*allow_artificial=*/false)) {
            res.status = unbounded_ ? LpStatus::Unbounded : LpStatus::IterationLimit;
            return res;
        }

        res.x = Eigen::VectorXd::Zero(n_);
        for (int i = 0; i < m_; ++i) {
            if (!active_[i]) continue;
            const int j = basis_[i];
            const double v = rhs(i);
            if (j < n_)
                res.x(j) += v;
            else if (j < 2 * n_)
                res.x(j - n_) -= v;
        }
        res.objective = c_.dot(res.x);
        res.status = LpStatus::Optimal;
        return res;
    }

private:
    static constexpr double kPivTol = 1e-10;
    static constexpr double kCostTol = 1e-9;
    static constexpr double kFeasTol = 1e-8;
    static constexpr int kMaxPivots = 20000;

    int num_cols() const { return static_cast<int>(T_.cols()) - 1; }
    double rhs(int i) const { return T_(i, T_.cols() - 1); }

    // Reduced cost of column j against cost vector `cost` under the
    // current basis: cost_j - sum_i cost_basis(i) * T(i, j).
    Eigen::VectorXd reduced_costs(const Eigen::VectorXd& cost) const {
        Eigen::VectorXd z = cost;
        for (int i = 0; i < m_; ++i) {
            if (!active_[i]) continue;
            const double cb = cost(basis_[i]);
            if (cb != 0.0) z -= cb * T_.row(i).head(num_cols()).transpose();
        }
        return z;
    }

    double phase_objective(const Eigen::VectorXd& cost) const {
        double v = 0.0;
        for (int i = 0; i < m_; ++i)
            if (active_[i]) v += cost(basis_[i]) * rhs(i);
        return v;
    }

    bool iterate(const Eigen::VectorXd& cost, bool allow_artificial) {
        const int limit = allow_artificial ? num_cols() : 2 * n_ + m_;
        for (int pivots = 0; pivots < kMaxPivots; ++pivots) {
            const Eigen::VectorXd z = reduced_costs(cost);
            int enter = -1;
            for (int j = 0; j < limit; ++j) {
                if (z(j) < -kCostTol) { enter = j; break; }  // Bland: lowest index
            }
            if (enter < 0) return true;

            int leave_row = -1;
            double best_ratio = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m_; ++i) {
                if (!active_[i]) continue;
                const double a = T_(i, enter);
                if (a <= kPivTol) continue;
                const double ratio = rhs(i) / a;
                if (ratio < best_ratio - kPivTol ||
                    (ratio < best_ratio + kPivTol &&
                     (leave_row < 0 || basis_[i] < basis_[leave_row]))) {
                    best_ratio = ratio;
                    leave_row = i;
                }
            }
            if (leave_row < 0) {
                unbounded_ = true;
                return false;
            }
            pivot(leave_row, enter);
        }
        return false;
    }

    void pivot(int row, int col) {
        T_.row(row) /= T_(row, col);
        for (int i = 0; i < m_; ++i) {
            if (i == row || !active_[i]) continue;
            const double f = T_(i, col);
            if (f != 0.0) T_.row(i) -= f * T_.row(row);
        }
        basis_[row] = col;
    }

    // After phase 1, pivot basic artificials out on any usable column;
    // rows that admit no pivot are linearly dependent and get dropped.
    void expel_artificials() {
        for (int i = 0; i < m_; ++i) {
            if (!active_[i] || basis_[i] < 2 * n_ + m_) continue;
            int col = -1;
            for (int j = 0; j < 2 * n_ + m_; ++j) {
                if (std::abs(T_(i, j)) > 1e-7) { col = j; break; }
            }
            if (col >= 0)
                pivot(i, col);
            else
                active_[i] = false;
        }
    }

    int m_, n_, n_art_;
    Eigen::MatrixXd T_;
    Eigen::VectorXd c_;
    std::vector<int> basis_;
    std::vector<bool> active_;
    bool unbounded_ = false;
};

}  // namespace detail

/// Maximizes c'x over {x : A x <= b} with x unrestricted in sign.
inline LpResult solve_lp(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                         const Eigen::VectorXd& c) {
    if (A.rows() == 0) {
        // No constraints: optimum is 0 at the origin unless the objective
        // has a nonzero component, which makes the problem unbounded.
        LpResult res;
        if (c.lpNorm<Eigen::Infinity>() > 0.0) {
            res.status = LpStatus::Unbounded;
        } else {
            res.status = LpStatus::Optimal;
            res.x = Eigen::VectorXd::Zero(c.size());
            res.objective = 0.0;
        }
        return res;
    }
    detail::SimplexTableau tab(A, b, c);
    return tab.run();
}

/// True when {x : A x <= b} is nonempty.
inline bool lp_feasible(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    if (A.rows() == 0) return true;
    const LpResult r = solve_lp(A, b, Eigen::VectorXd::Zero(A.cols()));
    return r.status == LpStatus::Optimal;
}

}  // namespace rcigrid
