#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcigrid/linprog.hpp"

namespace rcigrid {

/// Global numeric tolerance for feasibility, redundancy and dedup tests.
inline constexpr double kTau = 1e-9;

struct KernelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptySetError : KernelError {
    using KernelError::KernelError;
};
struct UnboundedError : KernelError {
    using KernelError::KernelError;
};
struct DimensionError : KernelError {
    using KernelError::KernelError;
};

/// Convex polytope {x in R^n : normals * x <= offsets} in halfspace form.
///
/// The empty set is a distinguished marker (dimension preserved, no rows)
/// rather than an infeasible row system, so algorithms can branch on
/// emptiness explicitly.
class HPolytope {
public:
    HPolytope() : dim_(0), empty_(false) {}

    HPolytope(Eigen::MatrixXd normals, Eigen::VectorXd offsets)
        : normals_(std::move(normals)), offsets_(std::move(offsets)),
          dim_(static_cast<int>(normals_.cols())), empty_(false) {
        if (normals_.rows() != offsets_.size())
            throw DimensionError("HPolytope: row count mismatch");
        for (int i = 0; i < normals_.rows(); ++i) {
            if (normals_.row(i).lpNorm<Eigen::Infinity>() < 1e-14)
                throw KernelError("HPolytope: zero normal row");
        }
    }

    static HPolytope empty_set(int dim) {
        HPolytope p;
        p.dim_ = dim;
        p.empty_ = true;
        p.normals_.resize(0, dim);
        p.offsets_.resize(0);
        return p;
    }

    /// Whole space R^n (no constraints). Unbounded; used as an
    /// intermediate only.
    static HPolytope universe(int dim) {
        HPolytope p;
        p.dim_ = dim;
        p.normals_.resize(0, dim);
        p.offsets_.resize(0);
        return p;
    }

    int dim() const { return dim_; }
    int rows() const { return static_cast<int>(normals_.rows()); }
    bool is_empty_marker() const { return empty_; }
    const Eigen::MatrixXd& normals() const { return normals_; }
    const Eigen::VectorXd& offsets() const { return offsets_; }

    /// Emptiness decided by a feasibility LP (markers short-circuit).
    bool is_empty(double tau = kTau) const {
        (void)tau;
        if (empty_) return true;
        if (rows() == 0) return false;
        return !lp_feasible(normals_, offsets_);
    }

    bool contains(const Eigen::VectorXd& x, double tau = kTau) const {
        if (empty_) return false;
        if (x.size() != dim_) throw DimensionError("contains: dimension mismatch");
        for (int i = 0; i < rows(); ++i) {
            const double nrm = normals_.row(i).norm();
            if (normals_.row(i).dot(x) - offsets_(i) > tau * std::max(1.0, nrm))
                return false;
        }
        return true;
    }

    /// Copy with every row scaled to unit normal.
    HPolytope normalized() const {
        if (empty_ || rows() == 0) return *this;
        Eigen::MatrixXd A = normals_;
        Eigen::VectorXd b = offsets_;
        for (int i = 0; i < A.rows(); ++i) {
            const double nrm = A.row(i).norm();
            A.row(i) /= nrm;
            b(i) /= nrm;
        }
        return HPolytope(std::move(A), std::move(b));
    }

private:
    Eigen::MatrixXd normals_;
    Eigen::VectorXd offsets_;
    int dim_;
    bool empty_;
};

/// Axis-aligned box [lower, upper], converting losslessly to 2n halfspaces.
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Box(Eigen::VectorXd lo, Eigen::VectorXd hi)
        : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size())
            throw DimensionError("Box: bound size mismatch");
        for (int i = 0; i < lower.size(); ++i)
            if (lower(i) > upper(i)) throw KernelError("Box: lower > upper");
    }

    /// Symmetric box [-radius, radius].
    static Box symmetric(const Eigen::VectorXd& radius) {
        return Box(-radius, radius);
    }

    int dim() const { return static_cast<int>(lower.size()); }

    HPolytope to_polytope() const {
        const int n = dim();
        Eigen::MatrixXd A(2 * n, n);
        Eigen::VectorXd b(2 * n);
        A.setZero();
        for (int i = 0; i < n; ++i) {
            A(2 * i, i) = 1.0;
            b(2 * i) = upper(i);
            A(2 * i + 1, i) = -1.0;
            b(2 * i + 1) = -lower(i);
        }
        return HPolytope(std::move(A), std::move(b));
    }
};

/// sup_{x in P} direction.x via a linear program.
inline double support(const HPolytope& P, const Eigen::VectorXd& direction) {
    if (P.is_empty_marker()) throw EmptySetError("support: empty polytope");
    if (direction.size() != P.dim())
        throw DimensionError("support: dimension mismatch");
    const LpResult r = solve_lp(P.normals(), P.offsets(), direction);
    switch (r.status) {
        case LpStatus::Optimal:
            return r.objective;
        case LpStatus::Unbounded:
            throw UnboundedError("support: unbounded in direction");
        case LpStatus::Infeasible:
            throw EmptySetError("support: infeasible polytope");
        default:
            throw KernelError("support: LP iteration limit");
    }
}

/// Scales a set about the origin: s*P = {s*x : x in P} for s > 0.
inline HPolytope scale_set(const HPolytope& P, double s) {
    if (s <= 0.0) throw KernelError("scale_set: scale must be positive");
    if (P.is_empty_marker()) return P;
    return HPolytope(P.normals(), s * P.offsets());
}

namespace detail {

// Drop rows that duplicate an earlier row's (unit) normal, keeping the
// tightest offset. Expects normalized rows.
inline void dedup_rows(Eigen::MatrixXd& A, Eigen::VectorXd& b, double tol = 1e-9) {
    const int m = static_cast<int>(A.rows());
    std::vector<int> keep;
    for (int i = 0; i < m; ++i) {
        bool dup = false;
        for (int k : keep) {
            if ((A.row(i) - A.row(k)).lpNorm<Eigen::Infinity>() < tol) {
                b(k) = std::min(b(k), b(i));
                dup = true;
                break;
            }
        }
        if (!dup) keep.push_back(i);
    }
    if (static_cast<int>(keep.size()) == m) return;
    Eigen::MatrixXd A2(keep.size(), A.cols());
    Eigen::VectorXd b2(keep.size());
    for (size_t i = 0; i < keep.size(); ++i) {
        A2.row(i) = A.row(keep[i]);
        b2(i) = b(keep[i]);
    }
    A = std::move(A2);
    b = std::move(b2);
}

inline void normalize_rows(Eigen::MatrixXd& A, Eigen::VectorXd& b) {
    for (int i = 0; i < A.rows(); ++i) {
        const double nrm = A.row(i).norm();
        A.row(i) /= nrm;
        b(i) /= nrm;
    }
}

}  // namespace detail

/// Removes every redundant row (support against the remaining rows) and
/// normalizes row norms to 1. Infeasible systems collapse to the empty
/// marker.
inline HPolytope reduce(const HPolytope& P, double tau = kTau) {
    if (P.is_empty_marker() || P.rows() == 0) return P;

    Eigen::MatrixXd A = P.normals();
    Eigen::VectorXd b = P.offsets();
    detail::normalize_rows(A, b);
    detail::dedup_rows(A, b);

    if (!lp_feasible(A, b)) return HPolytope::empty_set(P.dim());

    const int m = static_cast<int>(A.rows());
    std::vector<bool> kept(m, true);
    int n_kept = m;
    for (int i = 0; i < m && n_kept > 1; ++i) {
        // Maximize a_i . x subject to the other kept rows, with the row's
        // own offset relaxed by 1 as a boundedness guard.
        Eigen::MatrixXd Ao(n_kept, A.cols());
        Eigen::VectorXd bo(n_kept);
        int r = 0;
        for (int j = 0; j < m; ++j) {
            if (!kept[j] || j == i) continue;
            Ao.row(r) = A.row(j);
            bo(r) = b(j);
            ++r;
        }
        Ao.row(r) = A.row(i);
        bo(r) = b(i) + 1.0;

        const LpResult lp = solve_lp(Ao, bo, A.row(i).transpose());
        if (lp.status == LpStatus::Optimal && lp.objective <= b(i) + tau) {
            kept[i] = false;
            --n_kept;
        }
    }

    Eigen::MatrixXd A2(n_kept, A.cols());
    Eigen::VectorXd b2(n_kept);
    int r = 0;
    for (int i = 0; i < m; ++i) {
        if (!kept[i]) continue;
        A2.row(r) = A.row(i);
        b2(r) = b(i);
        ++r;
    }
    return HPolytope(std::move(A2), std::move(b2));
}

/// Row concatenation followed by reduce; empty marker when infeasible.
inline HPolytope intersect(const HPolytope& P, const HPolytope& Q) {
    if (P.dim() != Q.dim())
        throw DimensionError("intersect: dimension mismatch");
    if (P.is_empty_marker() || Q.is_empty_marker())
        return HPolytope::empty_set(P.dim());
    Eigen::MatrixXd A(P.rows() + Q.rows(), P.dim());
    Eigen::VectorXd b(P.rows() + Q.rows());
    A << P.normals(), Q.normals();
    b << P.offsets(), Q.offsets();
    return reduce(HPolytope(std::move(A), std::move(b)));
}

/// Block-diagonal Cartesian product.
inline HPolytope product(const HPolytope& P, const HPolytope& Q) {
    const int n = P.dim() + Q.dim();
    if (P.is_empty_marker() || Q.is_empty_marker())
        return HPolytope::empty_set(n);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(P.rows() + Q.rows(), n);
    Eigen::VectorXd b(P.rows() + Q.rows());
    A.topLeftCorner(P.rows(), P.dim()) = P.normals();
    A.bottomRightCorner(Q.rows(), Q.dim()) = Q.normals();
    b << P.offsets(), Q.offsets();
    return HPolytope(std::move(A), std::move(b));
}

/// true iff scale*P contains Q, decided row-by-row through Q's support.
inline bool contains_scaled(const HPolytope& P, const HPolytope& Q,
                            double scale, double tau = kTau) {
    if (P.dim() != Q.dim())
        throw DimensionError("contains_scaled: dimension mismatch");
    if (Q.is_empty_marker()) return true;
    if (P.is_empty_marker()) return false;
    const HPolytope Pn = P.normalized();
    for (int i = 0; i < Pn.rows(); ++i) {
        double h;
        try {
            h = support(Q, Pn.normals().row(i).transpose());
        } catch (const UnboundedError&) {
            return false;
        }
        if (h > scale * Pn.offsets()(i) + tau) return false;
    }
    return true;
}

/// P eroded by the linear image F*Q: offsets shrink by sup_{q in Q} (F'a).q
/// row by row. Exact for halfspace representations; returns the empty
/// marker when the erosion exhausts P.
inline HPolytope erode_by_image(const HPolytope& P, const Eigen::MatrixXd& F,
                                const HPolytope& Q) {
    if (P.is_empty_marker()) return P;
    if (F.rows() != P.dim() || F.cols() != Q.dim())
        throw DimensionError("erode_by_image: map dimension mismatch");
    if (Q.is_empty_marker()) throw EmptySetError("erode_by_image: empty subtrahend");
    if (F.cols() == 0 || F.size() == 0) return P;

    Eigen::VectorXd b = P.offsets();
    for (int i = 0; i < P.rows(); ++i) {
        const Eigen::VectorXd dir = F.transpose() * P.normals().row(i).transpose();
        b(i) -= support(Q, dir);
    }
    if (!lp_feasible(P.normals(), b)) return HPolytope::empty_set(P.dim());
    return HPolytope(P.normals(), std::move(b));
}

/// Pontryagin difference P (-) Q.
inline HPolytope pontryagin_diff(const HPolytope& P, const HPolytope& Q) {
    if (P.dim() != Q.dim())
        throw DimensionError("pontryagin_diff: dimension mismatch");
    return erode_by_image(P, Eigen::MatrixXd::Identity(P.dim(), P.dim()), Q);
}

namespace detail {

// One Fourier-Motzkin elimination of column `col`. Combined rows with a
// vanishing normal are either trivially true (dropped) or witness
// infeasibility (reported through the flag).
inline bool fm_eliminate(Eigen::MatrixXd& A, Eigen::VectorXd& b, int col) {
    normalize_rows(A, b);
    const double coef_tol = 1e-11;
    std::vector<int> pos, neg, zer;
    for (int i = 0; i < A.rows(); ++i) {
        const double a = A(i, col);
        if (a > coef_tol)
            pos.push_back(i);
        else if (a < -coef_tol)
            neg.push_back(i);
        else
            zer.push_back(i);
    }

    const int n_new = static_cast<int>(zer.size() + pos.size() * neg.size());
    Eigen::MatrixXd A2(n_new, A.cols());
    Eigen::VectorXd b2(n_new);
    int r = 0;
    for (int i : zer) {
        A2.row(r) = A.row(i);
        b2(r) = b(i);
        ++r;
    }
    for (int i : pos) {
        for (int j : neg) {
            A2.row(r) = A.row(i) / A(i, col) + A.row(j) / (-A(j, col));
            b2(r) = b(i) / A(i, col) + b(j) / (-A(j, col));
            ++r;
        }
    }

    // Remove the eliminated column and weed out vanished rows.
    Eigen::MatrixXd A3(n_new, A.cols() - 1);
    A3 << A2.leftCols(col), A2.rightCols(A.cols() - 1 - col);
    std::vector<int> keep;
    for (int i = 0; i < n_new; ++i) {
        if (A3.row(i).lpNorm<Eigen::Infinity>() > 1e-10) {
            keep.push_back(i);
        } else if (b2(i) < -1e-9) {
            return false;  // 0 <= negative: infeasible
        }
    }
    Eigen::MatrixXd A4(keep.size(), A3.cols());
    Eigen::VectorXd b4(keep.size());
    for (size_t i = 0; i < keep.size(); ++i) {
        A4.row(i) = A3.row(keep[i]);
        b4(i) = b2(keep[i]);
    }
    if (A4.rows() > 0) {
        normalize_rows(A4, b4);
        dedup_rows(A4, b4);
    }
    A = std::move(A4);
    b = std::move(b4);
    return true;
}

}  // namespace detail

/// Exact shadow onto the coordinates in `keep` (ascending order) via
/// Fourier-Motzkin elimination with redundancy removal after each step.
inline HPolytope project(const HPolytope& P, const std::vector<int>& keep) {
    const int n = P.dim();
    for (size_t i = 0; i < keep.size(); ++i) {
        if (keep[i] < 0 || keep[i] >= n)
            throw DimensionError("project: keep index out of range");
        if (i > 0 && keep[i] <= keep[i - 1])
            throw DimensionError("project: keep indices must be ascending");
    }
    if (P.is_empty_marker())
        return HPolytope::empty_set(static_cast<int>(keep.size()));

    std::vector<int> drop;
    for (int i = n - 1; i >= 0; --i) {
        if (std::find(keep.begin(), keep.end(), i) == keep.end())
            drop.push_back(i);  // descending, so indices stay valid
    }

    Eigen::MatrixXd A = P.normals();
    Eigen::VectorXd b = P.offsets();
    for (int col : drop) {
        if (!detail::fm_eliminate(A, b, col))
            return HPolytope::empty_set(static_cast<int>(keep.size()));
        if (A.rows() > 0) {
            HPolytope step = reduce(HPolytope(A, b));
            if (step.is_empty_marker())
                return HPolytope::empty_set(static_cast<int>(keep.size()));
            A = step.normals();
            b = step.offsets();
        }
    }
    if (A.rows() == 0) return HPolytope::universe(static_cast<int>(keep.size()));
    return HPolytope(std::move(A), std::move(b));
}

/// Exact Minkowski sum via projection of the lifted product
/// {(z, q) : z - q in P, q in Q} onto z.
inline HPolytope minkowski_sum(const HPolytope& P, const HPolytope& Q) {
    const int n = P.dim();
    if (n != Q.dim()) throw DimensionError("minkowski_sum: dimension mismatch");
    if (P.is_empty_marker() || Q.is_empty_marker())
        throw EmptySetError("minkowski_sum: empty operand");

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(P.rows() + Q.rows(), 2 * n);
    Eigen::VectorXd b(P.rows() + Q.rows());
    A.topLeftCorner(P.rows(), n) = P.normals();
    A.topRightCorner(P.rows(), n) = -P.normals();
    A.bottomRightCorner(Q.rows(), n) = Q.normals();
    b << P.offsets(), Q.offsets();

    std::vector<int> keep(n);
    for (int i = 0; i < n; ++i) keep[i] = i;
    return project(HPolytope(std::move(A), std::move(b)), keep);
}

/// Exact image F*P. Invertible maps transform rows directly; otherwise the
/// image is the shadow of the lifted graph {(y, x) : y = F x, x in P}.
inline HPolytope linear_image(const Eigen::MatrixXd& F, const HPolytope& P) {
    const int n_in = static_cast<int>(F.cols());
    const int n_out = static_cast<int>(F.rows());
    if (n_in != P.dim()) throw DimensionError("linear_image: dimension mismatch");
    if (P.is_empty_marker()) throw EmptySetError("linear_image: empty operand");

    if (n_in == n_out) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(F);
        if (lu.isInvertible()) {
            const Eigen::MatrixXd Finv = lu.inverse();
            return HPolytope(P.normals() * Finv, P.offsets());
        }
    }

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n_out + P.rows(), n_out + n_in);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(2 * n_out + P.rows());
    A.topLeftCorner(n_out, n_out) = Eigen::MatrixXd::Identity(n_out, n_out);
    A.block(0, n_out, n_out, n_in) = -F;
    A.block(n_out, 0, n_out, n_out) = -Eigen::MatrixXd::Identity(n_out, n_out);
    A.block(n_out, n_out, n_out, n_in) = F;
    A.bottomRightCorner(P.rows(), n_in) = P.normals();
    b.tail(P.rows()) = P.offsets();

    std::vector<int> keep(n_out);
    for (int i = 0; i < n_out; ++i) keep[i] = i;
    return project(HPolytope(std::move(A), std::move(b)), keep);
}

struct DimensionTooHighError : KernelError {
    using KernelError::KernelError;
};

/// All extreme points (dimension <= 6), deduplicated and sorted
/// lexicographically for a deterministic order.
inline std::vector<Eigen::VectorXd> vertices(const HPolytope& P) {
    const int n = P.dim();
    if (n > 6) throw DimensionTooHighError("vertices: dimension above 6");
    if (P.is_empty_marker()) return {};
    if (P.rows() < n + 1) throw UnboundedError("vertices: unbounded polytope");

    // Boundedness check along the axes.
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        e(i) = 1.0;
        support(P, e);
        support(P, -e);
    }

    const HPolytope Pn = P.normalized();
    const Eigen::MatrixXd& A = Pn.normals();
    const Eigen::VectorXd& b = Pn.offsets();
    const int m = Pn.rows();

    std::vector<Eigen::VectorXd> verts;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;

    auto advance = [&]() {
        int k = n - 1;
        while (k >= 0 && idx[k] == m - n + k) --k;
        if (k < 0) return false;
        ++idx[k];
        for (int j = k + 1; j < n; ++j) idx[j] = idx[j - 1] + 1;
        return true;
    };

    const double feas_tol = 1e-7;
    do {
        Eigen::MatrixXd S(n, n);
        Eigen::VectorXd rb(n);
        for (int i = 0; i < n; ++i) {
            S.row(i) = A.row(idx[i]);
            rb(i) = b(idx[i]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
        if (!lu.isInvertible()) continue;
        const Eigen::VectorXd v = lu.solve(rb);
        if (((A * v - b).array() > feas_tol).any()) continue;
        bool dup = false;
        for (const auto& w : verts) {
            if ((w - v).lpNorm<Eigen::Infinity>() < 1e-7) {
                dup = true;
                break;
            }
        }
        if (!dup) verts.push_back(v);
    } while (advance());

    std::sort(verts.begin(), verts.end(),
              [](const Eigen::VectorXd& a, const Eigen::VectorXd& b2) {
                  for (int i = 0; i < a.size(); ++i) {
                      if (a(i) != b2(i)) return a(i) < b2(i);
                  }
                  return false;
              });
    return verts;
}

/// Tight axis-aligned bounding box via 2n support calls.
inline Box bounding_box(const HPolytope& P) {
    if (P.is_empty_marker()) throw EmptySetError("bounding_box: empty polytope");
    const int n = P.dim();
    Eigen::VectorXd lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        e(i) = 1.0;
        hi(i) = support(P, e);
        lo(i) = -support(P, -e);
    }
    return Box(lo, hi);
}

}  // namespace rcigrid
