#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "rcigrid/network.hpp"
#include "rcigrid/parallel.hpp"
#include "rcigrid/polytope.hpp"

namespace rcigrid {

struct NotControllableError : KernelError {
    using KernelError::KernelError;
};

/// Consensus aborted because an eroded preimage emptied out.
struct EmptyCouplingError : KernelError {
    int subsystem;
    explicit EmptyCouplingError(int sub)
        : KernelError("consensus: eroded preimage of subsystem " +
                      std::to_string(sub) + " is empty"),
          subsystem(sub) {}
};

struct IterationConfig {
    double epsilon = 1e-3;  // termination tolerance
    int k_max = 200;
    int l_max = 50;
    bool keep_history = false;
};

enum class RciStatus { Converged, EmptyFailure, Inconclusive };

inline const char* to_string(RciStatus s) {
    switch (s) {
        case RciStatus::Converged: return "converged";
        case RciStatus::EmptyFailure: return "empty-failure";
        default: return "inconclusive";
    }
}

struct RciResult {
    RciStatus status = RciStatus::Inconclusive;
    std::vector<HPolytope> sets;  // per subsystem; single entry centralized
    int k_used = 0;
    std::vector<int> consensus_iterations;           // sweeps per k
    std::vector<std::vector<double>> sweep_changes;  // per k, per sweep
    std::vector<std::vector<HPolytope>> history;     // per k, per subsystem
    int failed_subsystem = -1;
    bool consensus_warning = false;  // some consensus pass hit l_max
};

/// Converged coupling sets per subsystem plus diagnostics of the sweeps
/// that produced them.
struct CouplingSets {
    std::vector<HPolytope> Y;            // dim 2|N_i|
    std::vector<HPolytope> U_neighbors;  // dim |N_i|
    int sweeps = 0;
    std::vector<double> delta_changes;  // max per-sweep delta-limit change
    bool converged = false;
    bool step_bound_violated = false;
};

namespace detail {

inline bool controllable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXd ctrb(n, n * B.cols());
    Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(n, n);
    for (int k = 0; k < n; ++k) {
        ctrb.middleCols(k * B.cols(), B.cols()) = Ak * B;
        Ak = A * Ak;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ctrb);
    qr.setThreshold(1e-9);
    return qr.rank() == n;
}

// {x : exists u in U with A x + B u in P}, i.e. the shadow of the lifted
// polytope M = {(x, u) : A x + B u in P, u in U} onto x.
inline HPolytope backpropagate(const HPolytope& P, const Eigen::MatrixXd& A,
                               const Eigen::MatrixXd& B, const HPolytope& U) {
    if (P.is_empty_marker())
        return HPolytope::empty_set(static_cast<int>(A.cols()));
    const int n = static_cast<int>(A.cols());
    const int m = static_cast<int>(B.cols());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(P.rows() + U.rows(), n + m);
    Eigen::VectorXd b(P.rows() + U.rows());
    M.topLeftCorner(P.rows(), n) = P.normals() * A;
    M.topRightCorner(P.rows(), m) = P.normals() * B;
    M.bottomRightCorner(U.rows(), m) = U.normals();
    b << P.offsets(), U.offsets();

    std::vector<int> keep(n);
    for (int i = 0; i < n; ++i) keep[i] = i;
    return project(HPolytope(std::move(M), std::move(b)), keep);
}

// Product of an ordered list of polytopes; the empty list gives the
// zero-dimensional singleton.
inline HPolytope product_of(const std::vector<const HPolytope*>& parts) {
    HPolytope acc = HPolytope::universe(0);
    for (const HPolytope* p : parts) acc = product(acc, *p);
    return acc;
}

inline double delta_upper(const HPolytope& P) {
    Eigen::Vector2d e(1.0, 0.0);
    return support(P, e);
}
inline double delta_lower(const HPolytope& P) {
    Eigen::Vector2d e(-1.0, 0.0);
    return -support(P, e);
}

}  // namespace detail

/// One backward reachability step for the full system:
/// P = target (-) Ehat*D, then the preimage {x : exists u in U, Ahat x +
/// Bhat u in P}. Returns the empty marker if the erosion exhausts the
/// target.
inline HPolytope preimage_step(const HPolytope& X_target,
                               const Eigen::MatrixXd& Ahat,
                               const Eigen::MatrixXd& Bhat,
                               const Eigen::MatrixXd& Ehat, const HPolytope& U,
                               const HPolytope& D) {
    if (X_target.is_empty_marker()) return X_target;
    const HPolytope P = erode_by_image(X_target, Ehat, D);
    if (P.is_empty_marker()) return P;
    return detail::backpropagate(P, Ahat, Bhat, U);
}

inline HPolytope preimage_step(const HPolytope& X_target,
                               const DiscreteModel& dyn, const HPolytope& U,
                               const HPolytope& D) {
    return preimage_step(X_target, dyn.A, dyn.B, dyn.E, U, D);
}

/// Largest-RCI approximation by iterated one-step admissible sets
/// (centralized). Terminates when (1+eps) X^{k+1} contains X^k.
inline RciResult centralized_rci(const DiscreteModel& dyn, const HPolytope& X,
                                 const HPolytope& U, const HPolytope& D,
                                 const IterationConfig& cfg) {
    if (!detail::controllable(dyn.A, dyn.B))
        throw NotControllableError("centralized_rci: (Ahat, Bhat) not controllable");

    RciResult res;
    HPolytope Xk = reduce(X);
    if (cfg.keep_history) res.history.push_back({Xk});
    for (int k = 0; k < cfg.k_max; ++k) {
        const HPolytope R = preimage_step(Xk, dyn, U, D);
        const HPolytope Xk1 = intersect(R, Xk);
        res.k_used = k + 1;
        if (cfg.keep_history) res.history.push_back({Xk1});
        if (Xk1.is_empty_marker()) {
            res.status = RciStatus::EmptyFailure;
            res.failed_subsystem = 0;
            res.sets = {HPolytope::empty_set(X.dim())};
            return res;
        }
        if (contains_scaled(Xk1, Xk, 1.0 + cfg.epsilon)) {
            res.status = RciStatus::Converged;
            res.sets = {Xk1};
            return res;
        }
        Xk = Xk1;
    }
    res.status = RciStatus::Inconclusive;
    res.sets = {Xk};
    return res;
}

namespace detail {

// Eroded one-step preimage for one subsystem against fixed coupling sets.
inline HPolytope subsystem_admissible(const DiscreteSubsystem& s,
                                      const HPolytope& Xk_i,
                                      const HPolytope& Y_i,
                                      const HPolytope& U_nbr,
                                      const HPolytope& U_i, const HPolytope& D) {
    HPolytope P = Xk_i;
    if (s.A2.cols() > 0) {
        P = erode_by_image(P, s.A2, Y_i);
        if (P.is_empty_marker()) return P;
    }
    P = erode_by_image(P, s.E, D);
    if (P.is_empty_marker()) return P;
    if (s.B2.cols() > 0) {
        P = erode_by_image(P, s.B2, U_nbr);
        if (P.is_empty_marker()) return P;
    }
    const HPolytope R = backpropagate(P, s.A1, s.B1, U_i);
    return intersect(R, Xk_i);
}

}  // namespace detail

/// Consensus fixed point of the state-coupling disturbance sets for one
/// outer step k. All subsystems update simultaneously against the previous
/// sweep (Jacobi), so the result is order-invariant and parallelizable.
/// Hitting l_max is reported through `converged == false` rather than an
/// error; an emptied-out preimage raises EmptyCouplingError.
inline CouplingSets consensus_coupling(const DiscreteModel& dyn,
                                       const std::vector<HPolytope>& X_current,
                                       const std::vector<HPolytope>& U,
                                       const HPolytope& D,
                                       const IterationConfig& cfg) {
    const auto& subs = dyn.subsystems;
    const int n = static_cast<int>(subs.size());

    CouplingSets cs;
    cs.U_neighbors.reserve(n);
    cs.Y.reserve(n);
    for (int i = 0; i < n; ++i) {
        std::vector<const HPolytope*> xs, us;
        for (int j : subs[i].neighbors) {
            xs.push_back(&X_current[j]);
            us.push_back(&U[j]);
        }
        cs.Y.push_back(detail::product_of(xs));
        cs.U_neighbors.push_back(detail::product_of(us));
    }

    // Theorem-1 guideline on the continuous coupling norms (c = 1).
    {
        double max_norm = 0.0, max_deg = 0.0;
        for (const auto& s : subs) {
            if (s.A2.size() > 0) {
                const double n2 =
                    Eigen::JacobiSVD<Eigen::MatrixXd>(s.A2).singularValues()(0) /
                    dyn.h;
                max_norm = std::max(max_norm, n2);
            }
            max_deg = std::max(max_deg, static_cast<double>(s.neighbors.size()));
        }
        if (max_norm > 0.0 && max_deg > 0.0)
            cs.step_bound_violated =
                dyn.h > 1.0 / (max_norm * std::sqrt(2.0 * max_deg));
    }

    std::vector<double> prev_up(n), prev_lo(n);
    bool have_prev = false;

    for (int l = 0; l < cfg.l_max; ++l) {
        std::vector<HPolytope> Xnext(n, HPolytope());
        std::vector<int> empty_flag(n, 0);
        parallel_for(n, [&](int i) {
            const HPolytope adm = detail::subsystem_admissible(
                subs[i], X_current[i], cs.Y[i], cs.U_neighbors[i], U[i], D);
            if (adm.is_empty_marker())
                empty_flag[i] = 1;
            else
                Xnext[i] = adm;
        });
        for (int i = 0; i < n; ++i)
            if (empty_flag[i]) throw EmptyCouplingError(i);

        // Per-sweep movement of the angle limits (decay diagnostic).
        double change = 0.0;
        for (int i = 0; i < n; ++i) {
            const double up = detail::delta_upper(Xnext[i]);
            const double lo = detail::delta_lower(Xnext[i]);
            if (have_prev)
                change = std::max({change, std::abs(up - prev_up[i]),
                                   std::abs(lo - prev_lo[i])});
            prev_up[i] = up;
            prev_lo[i] = lo;
        }
        if (have_prev) cs.delta_changes.push_back(change);
        have_prev = true;

        std::vector<HPolytope> Ynext;
        Ynext.reserve(n);
        for (int i = 0; i < n; ++i) {
            std::vector<const HPolytope*> xs;
            for (int j : subs[i].neighbors) xs.push_back(&Xnext[j]);
            Ynext.push_back(detail::product_of(xs));
        }

        cs.sweeps = l + 1;
        bool sandwich = true;
        for (int i = 0; i < n && sandwich; ++i) {
            sandwich = contains_scaled(Ynext[i], scale_set(cs.Y[i], 1.0 - cfg.epsilon),
                                       1.0) &&
                       contains_scaled(cs.Y[i], Ynext[i], 1.0 + cfg.epsilon);
        }
        cs.Y = std::move(Ynext);
        if (sandwich) {
            cs.converged = true;
            return cs;
        }
    }
    cs.converged = false;  // l_max reached; caller decides how loud to warn
    return cs;
}

/// Distributed RCI computation: per outer step, converge the coupling sets
/// by consensus, then take one eroded backward-reachability step per
/// subsystem.
inline RciResult distributed_rci(const DiscreteModel& dyn,
                                 const std::vector<HPolytope>& X0,
                                 const std::vector<HPolytope>& U,
                                 const HPolytope& D,
                                 const IterationConfig& cfg) {
    const auto& subs = dyn.subsystems;
    const int n = static_cast<int>(subs.size());
    for (const auto& s : subs) {
        if (!detail::controllable(s.A1, s.B1))
            throw NotControllableError("distributed_rci: (A1, B1) of bus " +
                                       std::to_string(s.bus_id) +
                                       " not controllable");
    }

    RciResult res;
    std::vector<HPolytope> Xk;
    Xk.reserve(n);
    for (const auto& x : X0) Xk.push_back(reduce(x));
    if (cfg.keep_history) res.history.push_back(Xk);

    for (int k = 0; k < cfg.k_max; ++k) {
        CouplingSets cs;
        try {
            cs = consensus_coupling(dyn, Xk, U, D, cfg);
        } catch (const EmptyCouplingError& e) {
            res.status = RciStatus::EmptyFailure;
            res.failed_subsystem = e.subsystem;
            res.k_used = k;
            res.sets = Xk;
            return res;
        }
        res.consensus_iterations.push_back(cs.sweeps);
        res.sweep_changes.push_back(cs.delta_changes);
        if (!cs.converged) res.consensus_warning = true;

        std::vector<HPolytope> Xk1(n, HPolytope());
        std::vector<int> empty_flag(n, 0);
        parallel_for(n, [&](int i) {
            const HPolytope adm = detail::subsystem_admissible(
                subs[i], Xk[i], cs.Y[i], cs.U_neighbors[i], U[i], D);
            if (adm.is_empty_marker())
                empty_flag[i] = 1;
            else
                Xk1[i] = adm;
        });
        res.k_used = k + 1;
        for (int i = 0; i < n; ++i) {
            if (empty_flag[i]) {
                res.status = RciStatus::EmptyFailure;
                res.failed_subsystem = i;
                res.sets = Xk;
                return res;
            }
        }
        if (cfg.keep_history) res.history.push_back(Xk1);

        bool done = true;
        for (int i = 0; i < n && done; ++i)
            done = contains_scaled(Xk1[i], Xk[i], 1.0 + cfg.epsilon);
        Xk = std::move(Xk1);
        if (done) {
            res.status = RciStatus::Converged;
            res.sets = Xk;
            return res;
        }
    }
    res.status = RciStatus::Inconclusive;
    res.sets = Xk;
    return res;
}

}  // namespace rcigrid
