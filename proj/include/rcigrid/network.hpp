#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcigrid/polytope.hpp"

namespace rcigrid {

struct NetworkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : NetworkError {
    using NetworkError::NetworkError;
};
struct SingularBusError : NetworkError {
    using NetworkError::NetworkError;
};
struct SingularNetworkError : NetworkError {
    using NetworkError::NetworkError;
};

enum class BusKind { Generator, Load, Passive };

/// One bus of the network. Angles are radians internally; spec files carry
/// degrees.
struct BusSpec {
    int id = 0;
    BusKind kind = BusKind::Passive;
    double V = 1.0;       // terminal voltage magnitude, p.u.
    double theta0 = 0.0;  // steady-state terminal angle, rad
    // Generator-only parameters.
    double M = 0.0;   // inertia, s^2/rad
    double D = 0.0;   // damping, p.u.
    double e = 0.0;   // internal emf, p.u.
    double Xd = 0.0;  // synchronous reactance, p.u.
    double delta0 = 0.0;  // steady-state rotor angle, rad
    // Load-only parameter.
    double d_bar = 0.0;  // disturbance bound, p.u.
};

struct LineSpec {
    int from = 0;
    int to = 0;
    double B = 0.0;  // susceptance entry, p.u.
    double G = 0.0;  // conductance entry, p.u.
};

struct GeneratorLimits {
    double delta_bar = 0.0;  // rad
    double omega_bar = 0.0;  // rad/s
    double u_bar = 0.0;      // p.u.
};

struct ConstraintSpec {
    std::map<int, GeneratorLimits> generators;  // keyed by bus id
    std::map<int, double> load_d_bar;           // keyed by bus id
};

struct NetworkSpec {
    std::vector<BusSpec> buses;
    std::vector<LineSpec> lines;
    double base_frequency_hz = 60.0;
    ConstraintSpec constraints;

    const BusSpec* find_bus(int id) const {
        for (const auto& b : buses)
            if (b.id == id) return &b;
        return nullptr;
    }
};

/// Row bookkeeping: bus order is file order; generator and load orderings
/// are the file-order subsequences.
struct NetworkIndex {
    std::vector<int> bus_ids;
    std::map<int, int> bus_row;
    std::vector<int> gen_rows;   // bus-row index of each generator
    std::vector<int> load_rows;  // bus-row index of each load
    std::vector<int> gen_ids;
    std::vector<int> load_ids;

    static NetworkIndex build(const NetworkSpec& spec) {
        NetworkIndex ix;
        for (const auto& b : spec.buses) {
            ix.bus_row[b.id] = static_cast<int>(ix.bus_ids.size());
            ix.bus_ids.push_back(b.id);
            if (b.kind == BusKind::Generator) {
                ix.gen_rows.push_back(ix.bus_row[b.id]);
                ix.gen_ids.push_back(b.id);
            } else if (b.kind == BusKind::Load) {
                ix.load_rows.push_back(ix.bus_row[b.id]);
                ix.load_ids.push_back(b.id);
            }
        }
        return ix;
    }
};

struct CouplingConstants {
    Eigen::MatrixXd C;       // N_B x N_B, zero diagonal
    Eigen::VectorXd C_row;   // C_i = sum_j C_ij
    Eigen::VectorXd K;       // per generator, subsystem order
    Eigen::VectorXd H_diag;  // N_B
};

/// Reduced swing dynamics xdot = A x + B u + E d with
/// x = (delta_1, omega_1, ..., delta_NG, omega_NG).
struct ContinuousModel {
    Eigen::MatrixXd A;  // 2N_G x 2N_G
    Eigen::MatrixXd B;  // 2N_G x N_G
    Eigen::MatrixXd E;  // 2N_G x N_L
    NetworkIndex index;
};

/// Per-bus block decomposition of the continuous model (Eq.-style split
/// into local dynamics and neighbor coupling).
struct SubsystemModel {
    int index = 0;   // subsystem position, 0-based
    int bus_id = 0;
    Eigen::Matrix2d A1;
    Eigen::Vector2d B1;
    Eigen::MatrixXd A2;          // 2 x 2|N_i|
    Eigen::MatrixXd B2;          // 2 x |N_i|
    Eigen::MatrixXd E;           // 2 x N_L
    std::vector<int> neighbors;  // subsystem indices, ascending
};

struct DiscreteSubsystem {
    int index = 0;
    int bus_id = 0;
    Eigen::Matrix2d A1;
    Eigen::Vector2d B1;
    Eigen::MatrixXd A2;
    Eigen::MatrixXd B2;
    Eigen::MatrixXd E;
    std::vector<int> neighbors;
};

/// Forward-Euler discretization: Ahat = I + hA, Bhat = hB, Ehat = hE,
/// with the matching per-subsystem blocks.
struct DiscreteModel {
    double h = 0.0;
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd E;
    std::vector<DiscreteSubsystem> subsystems;
    NetworkIndex index;
};

namespace detail {

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

inline const nlohmann::json& field(const nlohmann::json& j, const char* key,
                                   const std::string& path) {
    if (!j.contains(key))
        throw ParseError("missing field '" + path + "." + key + "'");
    return j.at(key);
}

inline double num_field(const nlohmann::json& j, const char* key,
                        const std::string& path) {
    const auto& v = field(j, key, path);
    if (!v.is_number())
        throw ParseError("field '" + path + "." + key + "' must be a number");
    return v.get<double>();
}

}  // namespace detail

/// Parses a network spec document. Angles in the file are degrees and get
/// converted; omega bounds are Hz in the file, rad/s in memory.
inline NetworkSpec parse_network(const nlohmann::json& j) {
    using detail::deg2rad;
    using detail::field;
    using detail::num_field;

    NetworkSpec spec;
    spec.base_frequency_hz = num_field(j, "base_frequency_hz", "$");

    const auto& buses = field(j, "buses", "$");
    if (!buses.is_array() || buses.empty())
        throw ParseError("'$.buses' must be a non-empty array");
    int bi = 0;
    for (const auto& bj : buses) {
        const std::string path = "$.buses[" + std::to_string(bi++) + "]";
        BusSpec b;
        b.id = static_cast<int>(num_field(bj, "id", path));
        const std::string kind = field(bj, "kind", path).get<std::string>();
        if (kind == "generator")
            b.kind = BusKind::Generator;
        else if (kind == "load")
            b.kind = BusKind::Load;
        else if (kind == "passive")
            b.kind = BusKind::Passive;
        else
            throw ParseError("field '" + path + ".kind' must be generator|load|passive");
        b.V = num_field(bj, "V", path);
        b.theta0 = deg2rad(num_field(bj, "theta0_deg", path));
        if (b.V <= 0.0) throw ParseError(path + ": V must be positive");
        if (b.kind == BusKind::Generator) {
            b.M = num_field(bj, "M", path);
            b.D = num_field(bj, "D", path);
            b.e = num_field(bj, "e", path);
            b.Xd = num_field(bj, "Xd", path);
            b.delta0 = deg2rad(num_field(bj, "delta0_deg", path));
            if (b.M <= 0.0) throw ParseError(path + ": M must be positive");
            if (b.D < 0.0) throw ParseError(path + ": D must be non-negative");
            if (b.Xd <= 0.0) throw ParseError(path + ": Xd must be positive");
        }
        for (const auto& other : spec.buses)
            if (other.id == b.id)
                throw ParseError(path + ": duplicate bus id " + std::to_string(b.id));
        spec.buses.push_back(b);
    }

    const auto& lines = field(j, "lines", "$");
    if (!lines.is_array()) throw ParseError("'$.lines' must be an array");
    int li = 0;
    for (const auto& lj : lines) {
        const std::string path = "$.lines[" + std::to_string(li++) + "]";
        LineSpec l;
        l.from = static_cast<int>(num_field(lj, "from", path));
        l.to = static_cast<int>(num_field(lj, "to", path));
        l.B = num_field(lj, "B", path);
        l.G = lj.contains("G") ? num_field(lj, "G", path) : 0.0;
        if (!spec.find_bus(l.from))
            throw ParseError(path + ": unknown bus " + std::to_string(l.from));
        if (!spec.find_bus(l.to))
            throw ParseError(path + ": unknown bus " + std::to_string(l.to));
        if (l.from == l.to) throw ParseError(path + ": self-loop line");
        spec.lines.push_back(l);
    }

    // Connectivity check.
    {
        std::map<int, int> comp;
        for (const auto& b : spec.buses) comp[b.id] = b.id;
        std::function<int(int)> find = [&](int x) {
            while (comp[x] != x) x = comp[x] = comp[comp[x]];
            return x;
        };
        for (const auto& l : spec.lines) comp[find(l.from)] = find(l.to);
        const int root = find(spec.buses.front().id);
        for (const auto& b : spec.buses) {
            if (find(b.id) != root)
                throw ParseError("network graph is not connected (bus " +
                                 std::to_string(b.id) + " unreachable)");
        }
    }

    const auto& cons = field(j, "constraints", "$");
    const auto& gens = field(cons, "generators", "$.constraints");
    for (const auto& [key, gj] : gens.items()) {
        const std::string path = "$.constraints.generators." + key;
        const int id = std::stoi(key);
        const BusSpec* bus = spec.find_bus(id);
        if (!bus || bus->kind != BusKind::Generator)
            throw ParseError(path + ": not a generator bus");
        GeneratorLimits g;
        g.delta_bar = deg2rad(num_field(gj, "delta_bar_deg", path));
        g.omega_bar = 2.0 * std::numbers::pi * num_field(gj, "omega_bar_hz", path);
        g.u_bar = num_field(gj, "u_bar", path);
        if (g.delta_bar <= 0 || g.omega_bar <= 0 || g.u_bar <= 0)
            throw ParseError(path + ": limits must be strictly positive");
        spec.constraints.generators[id] = g;
    }
    const auto& loads = field(cons, "loads", "$.constraints");
    for (const auto& [key, lj] : loads.items()) {
        const std::string path = "$.constraints.loads." + key;
        const int id = std::stoi(key);
        const BusSpec* bus = spec.find_bus(id);
        if (!bus || bus->kind != BusKind::Load)
            throw ParseError(path + ": not a load bus");
        const double d_bar = detail::num_field(lj, "d_bar", path);
        if (d_bar < 0) throw ParseError(path + ": d_bar must be non-negative");
        spec.constraints.load_d_bar[id] = d_bar;
    }
    for (auto& b : spec.buses) {
        if (b.kind == BusKind::Generator &&
            !spec.constraints.generators.count(b.id))
            throw ParseError("missing constraints for generator bus " +
                             std::to_string(b.id));
        if (b.kind == BusKind::Load) {
            if (!spec.constraints.load_d_bar.count(b.id))
                throw ParseError("missing constraints for load bus " +
                                 std::to_string(b.id));
            b.d_bar = spec.constraints.load_d_bar.at(b.id);
        }
    }
    return spec;
}

inline NetworkSpec load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open spec file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("JSON syntax error in " + path + ": " + e.what());
    }
    return parse_network(j);
}

/// Synchronizing coefficients C_ij, generator stiffnesses K_i and the
/// diagonal power-balance scaling H of the algebraic elimination.
inline CouplingConstants build_coupling_constants(const NetworkSpec& spec,
                                                  double tau = kTau) {
    const NetworkIndex ix = NetworkIndex::build(spec);
    const int nb = static_cast<int>(spec.buses.size());

    CouplingConstants cc;
    cc.C.setZero(nb, nb);
    for (const auto& l : spec.lines) {
        const int i = ix.bus_row.at(l.from);
        const int j = ix.bus_row.at(l.to);
        const BusSpec& bi = spec.buses[i];
        const BusSpec& bj = spec.buses[j];
        const double dij = bi.theta0 - bj.theta0;
        cc.C(i, j) += bi.V * bj.V * (l.B * std::cos(dij) - l.G * std::sin(dij));
        cc.C(j, i) += bi.V * bj.V * (l.B * std::cos(-dij) - l.G * std::sin(-dij));
    }
    cc.C_row = cc.C.rowwise().sum();

    cc.K.resize(ix.gen_rows.size());
    for (size_t g = 0; g < ix.gen_rows.size(); ++g) {
        const BusSpec& b = spec.buses[ix.gen_rows[g]];
        cc.K(g) = b.e * b.V / b.Xd * std::cos(b.delta0 - b.theta0);
    }

    cc.H_diag.resize(nb);
    for (int i = 0; i < nb; ++i) {
        double denom = cc.C_row(i);
        for (size_t g = 0; g < ix.gen_rows.size(); ++g)
            if (ix.gen_rows[g] == i) denom += cc.K(g);
        if (denom <= tau)
            throw SingularBusError("bus " + std::to_string(spec.buses[i].id) +
                                   ": C_i + K_i not positive");
        cc.H_diag(i) = 1.0 / denom;
    }
    return cc;
}

/// Eliminates the algebraic bus angles and returns the reduced state-space
/// model. The disturbance enters the power balance with a negative sign
/// (net load increase), so E carries that sign here.
inline ContinuousModel eliminate_algebraic(const NetworkSpec& spec,
                                           const CouplingConstants& cc) {
    const NetworkIndex ix = NetworkIndex::build(spec);
    const int nb = static_cast<int>(spec.buses.size());
    const int ng = static_cast<int>(ix.gen_rows.size());
    const int nl = static_cast<int>(ix.load_rows.size());
    if (ng == 0) throw SingularNetworkError("network has no generators");

    Eigen::MatrixXd Ig = Eigen::MatrixXd::Zero(nb, ng);
    for (int g = 0; g < ng; ++g) Ig(ix.gen_rows[g], g) = 1.0;
    Eigen::MatrixXd Il = Eigen::MatrixXd::Zero(nb, nl);
    for (int l = 0; l < nl; ++l) Il(ix.load_rows[l], l) = 1.0;

    const Eigen::MatrixXd Hinv = cc.H_diag.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd HC = Hinv - cc.C;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(HC);
    if (!lu.isInvertible())
        throw SingularNetworkError("H^-1 - C is singular");
    const Eigen::MatrixXd Gamma = lu.inverse();

    Eigen::VectorXd Mdiag(ng), Ddiag(ng);
    for (int g = 0; g < ng; ++g) {
        const BusSpec& b = spec.buses[ix.gen_rows[g]];
        Mdiag(g) = b.M;
        Ddiag(g) = b.D;
    }

    // T = (K M^-1 Ig') kron [0;1]: injections at generator terminals land
    // on the omega rows scaled by K_i/M_i.
    const Eigen::MatrixXd KMI =
        cc.K.cwiseQuotient(Mdiag).asDiagonal() * Ig.transpose();
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(2 * ng, nb);
    for (int g = 0; g < ng; ++g) T.row(2 * g + 1) = KMI.row(g);

    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(ng, 2 * ng);
    for (int g = 0; g < ng; ++g) R(g, 2 * g) = 1.0;

    ContinuousModel m;
    m.index = ix;
    m.A = Eigen::MatrixXd::Zero(2 * ng, 2 * ng);
    for (int g = 0; g < ng; ++g) {
        m.A(2 * g, 2 * g + 1) = 1.0;
        m.A(2 * g + 1, 2 * g) = -cc.K(g) / Mdiag(g);
        m.A(2 * g + 1, 2 * g + 1) = -Ddiag(g) / Mdiag(g);
    }
    m.A += T * Gamma * Ig * cc.K.asDiagonal() * R;
    m.B = T * Gamma * Ig;
    m.E = -T * Gamma * Il;
    return m;
}

/// Splits the reduced model into per-generator blocks. Neighbors are the
/// subsystems with a nonvanishing coupling block in A or B.
inline std::vector<SubsystemModel> decompose(const ContinuousModel& model,
                                             double tau = 1e-12) {
    const int ng = static_cast<int>(model.index.gen_rows.size());
    std::vector<SubsystemModel> subs;
    subs.reserve(ng);
    for (int i = 0; i < ng; ++i) {
        SubsystemModel s;
        s.index = i;
        s.bus_id = model.index.gen_ids[i];
        s.A1 = model.A.block<2, 2>(2 * i, 2 * i);
        s.B1 = model.B.block<2, 1>(2 * i, i);
        s.E = model.E.middleRows(2 * i, 2);
        for (int j = 0; j < ng; ++j) {
            if (j == i) continue;
            const double a_norm =
                model.A.block<2, 2>(2 * i, 2 * j).lpNorm<Eigen::Infinity>();
            const double b_norm =
                model.B.block<2, 1>(2 * i, j).lpNorm<Eigen::Infinity>();
            if (a_norm > tau || b_norm > tau) s.neighbors.push_back(j);
        }
        const int k = static_cast<int>(s.neighbors.size());
        s.A2.resize(2, 2 * k);
        s.B2.resize(2, k);
        for (int c = 0; c < k; ++c) {
            const int j = s.neighbors[c];
            s.A2.block<2, 2>(0, 2 * c) = model.A.block<2, 2>(2 * i, 2 * j);
            s.B2.col(c) = model.B.block<2, 1>(2 * i, j);
        }
        subs.push_back(std::move(s));
    }
    return subs;
}

/// First-order (forward Euler) discretization with step h.
inline DiscreteModel discretize(const ContinuousModel& model,
                                const std::vector<SubsystemModel>& subs,
                                double h) {
    if (h <= 0.0) throw NetworkError("discretize: h must be positive");
    DiscreteModel d;
    d.h = h;
    d.index = model.index;
    const int n = static_cast<int>(model.A.rows());
    d.A = Eigen::MatrixXd::Identity(n, n) + h * model.A;
    d.B = h * model.B;
    d.E = h * model.E;
    for (const auto& s : subs) {
        DiscreteSubsystem ds;
        ds.index = s.index;
        ds.bus_id = s.bus_id;
        ds.A1 = Eigen::Matrix2d::Identity() + h * s.A1;
        ds.B1 = h * s.B1;
        ds.A2 = h * s.A2;
        ds.B2 = h * s.B2;
        ds.E = h * s.E;
        ds.neighbors = s.neighbors;
        if (std::abs(ds.A1.determinant()) < 1e-12)
            throw NetworkError("discretize: I + h*A1 is singular for bus " +
                               std::to_string(s.bus_id));
        d.subsystems.push_back(std::move(ds));
    }
    return d;
}

/// Consensus step bound c * min_{i,j} 1 / (||A2_i||_2 sqrt(2 |N_j|)),
/// evaluated on the continuous coupling blocks; +infinity for a decoupled
/// system.
inline double theorem1_step_bound(const std::vector<SubsystemModel>& subs,
                                  double c = 1.0) {
    if (c <= 0.0) throw NetworkError("theorem1_step_bound: c must be positive");
    double max_norm = 0.0;
    double max_deg = 0.0;
    for (const auto& s : subs) {
        if (s.A2.size() > 0) {
            const double n2 =
                Eigen::JacobiSVD<Eigen::MatrixXd>(s.A2).singularValues()(0);
            max_norm = std::max(max_norm, n2);
        }
        max_deg = std::max(max_deg, static_cast<double>(s.neighbors.size()));
    }
    if (max_norm <= 0.0 || max_deg <= 0.0)
        return std::numeric_limits<double>::infinity();
    return c / (max_norm * std::sqrt(2.0 * max_deg));
}

/// Constraint boxes: per-generator safe sets and input sets (subsystem
/// order) and the joint disturbance box over the load buses.
struct ConstraintSets {
    std::vector<HPolytope> X;  // 2D per generator
    std::vector<HPolytope> U;  // 1D per generator
    HPolytope D;               // N_L-dimensional
};

inline ConstraintSets make_constraint_sets(const NetworkSpec& spec) {
    const NetworkIndex ix = NetworkIndex::build(spec);
    ConstraintSets cs;
    for (int id : ix.gen_ids) {
        const GeneratorLimits& g = spec.constraints.generators.at(id);
        cs.X.push_back(
            Box::symmetric(Eigen::Vector2d(g.delta_bar, g.omega_bar)).to_polytope());
        Eigen::VectorXd u(1);
        u << g.u_bar;
        cs.U.push_back(Box::symmetric(u).to_polytope());
    }
    Eigen::VectorXd dbar(ix.load_ids.size());
    for (size_t l = 0; l < ix.load_ids.size(); ++l)
        dbar(l) = spec.constraints.load_d_bar.at(ix.load_ids[l]);
    cs.D = Box::symmetric(dbar).to_polytope();
    return cs;
}

/// Diagnostic: residual of the DC power balance at the given operating
/// point, per bus. Zero at passive buses when the point is a valid flow
/// solution; generator/load residuals equal the implied base injections.
inline Eigen::VectorXd power_balance_residuals(const NetworkSpec& spec,
                                               const CouplingConstants& cc) {
    const NetworkIndex ix = NetworkIndex::build(spec);
    const int nb = static_cast<int>(spec.buses.size());
    Eigen::VectorXd r(nb);
    for (int i = 0; i < nb; ++i) {
        double flow = 0.0;
        for (int j = 0; j < nb; ++j)
            flow += cc.C(i, j) * (spec.buses[i].theta0 - spec.buses[j].theta0);
        double inj = 0.0;
        for (size_t g = 0; g < ix.gen_rows.size(); ++g) {
            if (ix.gen_rows[g] == i)
                inj = cc.K(g) * (spec.buses[i].delta0 - spec.buses[i].theta0);
        }
        r(i) = inj - flow;
    }
    return r;
}

}  // namespace rcigrid
