#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <random>

#include "oracles.hpp"
#include "rcigrid/invariant.hpp"
#include "rcigrid/network.hpp"

using namespace rcigrid;

namespace {

const std::string kCases = RCIGRID_CASES_DIR;

HPolytope interval(double lo, double hi) {
    Eigen::VectorXd l(1), h(1);
    l << lo;
    h << hi;
    return Box(l, h).to_polytope();
}

// Scalar integrator x+ = x + u + d as a one-subsystem discrete model.
DiscreteModel scalar_system() {
    DiscreteModel d;
    d.h = 1.0;
    d.A = Eigen::MatrixXd::Ones(1, 1);
    d.B = Eigen::MatrixXd::Ones(1, 1);
    d.E = Eigen::MatrixXd::Ones(1, 1);
    return d;
}

DiscreteModel discretized(const std::string& file, double h) {
    const auto spec = load_network(file);
    const auto m = eliminate_algebraic(spec, build_coupling_constants(spec));
    return discretize(m, decompose(m), h);
}

}  // namespace

TEST_CASE("preimage step identities") {
    const auto target = Box::symmetric(Eigen::Vector2d(1, 1)).to_polytope();
    const auto zero2 = Box::symmetric(Eigen::Vector2d(0, 0)).to_polytope();
    const auto I2 = Eigen::MatrixXd::Identity(2, 2);

    SECTION("fully actuated identity reaches everything") {
        const auto huge = Box::symmetric(Eigen::Vector2d(100, 100)).to_polytope();
        const auto R = preimage_step(target, I2, I2, I2, huge, zero2);
        CHECK(contains_scaled(R, target, 1.0));
    }
    SECTION("frozen dynamics reproduce the target") {
        const auto R = preimage_step(target, I2, Eigen::MatrixXd::Zero(2, 2), I2,
                                     zero2, zero2);
        CHECK(contains_scaled(R, target, 1.0 + 1e-9));
        CHECK(contains_scaled(target, R, 1.0 + 1e-9));
    }
    SECTION("scalar closed form") {
        // x+ = x + u, |u| <= 0.5, |d| <= 0.1 entering additively.
        const auto R = preimage_step(
            interval(-1, 1), Eigen::MatrixXd::Ones(1, 1),
            Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1),
            interval(-0.5, 0.5), interval(-0.1, 0.1));
        Eigen::VectorXd e(1);
        e << 1.0;
        CHECK(support(R, e) == Catch::Approx(1.4).margin(1e-9));
        CHECK(support(R, -e) == Catch::Approx(1.4).margin(1e-9));

        // Grid check of the same interval.
        for (double x = -1.6; x <= 1.6; x += 0.01) {
            bool reachable = false;
            for (double u = -0.5; u <= 0.5 + 1e-12; u += 0.005) {
                if (std::abs(x + u + 0.1) <= 1.0 + 1e-9 &&
                    std::abs(x + u - 0.1) <= 1.0 + 1e-9) {
                    reachable = true;
                    break;
                }
            }
            Eigen::VectorXd p(1);
            p << x;
            if (std::abs(std::abs(x) - 1.4) > 0.01)
                CHECK(R.contains(p) == reachable);
        }
    }
}

TEST_CASE("centralized RCI on the scalar integrator") {
    const auto dyn = scalar_system();
    IterationConfig cfg;
    cfg.epsilon = 1e-3;

    SECTION("ample control: the safe set is already invariant") {
        const auto res = centralized_rci(dyn, interval(-1, 1), interval(-0.5, 0.5),
                                         interval(-0.1, 0.1), cfg);
        REQUIRE(res.status == RciStatus::Converged);
        Eigen::VectorXd e(1);
        e << 1.0;
        CHECK(support(res.sets[0], e) == Catch::Approx(1.0).margin(1e-9));
        CHECK(support(res.sets[0], -e) == Catch::Approx(1.0).margin(1e-9));
        CHECK(res.k_used == 1);
    }
    SECTION("disturbance dominates: empty failure") {
        const auto res = centralized_rci(dyn, interval(-1, 1),
                                         interval(-0.05, 0.05),
                                         interval(-0.1, 0.1), cfg);
        CHECK(res.status == RciStatus::EmptyFailure);

        // Grid oracle agrees that nothing is invariant.
        const auto g = oracle::grid_backward_fixed_point(
            dyn.A, dyn.B, dyn.E, Eigen::VectorXd::Ones(1), 0.05, 0.1, 201, 201);
        CHECK(std::count(g.admissible.begin(), g.admissible.end(), 1) == 0);
    }
    SECTION("uncontrollable pair is rejected") {
        DiscreteModel bad = dyn;
        bad.B = Eigen::MatrixXd::Zero(1, 1);
        CHECK_THROWS_AS(centralized_rci(bad, interval(-1, 1), interval(-1, 1),
                                        interval(-0.1, 0.1), cfg),
                        NotControllableError);
    }
}

TEST_CASE("centralized RCI matches the dense grid on a double integrator") {
    DiscreteModel dyn;
    const double h = 0.25;
    dyn.h = h;
    dyn.A.resize(2, 2);
    dyn.A << 1, h, 0, 1;
    dyn.B.resize(2, 1);
    dyn.B << 0, h;
    dyn.E.resize(2, 1);
    dyn.E << 0, h;

    const double u_bar = 1.0, d_bar = 0.1;
    const Eigen::Vector2d x_bar(1.0, 1.0);
    IterationConfig cfg;
    cfg.epsilon = 1e-6;
    const auto res =
        centralized_rci(dyn, Box::symmetric(x_bar).to_polytope(),
                        interval(-u_bar, u_bar), interval(-d_bar, d_bar), cfg);
    REQUIRE(res.status == RciStatus::Converged);
    const auto& S = res.sets[0].normalized();

    const int cells = 101;  // acceptance reruns this at 201
    const auto g = oracle::grid_backward_fixed_point(dyn.A, dyn.B, dyn.E, x_bar,
                                                     u_bar, d_bar, cells, 101);
    const double step = 2.0 / (cells - 1);
    const double diag = step * std::sqrt(2.0);

    int marked = 0;
    std::vector<int> c(2, 0);
    bool more = true;
    while (more) {
        const Eigen::VectorXd x = g.center(c);
        const bool adm = g.admissible[g.index(c)] != 0;
        marked += adm;
        const Eigen::VectorXd slack = S.offsets() - S.normals() * x;
        if (adm) {
            // Every admissible cell center lies within one cell of S.
            CHECK(slack.minCoeff() > -diag);
        } else {
            // Every center deep inside S must be admissible.
            CHECK(slack.minCoeff() < diag);
        }
        int a = 1;
        while (a >= 0 && ++c[a] == cells) c[a--] = 0;
        more = a >= 0;
    }
    CHECK(marked > 0);
}

TEST_CASE("consensus on decoupled subsystems") {
    DiscreteModel dyn;
    dyn.h = 0.1;
    for (int i = 0; i < 2; ++i) {
        DiscreteSubsystem s;
        s.index = i;
        s.bus_id = i + 1;
        s.A1 << 1, 0.1, -0.1, 0.9;
        s.B1 << 0, 0.1;
        s.A2.resize(2, 0);
        s.B2.resize(2, 0);
        s.E.resize(2, 1);
        s.E << 0, 0.05;
        dyn.subsystems.push_back(s);
    }
    const std::vector<HPolytope> X(2, Box::symmetric(Eigen::Vector2d(1, 1)).to_polytope());
    const std::vector<HPolytope> U(2, interval(-1, 1));
    const auto D = interval(-0.1, 0.1);

    IterationConfig cfg;
    const auto cs = consensus_coupling(dyn, X, U, D, cfg);
    CHECK(cs.converged);
    CHECK(cs.sweeps == 1);
    CHECK(cs.Y[0].dim() == 0);
    CHECK_FALSE(cs.step_bound_violated);
}

TEST_CASE("consensus fixes immediately without disturbance or coupling") {
    DiscreteModel dyn;
    dyn.h = 0.1;
    DiscreteSubsystem s;
    s.index = 0;
    s.bus_id = 1;
    s.A1 << 1, 0.1, 0, 1;
    s.B1 << 0, 0.1;
    s.A2.resize(2, 0);
    s.B2.resize(2, 0);
    s.E = Eigen::MatrixXd::Zero(2, 1);
    dyn.subsystems.push_back(s);

    const std::vector<HPolytope> X{
        Box::symmetric(Eigen::Vector2d(1, 0.2)).to_polytope()};
    const std::vector<HPolytope> U{interval(-1, 1)};
    const auto D = interval(0, 0);

    IterationConfig cfg;
    const auto cs = consensus_coupling(dyn, X, U, D, cfg);
    CHECK(cs.converged);
    CHECK(cs.sweeps == 1);
}

TEST_CASE("consensus changes decay geometrically below the step bound") {
    const auto spec = load_network(kCases + "/two_gen.json");
    const auto m = eliminate_algebraic(spec, build_coupling_constants(spec));
    const auto subs = decompose(m);
    const double bound = theorem1_step_bound(subs);
    REQUIRE(std::isfinite(bound));
    const auto dyn = discretize(m, subs, 0.5 * bound);

    const auto cs = make_constraint_sets(spec);
    IterationConfig cfg;
    cfg.epsilon = 1e-9;  // force several sweeps so the decay is observable
    cfg.l_max = 60;
    const auto cc = consensus_coupling(dyn, cs.X, cs.U, cs.D, cfg);
    CHECK(cc.converged);
    CHECK_FALSE(cc.step_bound_violated);

    const auto& chi = cc.delta_changes;
    for (size_t l = 0; l + 1 < chi.size(); ++l) {
        if (chi[l] < 1e-12) continue;
        CHECK(chi[l + 1] <= chi[l] + 1e-12);
        CHECK(chi[l + 1] / chi[l] < 1.0);
    }
}

TEST_CASE("distributed equals centralized per-subsystem when decoupled") {
    DiscreteModel dyn;
    dyn.h = 0.1;
    std::vector<Eigen::Matrix2d> A1s(2);
    A1s[0] << 1, 0.1, -0.2, 0.9;
    A1s[1] << 1, 0.1, -0.3, 0.85;
    for (int i = 0; i < 2; ++i) {
        DiscreteSubsystem s;
        s.index = i;
        s.bus_id = i + 1;
        s.A1 = A1s[i];
        s.B1 << 0, 0.1;
        s.A2.resize(2, 0);
        s.B2.resize(2, 0);
        s.E.resize(2, 1);
        s.E << 0, 0.02;
        dyn.subsystems.push_back(s);
    }
    const std::vector<HPolytope> X(2, Box::symmetric(Eigen::Vector2d(0.5, 0.4)).to_polytope());
    const std::vector<HPolytope> U(2, interval(-0.5, 0.5));
    const auto D = interval(-0.1, 0.1);

    IterationConfig cfg;
    const auto res = distributed_rci(dyn, X, U, D, cfg);
    REQUIRE(res.status == RciStatus::Converged);

    for (int i = 0; i < 2; ++i) {
        DiscreteModel single;
        single.h = dyn.h;
        single.A = dyn.subsystems[i].A1;
        single.B = dyn.subsystems[i].B1;
        single.E = dyn.subsystems[i].E;
        const auto ref = centralized_rci(single, X[i], U[i], D, cfg);
        REQUIRE(ref.status == RciStatus::Converged);
        CHECK(contains_scaled(res.sets[i], ref.sets[0], 1.0 + 1e-9));
        CHECK(contains_scaled(ref.sets[0], res.sets[i], 1.0 + 1e-9));
    }
}

TEST_CASE("distributed result is an inner approximation of centralized") {
    const auto dyn = discretized(kCases + "/two_gen.json", 0.05);
    const auto spec = load_network(kCases + "/two_gen.json");
    const auto sets = make_constraint_sets(spec);

    IterationConfig cfg;
    const auto dist = distributed_rci(dyn, sets.X, sets.U, sets.D, cfg);
    REQUIRE(dist.status == RciStatus::Converged);

    const auto X_full = product(sets.X[0], sets.X[1]);
    const auto U_full = product(sets.U[0], sets.U[1]);
    const auto cent = centralized_rci(dyn, X_full, U_full, sets.D, cfg);
    REQUIRE(cent.status == RciStatus::Converged);

    const auto S_prod = product(dist.sets[0], dist.sets[1]);
    CHECK(contains_scaled(cent.sets[0], S_prod, 1.0 + 1e-6));
}

TEST_CASE("outer iterates shrink monotonically") {
    const auto dyn = discretized(kCases + "/two_gen.json", 0.05);
    const auto spec = load_network(kCases + "/two_gen.json");
    const auto sets = make_constraint_sets(spec);

    IterationConfig cfg;
    cfg.keep_history = true;
    const auto res = distributed_rci(dyn, sets.X, sets.U, sets.D, cfg);
    REQUIRE(res.status == RciStatus::Converged);
    REQUIRE(res.history.size() >= 2);
    for (size_t k = 0; k + 1 < res.history.size(); ++k) {
        for (size_t i = 0; i < res.history[k].size(); ++i) {
            CHECK(contains_scaled(res.history[k][i], res.history[k + 1][i],
                                  1.0 + 1e-9));
        }
    }
    // Converged sets sit inside the safe sets.
    for (size_t i = 0; i < res.sets.size(); ++i) {
        CHECK_FALSE(res.sets[i].is_empty());
        CHECK(contains_scaled(sets.X[i], res.sets[i], 1.0 + 1e-9));
    }
}

TEST_CASE("forced inconclusive at k_max = 1") {
    const auto dyn = discretized(kCases + "/nine_bus.json", 0.05);
    const auto spec = load_network(kCases + "/nine_bus.json");
    const auto sets = make_constraint_sets(spec);
    IterationConfig cfg;
    cfg.k_max = 1;
    const auto res = distributed_rci(dyn, sets.X, sets.U, sets.D, cfg);
    CHECK(res.status == RciStatus::Inconclusive);
}

TEST_CASE("nine-bus distributed RCI converges") {
    const auto dyn = discretized(kCases + "/nine_bus.json", 0.05);
    const auto spec = load_network(kCases + "/nine_bus.json");
    const auto sets = make_constraint_sets(spec);
    IterationConfig cfg;
    const auto res = distributed_rci(dyn, sets.X, sets.U, sets.D, cfg);
    REQUIRE(res.status == RciStatus::Converged);
    CHECK_FALSE(res.consensus_warning);
    for (int sweeps : res.consensus_iterations) CHECK(sweeps <= 6);
    for (const auto& S : res.sets) CHECK_FALSE(S.is_empty());
}
