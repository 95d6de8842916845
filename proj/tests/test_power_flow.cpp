#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gridjac/network_io.hpp"
#include "gridjac/power_flow.hpp"

using namespace gridjac;

namespace {

Grid two_bus(double g, double b, double p = 0.0, double q = 0.0) {
    Grid grid;
    grid.base_kv = 1.0;
    grid.buses.push_back({1, BusKind::Slack, 1.0, 0.0, 0.0, 0.0, 0.0});
    grid.buses.push_back({2, BusKind::PQ, 1.0, p, q, 0.0, 0.0});
    grid.branches.push_back({1, 2, g, b, BranchStatus::Closed});
    return grid;
}

Grid ieee33() {
    static Grid grid = load_network(std::string(GRIDJAC_CASES_DIR) + "/ieee33.json");
    return grid;
}

SystemState random_state(const Grid& grid, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dv(-0.05, 0.05);
    std::uniform_real_distribution<double> dt(-0.1, 0.1);
    SystemState s = flat_start(grid);
    for (int i = 0; i < grid.n(); ++i) {
        s.v(i) += dv(rng);
        s.theta(i) += dt(rng);
    }
    return s;
}

//! Central finite differences of the reduced injections, column by column.
Eigen::MatrixXd fd_jacobian(const SystemState& state, const Grid& grid,
                            double h = 1e-6) {
    ReducedIndexMap map = ReducedIndexMap::from_grid(grid);
    AdmittanceMatrix y = build_admittance(grid);
    Eigen::MatrixXd out(map.k(), map.k());
    for (int c = 0; c < map.k(); ++c) {
        Eigen::VectorXd dx = Eigen::VectorXd::Zero(map.k());
        dx(c) = h;
        Eigen::VectorXd yp =
            reduced_injections(injections(apply_step(state, map, dx), grid, y), map);
        dx(c) = -h;
        Eigen::VectorXd ym =
            reduced_injections(injections(apply_step(state, map, dx), grid, y), map);
        out.col(c) = (yp - ym) / (2.0 * h);
    }
    return out;
}

} // namespace

TEST_CASE("flat state on a purely reactive network injects nothing") {
    Grid grid = two_bus(0.0, -5.0);
    grid.branches.push_back({2, 1, 0.0, 0.0, BranchStatus::Open});
    Injections inj = injections(flat_start(grid), grid);
    CHECK(inj.p.cwiseAbs().maxCoeff() == 0.0);
    CHECK(inj.q.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two-bus injection values by direct substitution") {
    Grid grid = two_bus(1.0, 0.0);
    SystemState s = flat_start(grid);
    s.v(1) = 0.9;
    Injections inj = injections(s, grid);
    CHECK_THAT(inj.p(0), Catch::Matchers::WithinAbs(-0.1, 1e-15));
    CHECK_THAT(inj.p(1), Catch::Matchers::WithinAbs(0.09, 1e-15));
}

TEST_CASE("injections dimension check") {
    Grid grid = two_bus(1.0, -2.0);
    SystemState s = flat_start(grid);
    s.v.resize(3);
    CHECK_THROWS_AS(injections(s, grid), DimensionError);
}

TEST_CASE("flat-state off-diagonal block values") {
    Grid grid = two_bus(0.0, -7.0);
    JacobianBlocks jb = jacobian_blocks(flat_start(grid), grid);
    CHECK(jb.h(0, 1) == 7.0);  // -B_ij
    CHECK(jb.n(0, 1) == 0.0);
    CHECK(jb.k(0, 1) == 0.0);
    CHECK(jb.l(0, 1) == 7.0);
}

TEST_CASE("off-diagonal identities hold bitwise") {
    std::mt19937_64 rng(3);
    Grid grid = ieee33();
    for (int rep = 0; rep < 5; ++rep) {
        JacobianBlocks jb = jacobian_blocks(random_state(grid, rng), grid);
        for (int i = 0; i < grid.n(); ++i)
            for (int j = 0; j < grid.n(); ++j) {
                if (i == j) continue;
                CHECK(jb.h(i, j) == jb.l(i, j));
                CHECK(jb.n(i, j) == -jb.k(i, j));
            }
    }
}

TEST_CASE("diagonal identities against independently computed injections") {
    std::mt19937_64 rng(11);
    Grid grid = ieee33(); // shunt-free case
    AdmittanceMatrix y = build_admittance(grid);
    SystemState s = random_state(grid, rng);
    Injections inj = injections(s, grid, y);
    JacobianBlocks jb = jacobian_blocks(s, grid, y, inj);
    for (int i = 0; i < grid.n(); ++i) {
        const double vi2 = s.v(i) * s.v(i);
        const double gii = y.entries(i, i).real();
        const double bii = y.entries(i, i).imag();
        CHECK_THAT(jb.h(i, i),
                   Catch::Matchers::WithinRel(-inj.q(i) - vi2 * bii, 1e-12));
        CHECK_THAT(jb.n(i, i),
                   Catch::Matchers::WithinRel(inj.p(i) + vi2 * gii, 1e-12));
        CHECK_THAT(jb.k(i, i),
                   Catch::Matchers::WithinRel(inj.p(i) - vi2 * gii, 1e-12));
        CHECK_THAT(jb.l(i, i),
                   Catch::Matchers::WithinRel(inj.q(i) - vi2 * bii, 1e-12));
    }
}

TEST_CASE("analytic Jacobian matches central differences") {
    std::mt19937_64 rng(23);
    Grid grid = ieee33();
    for (int rep = 0; rep < 3; ++rep) {
        SystemState s = random_state(grid, rng);
        Eigen::MatrixXd analytic = jacobian(s, grid).entries;
        Eigen::MatrixXd fd = fd_jacobian(s, grid);
        for (int r = 0; r < analytic.rows(); ++r)
            for (int c = 0; c < analytic.cols(); ++c) {
                double tol = 1e-5 * std::max(1.0, std::abs(analytic(r, c)));
                CHECK_THAT(fd(r, c),
                           Catch::Matchers::WithinAbs(analytic(r, c), tol));
            }
    }
}

TEST_CASE("reduced dimensions") {
    SECTION("slack + PQ gives K = 2") {
        Grid grid = two_bus(1.0, -10.0);
        CHECK(jacobian(flat_start(grid), grid).entries.rows() == 2);
    }
    SECTION("slack + PV + PQ gives K = 3") {
        Grid grid;
        grid.buses.push_back({1, BusKind::Slack, 1.0, 0, 0, 0, 0});
        grid.buses.push_back({2, BusKind::PV, 1.02, 0.1, 0, 0, 0});
        grid.buses.push_back({3, BusKind::PQ, 1.0, -0.1, -0.05, 0, 0});
        grid.branches.push_back({1, 2, 1.0, -8.0, BranchStatus::Closed});
        grid.branches.push_back({2, 3, 1.0, -8.0, BranchStatus::Closed});
        JacobianMatrix jm = jacobian(flat_start(grid), grid);
        CHECK(jm.entries.rows() == 3);
        CHECK(jm.map.na() == 2);
        CHECK(jm.map.nv() == 1);
    }
    SECTION("33-bus all-PQ gives K = 64") {
        Grid grid = ieee33();
        CHECK(ReducedIndexMap::from_grid(grid).k() == 64);
    }
}

TEST_CASE("zero load solves at the flat state immediately") {
    Grid grid = two_bus(1.0, -10.0);
    PowerFlowResult res = newton_raphson_solve(grid, scheduled_spec(grid));
    CHECK(res.iterations <= 1);
    CHECK(res.state.v(1) == 1.0);
    CHECK(res.state.theta(1) == 0.0);
}

TEST_CASE("two-bus solution matches a brute-force root") {
    const double g = 1.0, b = -10.0;
    Grid grid = two_bus(g, b, -0.1, -0.05);

    // Independent oracle: refine a grid search of the two scalar injection
    // equations written out directly.
    const double tp = 0.1, tq = 0.05; // papers' convention targets
    auto mismatch = [&](double th, double v) {
        double p2 = v * 1.0 * (g * std::cos(th) + b * std::sin(th)) - v * v * g;
        double q2 = v * 1.0 * (g * std::sin(th) - b * std::cos(th)) + v * v * b;
        return std::max(std::abs(p2 - tp), std::abs(q2 - tq));
    };
    double th_lo = -0.6, th_hi = 0.6, v_lo = 0.7, v_hi = 1.3;
    double best_th = 0.0, best_v = 1.0;
    for (int round = 0; round < 9; ++round) {
        double best = 1e100;
        for (int i = 0; i <= 100; ++i)
            for (int j = 0; j <= 100; ++j) {
                double th = th_lo + (th_hi - th_lo) * i / 100.0;
                double v = v_lo + (v_hi - v_lo) * j / 100.0;
                double m = mismatch(th, v);
                if (m < best) {
                    best = m;
                    best_th = th;
                    best_v = v;
                }
            }
        double sh_th = (th_hi - th_lo) / 100.0 * 2.0;
        double sh_v = (v_hi - v_lo) / 100.0 * 2.0;
        th_lo = best_th - sh_th;
        th_hi = best_th + sh_th;
        v_lo = best_v - sh_v;
        v_hi = best_v + sh_v;
    }

    PowerFlowResult res = newton_raphson_solve(grid, scheduled_spec(grid));
    CHECK_THAT(res.state.theta(1), Catch::Matchers::WithinAbs(best_th, 1e-8));
    CHECK_THAT(res.state.v(1), Catch::Matchers::WithinAbs(best_v, 1e-8));
}

TEST_CASE("ieee33 converges and closes on its targets") {
    Grid grid = ieee33();
    PowerFlowSpec spec = scheduled_spec(grid);
    PowerFlowResult res = newton_raphson_solve(grid, spec);
    CHECK(res.iterations <= 10);

    ReducedIndexMap map = ReducedIndexMap::from_grid(grid);
    Eigen::VectorXd target(map.k());
    target.head(map.na()) = spec.p_targets;
    target.tail(map.nv()) = spec.q_targets;
    Eigen::VectorXd closure =
        target - reduced_injections(injections(res.state, grid), map);
    CHECK(closure.cwiseAbs().maxCoeff() < 1e-8);

    // Known feeder profile: minimum voltage ~0.913 p.u. at bus 18.
    int arg_min = 0;
    res.state.v.minCoeff(&arg_min);
    CHECK(grid.buses[arg_min].id == 18);
    CHECK_THAT(res.state.v(arg_min), Catch::Matchers::WithinAbs(0.913, 0.005));
}

TEST_CASE("solver is deterministic") {
    Grid grid = ieee33();
    PowerFlowResult a = newton_raphson_solve(grid, scheduled_spec(grid));
    PowerFlowResult b = newton_raphson_solve(grid, scheduled_spec(grid));
    CHECK(a.state.v == b.state.v);
    CHECK(a.state.theta == b.state.theta);
}

TEST_CASE("singular Jacobian is reported") {
    Grid grid = two_bus(0.0, 0.0, -0.1, 0.0); // zero-admittance branch
    CHECK_THROWS_AS(newton_raphson_solve(grid, scheduled_spec(grid)),
                    SingularJacobian);
}

TEST_CASE("unreachable targets raise NonConvergence with diagnostics") {
    Grid grid = two_bus(1.0, -10.0, -50.0, -20.0);
    try {
        newton_raphson_solve(grid, scheduled_spec(grid));
        FAIL("expected NonConvergence");
    } catch (const NonConvergence& e) {
        CHECK(e.iterations == 20);
        CHECK(e.best.v.size() == 2);
        CHECK(e.max_mismatch > 0.0);
    }
}

TEST_CASE("linearize_check") {
    Grid grid = ieee33();
    ReducedIndexMap map = ReducedIndexMap::from_grid(grid);
    std::mt19937_64 rng(5);
    SystemState s = random_state(grid, rng);

    SECTION("zero perturbation gives zero on both sides") {
        LinearizeCheck lc = linearize_check(s, grid, Eigen::VectorXd::Zero(map.k()));
        CHECK(lc.predicted.cwiseAbs().maxCoeff() == 0.0);
        CHECK(lc.actual.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("discrepancy shrinks first order in the step") {
        std::normal_distribution<double> gauss;
        Eigen::VectorXd dir(map.k());
        for (int i = 0; i < map.k(); ++i) dir(i) = gauss(rng);
        dir.normalize();
        double prev = 1e100;
        for (double eps : {1e-2, 1e-3, 1e-4}) {
            LinearizeCheck lc = linearize_check(s, grid, eps * dir);
            double rel = (lc.actual - lc.predicted).norm() / lc.actual.norm();
            CHECK(rel < prev);
            prev = rel;
        }
        CHECK(prev < 1e-3); // at |dx| = 1e-4
    }
}
