#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridjac/errors.hpp"
#include "gridjac/grid.hpp"

namespace gridjac {

//! Per-bus operating point: magnitudes (p.u.) and angles (rad), file order.
struct SystemState {
    Eigen::VectorXd v;
    Eigen::VectorXd theta;
};

//! Injections in the papers' convention (the sign produced by the diagonal
//! convention of AdmittanceMatrix; consumption positive). The negation of the
//! generation-positive scheduled values stored on Bus.
struct Injections {
    Eigen::VectorXd p;
    Eigen::VectorXd q;
};

//! Bookkeeping for the reduced system: which bus position owns each angle
//! coordinate (all non-slack buses, file order) and each voltage coordinate
//! (PQ buses, file order). Rows of the reduced Jacobian follow the blocked
//! layout [H N; K L]: first the P equations at angle buses, then the Q
//! equations at voltage buses; columns likewise (theta block then V block).
//! Voltage coordinates are log-magnitudes, so the V-block derivatives are the
//! voltage-scaled forms dP/dV_j * V_j as written in the block formulas.
struct ReducedIndexMap {
    std::vector<int> angle_pos; // bus positions owning theta coordinates
    std::vector<int> volt_pos;  // bus positions owning log-V coordinates

    int na() const { return static_cast<int>(angle_pos.size()); }
    int nv() const { return static_cast<int>(volt_pos.size()); }
    int k() const { return na() + nv(); }

    static ReducedIndexMap from_grid(const Grid& grid) {
        ReducedIndexMap map;
        for (int i = 0; i < grid.n(); ++i) {
            if (grid.buses[i].kind == BusKind::Slack) continue;
            map.angle_pos.push_back(i);
            if (grid.buses[i].kind == BusKind::PQ) map.volt_pos.push_back(i);
        }
        return map;
    }
};

//! Full n-by-n Jacobian blocks per the four-part formula, Kronecker terms on
//! the diagonal. N and L carry the V_j scaling.
struct JacobianBlocks {
    Eigen::MatrixXd h, n, k, l;
};

struct JacobianMatrix {
    Eigen::MatrixXd entries; // K x K, blocked [H N; K L]
    ReducedIndexMap map;
};

struct PowerFlowSpec {
    Eigen::VectorXd p_targets; // per angle coordinate, papers' convention
    Eigen::VectorXd q_targets; // per voltage coordinate
    double tol = 1e-8;
    int max_iter = 20;
};

inline void check_state_dims(const SystemState& state, const Grid& grid) {
    if (state.v.size() != grid.n() || state.theta.size() != grid.n())
        throw DimensionError("state size does not match bus count");
}

inline SystemState flat_start(const Grid& grid) {
    SystemState s;
    s.v = Eigen::VectorXd::Ones(grid.n());
    s.theta = Eigen::VectorXd::Zero(grid.n());
    for (int i = 0; i < grid.n(); ++i)
        if (grid.buses[i].kind != BusKind::PQ) s.v(i) = grid.buses[i].v_setpoint;
    return s;
}

//! P_i = V_i sum_{k!=i} V_k (G_ik cos t_ik + B_ik sin t_ik)
//!       - V_i^2 sum_{k!=i} G_ik - V_i^2 g_i, and the Q counterpart.
//! The middle terms come in through the convention diagonal of y.
inline Injections injections(const SystemState& state, const Grid& grid,
                             const AdmittanceMatrix& y) {
    check_state_dims(state, grid);
    const int n = grid.n();
    Injections inj;
    inj.p = Eigen::VectorXd::Zero(n);
    inj.q = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        const double vi = state.v(i);
        double p = 0.0, q = 0.0;
        for (int k = 0; k < n; ++k) {
            if (k == i) continue;
            const std::complex<double> yik = y.entries(i, k);
            if (yik == std::complex<double>(0.0, 0.0)) continue;
            const double tik = state.theta(i) - state.theta(k);
            const double c = std::cos(tik), s = std::sin(tik);
            p += state.v(k) * (yik.real() * c + yik.imag() * s);
            q += state.v(k) * (yik.real() * s - yik.imag() * c);
        }
        const double vi2 = vi * vi;
        // diagonal convention: [y]_ii = -sum_{k!=i} Y_ik
        inj.p(i) = vi * p + vi2 * y.entries(i, i).real() - vi2 * grid.buses[i].g_shunt;
        inj.q(i) = vi * q - vi2 * y.entries(i, i).imag() + vi2 * grid.buses[i].b_shunt;
    }
    return inj;
}

inline Injections injections(const SystemState& state, const Grid& grid) {
    return injections(state, grid, build_admittance(grid));
}

//! All four blocks at once. Off-diagonal H/L (and N/-K) share the same
//! subexpression, so those identities hold bitwise.
inline JacobianBlocks jacobian_blocks(const SystemState& state, const Grid& grid,
                                      const AdmittanceMatrix& y,
                                      const Injections& inj) {
    check_state_dims(state, grid);
    const int n = grid.n();
    JacobianBlocks jb;
    jb.h.setZero(n, n);
    jb.n.setZero(n, n);
    jb.k.setZero(n, n);
    jb.l.setZero(n, n);
    for (int i = 0; i < n; ++i) {
        const double vi = state.v(i);
        for (int j = 0; j < n; ++j) {
            const std::complex<double> yij = y.entries(i, j);
            double t1 = 0.0, t2 = 0.0;
            if (yij != std::complex<double>(0.0, 0.0)) {
                const double tij = state.theta(i) - state.theta(j);
                const double c = std::cos(tij), s = std::sin(tij);
                const double vv = vi * state.v(j);
                t1 = vv * (yij.real() * s - yij.imag() * c);
                t2 = vv * (yij.real() * c + yij.imag() * s);
            }
            if (i == j) {
                const double vi2 = vi * vi;
                const double gi = grid.buses[i].g_shunt;
                const double bi = grid.buses[i].b_shunt;
                jb.h(i, j) = t1 - inj.q(i) + vi2 * bi;
                jb.n(i, j) = t2 + inj.p(i) - vi2 * gi;
                jb.k(i, j) = -t2 + inj.p(i) + vi2 * gi;
                jb.l(i, j) = t1 + inj.q(i) + vi2 * bi;
            } else {
                jb.h(i, j) = t1;
                jb.n(i, j) = t2;
                jb.k(i, j) = -t2;
                jb.l(i, j) = t1;
            }
        }
    }
    return jb;
}

inline JacobianBlocks jacobian_blocks(const SystemState& state, const Grid& grid) {
    AdmittanceMatrix y = build_admittance(grid);
    return jacobian_blocks(state, grid, y, injections(state, grid, y));
}

//! Drop slack rows/cols and PV-bus voltage rows/cols; blocked [H N; K L].
inline JacobianMatrix assemble_reduced(const JacobianBlocks& jb, const Grid& grid) {
    JacobianMatrix jm;
    jm.map = ReducedIndexMap::from_grid(grid);
    const int na = jm.map.na(), nv = jm.map.nv();
    jm.entries.resize(na + nv, na + nv);
    for (int r = 0; r < na; ++r)
        for (int c = 0; c < na; ++c)
            jm.entries(r, c) = jb.h(jm.map.angle_pos[r], jm.map.angle_pos[c]);
    for (int r = 0; r < na; ++r)
        for (int c = 0; c < nv; ++c)
            jm.entries(r, na + c) = jb.n(jm.map.angle_pos[r], jm.map.volt_pos[c]);
    for (int r = 0; r < nv; ++r)
        for (int c = 0; c < na; ++c)
            jm.entries(na + r, c) = jb.k(jm.map.volt_pos[r], jm.map.angle_pos[c]);
    for (int r = 0; r < nv; ++r)
        for (int c = 0; c < nv; ++c)
            jm.entries(na + r, na + c) = jb.l(jm.map.volt_pos[r], jm.map.volt_pos[c]);
    return jm;
}

inline JacobianMatrix jacobian(const SystemState& state, const Grid& grid) {
    return assemble_reduced(jacobian_blocks(state, grid), grid);
}

//! Reduced state coordinates: angles, then log-magnitudes at PQ buses.
inline Eigen::VectorXd reduced_state(const SystemState& state,
                                     const ReducedIndexMap& map) {
    Eigen::VectorXd x(map.k());
    for (int r = 0; r < map.na(); ++r) x(r) = state.theta(map.angle_pos[r]);
    for (int r = 0; r < map.nv(); ++r)
        x(map.na() + r) = std::log(state.v(map.volt_pos[r]));
    return x;
}

//! Reduced injection coordinates: P at angle buses, then Q at PQ buses.
inline Eigen::VectorXd reduced_injections(const Injections& inj,
                                          const ReducedIndexMap& map) {
    Eigen::VectorXd y(map.k());
    for (int r = 0; r < map.na(); ++r) y(r) = inj.p(map.angle_pos[r]);
    for (int r = 0; r < map.nv(); ++r) y(map.na() + r) = inj.q(map.volt_pos[r]);
    return y;
}

//! Apply a reduced step: additive on angles, multiplicative (exp) on
//! magnitudes, consistent with the log-V coordinates.
inline SystemState apply_step(const SystemState& state, const ReducedIndexMap& map,
                              const Eigen::VectorXd& step) {
    if (step.size() != map.k()) throw DimensionError("step size mismatch");
    SystemState out = state;
    for (int r = 0; r < map.na(); ++r) out.theta(map.angle_pos[r]) += step(r);
    for (int r = 0; r < map.nv(); ++r)
        out.v(map.volt_pos[r]) *= std::exp(step(map.na() + r));
    return out;
}

//! Targets from the scheduled bus injections (generation positive on Bus,
//! negated into the papers' convention used by injections()).
inline PowerFlowSpec scheduled_spec(const Grid& grid, double tol = 1e-8,
                                    int max_iter = 20) {
    ReducedIndexMap map = ReducedIndexMap::from_grid(grid);
    PowerFlowSpec spec;
    spec.tol = tol;
    spec.max_iter = max_iter;
    spec.p_targets.resize(map.na());
    spec.q_targets.resize(map.nv());
    for (int r = 0; r < map.na(); ++r)
        spec.p_targets(r) = -grid.buses[map.angle_pos[r]].p;
    for (int r = 0; r < map.nv(); ++r)
        spec.q_targets(r) = -grid.buses[map.volt_pos[r]].q;
    return spec;
}

//! Same mapping for externally supplied per-bus schedules (length n vectors,
//! generation positive).
inline PowerFlowSpec make_spec(const Grid& grid, const Eigen::VectorXd& p_by_bus,
                               const Eigen::VectorXd& q_by_bus, double tol = 1e-8,
                               int max_iter = 20) {
    if (p_by_bus.size() != grid.n() || q_by_bus.size() != grid.n())
        throw DimensionError("schedule vectors must have one entry per bus");
    ReducedIndexMap map = ReducedIndexMap::from_grid(grid);
    PowerFlowSpec spec;
    spec.tol = tol;
    spec.max_iter = max_iter;
    spec.p_targets.resize(map.na());
    spec.q_targets.resize(map.nv());
    for (int r = 0; r < map.na(); ++r) spec.p_targets(r) = -p_by_bus(map.angle_pos[r]);
    for (int r = 0; r < map.nv(); ++r) spec.q_targets(r) = -q_by_bus(map.volt_pos[r]);
    return spec;
}

struct NonConvergence : Error {
    SystemState best;
    double max_mismatch;
    int iterations;
    NonConvergence(SystemState state, double mismatch, int iters,
                   const std::string& context = "")
        : Error("power flow did not converge after " + std::to_string(iters) +
                " iterations (max mismatch " + std::to_string(mismatch) + ")" +
                (context.empty() ? "" : " " + context)),
          best(std::move(state)), max_mismatch(mismatch), iterations(iters) {}
};

struct PowerFlowResult {
    SystemState state;
    int iterations = 0;
};

namespace detail {

inline Eigen::VectorXd solve_checked(const Eigen::MatrixXd& a,
                                     const Eigen::VectorXd& rhs) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const Eigen::VectorXd diag = lu.matrixLU().diagonal().cwiseAbs();
    const double pivot_floor =
        diag.maxCoeff() * a.rows() * std::numeric_limits<double>::epsilon();
    if (diag.minCoeff() <= pivot_floor)
        throw SingularJacobian("pivot below machine-epsilon threshold");
    return lu.solve(rhs);
}

} // namespace detail

//! Newton-Raphson iteration x <- x + J^-1(x) (y_target - y(x)) on the reduced
//! coordinates. Throws NonConvergence (carrying the best state seen) when the
//! iteration cap is hit, SingularJacobian when the linear solve fails.
inline PowerFlowResult newton_raphson_solve(const Grid& grid,
                                            const PowerFlowSpec& spec,
                                            const SystemState& start,
                                            const AdmittanceMatrix& y) {
    check_state_dims(start, grid);
    if (!(spec.tol > 0.0) || spec.max_iter < 1)
        throw RangeError("tol must be positive and max_iter >= 1");
    ReducedIndexMap map = ReducedIndexMap::from_grid(grid);
    if (spec.p_targets.size() != map.na() || spec.q_targets.size() != map.nv())
        throw DimensionError("targets do not cover the reduced unknowns");

    Eigen::VectorXd target(map.k());
    target.head(map.na()) = spec.p_targets;
    target.tail(map.nv()) = spec.q_targets;

    SystemState state = start;
    SystemState best = start;
    double best_mismatch = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter <= spec.max_iter; ++iter) {
        Injections inj = injections(state, grid, y);
        Eigen::VectorXd mismatch = target - reduced_injections(inj, map);
        const double worst = mismatch.size() == 0 ? 0.0
                                                  : mismatch.cwiseAbs().maxCoeff();
        if (worst < best_mismatch) {
            best_mismatch = worst;
            best = state;
        }
        if (worst <= spec.tol) return {state, iter};
        if (iter == spec.max_iter) break;
        JacobianMatrix jm = assemble_reduced(jacobian_blocks(state, grid, y, inj), grid);
        state = apply_step(state, map, detail::solve_checked(jm.entries, mismatch));
    }
    throw NonConvergence(best, best_mismatch, spec.max_iter);
}

inline PowerFlowResult newton_raphson_solve(const Grid& grid,
                                            const PowerFlowSpec& spec,
                                            const SystemState& start) {
    return newton_raphson_solve(grid, spec, start, build_admittance(grid));
}

inline PowerFlowResult newton_raphson_solve(const Grid& grid,
                                            const PowerFlowSpec& spec) {
    return newton_raphson_solve(grid, spec, flat_start(grid));
}

struct LinearizeCheck {
    Eigen::VectorXd predicted; // J dx
    Eigen::VectorXd actual;    // f(x + dx) - f(x)
};

//! First-order test harness: compare J*dx against the true change of the
//! reduced injections under a reduced perturbation dx.
inline LinearizeCheck linearize_check(const SystemState& state, const Grid& grid,
                                      const Eigen::VectorXd& perturbation) {
    ReducedIndexMap map = ReducedIndexMap::from_grid(grid);
    if (perturbation.size() != map.k())
        throw DimensionError("perturbation size mismatch");
    AdmittanceMatrix y = build_admittance(grid);
    Injections base = injections(state, grid, y);
    JacobianMatrix jm = assemble_reduced(jacobian_blocks(state, grid, y, base), grid);
    SystemState moved = apply_step(state, map, perturbation);
    LinearizeCheck out;
    out.predicted = jm.entries * perturbation;
    out.actual = reduced_injections(injections(moved, grid, y), map) -
                 reduced_injections(base, map);
    return out;
}

} // namespace gridjac
