#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridjac/errors.hpp"
#include "gridjac/estimation.hpp"
#include "gridjac/grid.hpp"
#include "gridjac/parallel.hpp"
#include "gridjac/power_flow.hpp"
#include "gridjac/rng.hpp"
#include "gridjac/spectral.hpp"

namespace gridjac {

//! Scenario of the synthetic observation run: the active topology switches
//! from grid_a to grid_b after switch_sample, two renewables-backed nodes
//! carry an AR(1) perturbation, and the meter adds mu_e + N(0, sigma_e^2).
struct ScenarioConfig {
    std::string grid_a;
    std::string grid_b;
    int switch_sample = 720;
    int n_samples = 1440;
    std::vector<int> renewables_nodes = {20, 31}; // bus ids
    double ar_b = 0.9;
    double sigma_e = 0.005; // p.u.
    double mu_e = 0.0;
    std::uint64_t seed = 0;
    //! Unit-variance AR swing as a fraction of the node's scheduled |P|. The
    //! default 1.0 reproduces the high-variation wind behavior the case
    //! studies rely on; at 0.1 the renewables imprint drowns in sigma_e and
    //! topology matching degenerates to chance (see the ledger).
    double renewables_amplitude = 1.0;
    double sinusoid_amplitude = 0.02; // routine-usage profile wobble
    double pf_tol = 1e-8;
    int pf_max_iter = 20;

    void validate(int bank_size = 1) const {
        (void)bank_size;
        if (switch_sample < 1 || switch_sample > n_samples)
            throw RangeError("switch_sample must lie in [1, n_samples]");
        if (sigma_e < 0.0) throw RangeError("sigma_e must be nonnegative");
        if (!(std::abs(ar_b) < 1.0)) throw RangeError("|ar_b| must be < 1");
        if (n_samples < 1) throw RangeError("n_samples must be positive");
    }
};

//! Stationary unit-variance AR(1) path: x_t = b x_{t-1} + xi_t with
//! xi ~ N(0, 1 - b^2); a 200-sample burn-in is discarded.
inline Eigen::VectorXd ar1_series(double b, int length, Rng& rng) {
    if (!(std::abs(b) < 1.0)) throw RangeError("|b| must be < 1");
    std::normal_distribution<double> gauss(0.0, std::sqrt(1.0 - b * b));
    constexpr int kBurnIn = 200;
    double x = 0.0;
    for (int t = 0; t < kBurnIn; ++t) x = b * x + gauss(rng);
    Eigen::VectorXd out(length);
    for (int t = 0; t < length; ++t) {
        x = b * x + gauss(rng);
        out(t) = x;
    }
    return out;
}

inline Eigen::VectorXd ar1_series(double b, int length, std::uint64_t seed) {
    Rng rng = substream(seed, stream::kGeneric);
    return ar1_series(b, length, rng);
}

struct SynthResult {
    Eigen::MatrixXd z_ob;            // observed voltage magnitudes, n x T
    Eigen::MatrixXd z_true;          // noiseless voltages
    std::vector<std::string> truth;  // active model label per sample
    Eigen::MatrixXd inputs_p;        // scheduled P per bus per sample (gen +)
    Eigen::MatrixXd inputs_q;
    SnapshotSeries snapshots;        // reduced states/injections per sample
};

//! Generate the full observation run. Deterministic given (config, grids):
//! per-node renewables and measurement streams are split off the root seed,
//! so the draw order never depends on the solve schedule.
inline SynthResult synthesize(const ScenarioConfig& config, const Grid& grid_a,
                              const Grid& grid_b) {
    config.validate();
    if (grid_a.n() != grid_b.n())
        throw DimensionError("scenario grids must share the bus set");
    const int n = grid_a.n();
    const int t_total = config.n_samples;

    AdmittanceMatrix ya = build_admittance(grid_a);
    AdmittanceMatrix yb = build_admittance(grid_b);

    // Scheduled inputs: smooth per-node profile plus AR(1) renewables offsets.
    SynthResult res;
    res.inputs_p.resize(n, t_total);
    res.inputs_q.resize(n, t_total);
    for (int i = 0; i < n; ++i) {
        const Bus& bus = grid_a.buses[i];
        const double phase = 2.0 * M_PI * i / n;
        for (int t = 0; t < t_total; ++t) {
            const double wobble =
                1.0 + config.sinusoid_amplitude *
                          std::sin(2.0 * M_PI * t / t_total + phase);
            res.inputs_p(i, t) = bus.p * wobble;
            res.inputs_q(i, t) = bus.q * wobble;
        }
    }
    for (int node : config.renewables_nodes) {
        const int i = grid_a.bus_index(node);
        if (i < 0) throw LookupError("renewables node " + std::to_string(node) +
                                     " not in grid");
        const double amp =
            config.renewables_amplitude * std::abs(grid_a.buses[i].p);
        Rng rng = substream(config.seed, stream::kRenewables,
                            static_cast<std::uint64_t>(node));
        Eigen::VectorXd w = ar1_series(config.ar_b, t_total, rng);
        res.inputs_p.row(i) += amp * w.transpose();
    }

    res.z_true.resize(n, t_total);
    res.truth.resize(t_total);
    res.snapshots.xs.resize(t_total);
    res.snapshots.ys.resize(t_total);
    res.snapshots.timestamps.resize(t_total);
    const ReducedIndexMap map = ReducedIndexMap::from_grid(grid_a);

    parallel_for(t_total, [&](int t) {
        const bool before = t + 1 <= config.switch_sample;
        const Grid& grid = before ? grid_a : grid_b;
        const AdmittanceMatrix& y = before ? ya : yb;
        res.truth[t] = before ? config.grid_a : config.grid_b;
        PowerFlowSpec spec = make_spec(grid, res.inputs_p.col(t),
                                       res.inputs_q.col(t), config.pf_tol,
                                       config.pf_max_iter);
        PowerFlowResult pf;
        try {
            pf = newton_raphson_solve(grid, spec, flat_start(grid), y);
        } catch (const NonConvergence& e) {
            throw NonConvergence(e.best, e.max_mismatch, e.iterations,
                                 "at sample " + std::to_string(t + 1));
        }
        res.z_true.col(t) = pf.state.v;
        res.snapshots.xs[t] = reduced_state(pf.state, map);
        res.snapshots.ys[t] =
            reduced_injections(injections(pf.state, grid, y), map);
        res.snapshots.timestamps[t] = t + 1;
    });

    // Measurement layer, one stream per node.
    res.z_ob = res.z_true;
    for (int i = 0; i < n; ++i) {
        Rng rng = substream(config.seed, stream::kMeasurement,
                            static_cast<std::uint64_t>(grid_a.buses[i].id));
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int t = 0; t < t_total; ++t)
            res.z_ob(i, t) += config.mu_e + config.sigma_e * gauss(rng);
    }
    return res;
}

} // namespace gridjac
