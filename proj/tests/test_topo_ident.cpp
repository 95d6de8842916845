#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gridjac/data_synth.hpp"
#include "gridjac/network_io.hpp"
#include "gridjac/topo_ident.hpp"

using namespace gridjac;

namespace {

Grid ieee33() {
    static Grid grid = load_network(std::string(GRIDJAC_CASES_DIR) + "/ieee33.json");
    return grid;
}

Grid ieee33_switched() { return apply_switch_plan(ieee33(), {11, 35}); }

//! M1 with deliberately wrong impedances on a handful of branches.
Grid ieee33_bad_impedance() {
    Grid grid = ieee33();
    for (int id : {4, 9, 24, 28, 30}) {
        grid.branches[id - 1].g *= 1.6;
        grid.branches[id - 1].b *= 1.6;
    }
    return grid;
}

ModelBank two_model_bank() {
    ModelBank bank;
    bank.models.emplace_back("M1", ieee33());
    bank.models.emplace_back("M2", ieee33_switched());
    return bank;
}

MatchConfig default_cfg() {
    MatchConfig cfg;
    cfg.renewables_nodes = {20, 31};
    return cfg;
}

SynthResult scenario_run(std::uint64_t seed, int n_samples = 300,
                         double sigma_e = 0.005, double mu_e = 0.0,
                         double renewables_amp = 1.0) {
    ScenarioConfig cfg;
    cfg.grid_a = "M1";
    cfg.grid_b = "M2";
    cfg.n_samples = n_samples;
    cfg.switch_sample = n_samples / 2;
    cfg.sigma_e = sigma_e;
    cfg.mu_e = mu_e;
    cfg.renewables_amplitude = renewables_amp;
    cfg.seed = seed;
    return synthesize(cfg, ieee33(), ieee33_switched());
}

} // namespace

TEST_CASE("difference matrices") {
    Eigen::MatrixXd ob = Eigen::MatrixXd::Random(4, 8);
    SECTION("identical inputs give zeros") {
        CHECK(difference(ob, ob).x.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("unit offset gives ones") {
        Eigen::MatrixXd hat = ob.array() - 1.0;
        CHECK((difference(ob, hat).x.array() - 1.0).abs().maxCoeff() < 1e-12);
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(difference(ob, Eigen::MatrixXd::Zero(4, 7)), DimensionError);
    }
}

TEST_CASE("observation windows") {
    Eigen::MatrixXd x(2, 1440);
    for (int t = 0; t < 1440; ++t) x.col(t).setConstant(t + 1);

    SECTION("named periods select the documented columns") {
        Eigen::MatrixXd t1 = window(x, Period::T1);
        CHECK(t1.cols() == 720);
        CHECK(t1(0, 0) == 1.0);
        CHECK(t1(0, 719) == 720.0);
        Eigen::MatrixXd t5 = window(x, Period::T5);
        CHECK(t5(0, 0) == 721.0);
        CHECK(t5(0, 719) == 1440.0);
    }
    SECTION("T1 and T5 tile the whole observation") {
        auto [s1, l1] = period_window(Period::T1);
        auto [s5, l5] = period_window(Period::T5);
        CHECK(s1 + l1 == s5); // contiguous, no overlap
        CHECK(s5 + l5 - 1 == 1440);
        for (Period p : {Period::T2, Period::T3, Period::T4}) {
            auto [s, l] = period_window(p);
            CHECK(s > s1);
            CHECK(s + l - 1 < 1440 + 1);
        }
    }
    SECTION("out-of-bounds windows are rejected") {
        CHECK_THROWS_AS(window(x, 1, 1441), RangeError);
        CHECK_THROWS_AS(window(x, 0, 10), RangeError);
        CHECK_THROWS_AS(window(x, 1440, 2), RangeError);
    }
}

TEST_CASE("se_output") {
    Grid grid = ieee33();
    SECTION("zero loads give flat unit voltages") {
        Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(33, 5);
        SEOutput out = se_output(grid, zeros, zeros);
        CHECK(out.failed.empty());
        CHECK((out.z_hat.array() == 1.0).all());
    }
    SECTION("matched model reproduces noiseless observations") {
        ScenarioConfig cfg;
        cfg.grid_a = "M1";
        cfg.grid_b = "M2";
        cfg.n_samples = 60;
        cfg.switch_sample = 60;
        cfg.sigma_e = 0.0;
        SynthResult res = synthesize(cfg, grid, ieee33_switched());
        SEOutput out = se_output(grid, res.inputs_p, res.inputs_q);
        CHECK(out.failed.empty());
        CHECK((out.z_hat - res.z_ob).cwiseAbs().maxCoeff() < 1e-7);
    }
    SECTION("dimension mismatch") {
        CHECK_THROWS_AS(se_output(grid, Eigen::MatrixXd::Zero(32, 5),
                                  Eigen::MatrixXd::Zero(32, 5)),
                        DimensionError);
    }
}

TEST_CASE("autocorr_profile") {
    SECTION("zero matrix is degenerate row by row") {
        Eigen::VectorXd b = autocorr_profile(Eigen::MatrixXd::Zero(4, 100));
        for (int i = 0; i < 4; ++i) CHECK(std::isnan(b(i)));
    }
    SECTION("white rows estimate near zero") {
        Rng rng = substream(31, stream::kGeneric);
        std::normal_distribution<double> gauss;
        Eigen::MatrixXd x(6, 400);
        for (int i = 0; i < 6; ++i)
            for (int t = 0; t < 400; ++t) x(i, t) = gauss(rng);
        Eigen::VectorXd b = autocorr_profile(x);
        CHECK(b.cwiseAbs().maxCoeff() < 0.15);
    }
    SECTION("a fixed row offset does not fake correlation") {
        Rng rng = substream(32, stream::kGeneric);
        std::normal_distribution<double> gauss;
        Eigen::MatrixXd x(2, 400);
        for (int i = 0; i < 2; ++i)
            for (int t = 0; t < 400; ++t) x(i, t) = gauss(rng);
        Eigen::VectorXd plain = autocorr_profile(x);
        Eigen::MatrixXd shifted = x.array() + 5.0;
        Eigen::VectorXd offset = autocorr_profile(shifted);
        CHECK((plain - offset).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("match_model on the switch scenario") {
    ModelBank bank = two_model_bank();
    SynthResult res = scenario_run(1);
    const int half = 150;

    SECTION("first window belongs to M1, second to M2") {
        TIReport before = match_model(window(res.z_ob, 1, half),
                                      window(res.inputs_p, 1, half),
                                      window(res.inputs_q, 1, half), bank,
                                      default_cfg());
        CHECK(before.winner == "M1");
        TIReport after = match_model(window(res.z_ob, half + 1, half),
                                     window(res.inputs_p, half + 1, half),
                                     window(res.inputs_q, half + 1, half), bank,
                                     default_cfg());
        CHECK(after.winner == "M2");
        CHECK(before.ranking.size() == 2);
        CHECK(before.ranking[0].distance <= before.ranking[1].distance);
    }

    SECTION("report is deterministic") {
        TIReport a = match_model(window(res.z_ob, 1, half),
                                 window(res.inputs_p, 1, half),
                                 window(res.inputs_q, 1, half), bank, default_cfg());
        TIReport b = match_model(window(res.z_ob, 1, half),
                                 window(res.inputs_p, 1, half),
                                 window(res.inputs_q, 1, half), bank, default_cfg());
        REQUIRE(a.ranking.size() == b.ranking.size());
        for (std::size_t i = 0; i < a.ranking.size(); ++i) {
            CHECK(a.ranking[i].label == b.ranking[i].label);
            CHECK(a.ranking[i].distance == b.ranking[i].distance);
        }
    }

    SECTION("fixed measurement offset changes nothing in the ranking") {
        TIReport base = match_model(window(res.z_ob, 1, half),
                                    window(res.inputs_p, 1, half),
                                    window(res.inputs_q, 1, half), bank,
                                    default_cfg());
        Eigen::MatrixXd shifted = window(res.z_ob, 1, half).array() + 0.01;
        TIReport moved = match_model(shifted, window(res.inputs_p, 1, half),
                                     window(res.inputs_q, 1, half), bank,
                                     default_cfg());
        CHECK(moved.winner == base.winner);
        REQUIRE(moved.ranking.size() == base.ranking.size());
        for (std::size_t i = 0; i < base.ranking.size(); ++i)
            CHECK(moved.ranking[i].label == base.ranking[i].label);
    }
}

TEST_CASE("singleton bank always wins") {
    ModelBank bank;
    bank.models.emplace_back("only", ieee33());
    SynthResult res = scenario_run(2, 200);
    TIReport rep = match_model(window(res.z_ob, 1, 100),
                               window(res.inputs_p, 1, 100),
                               window(res.inputs_q, 1, 100), bank, default_cfg());
    CHECK(rep.winner == "only");
}

TEST_CASE("noise-free matched model scores an exact zero distance") {
    ModelBank bank = two_model_bank();
    SynthResult res = scenario_run(3, 200, /*sigma_e=*/0.0, /*mu_e=*/0.0,
                                   /*renewables_amp=*/0.0);
    TIReport rep = match_model(window(res.z_ob, 1, 100),
                               window(res.inputs_p, 1, 100),
                               window(res.inputs_q, 1, 100), bank, default_cfg());
    CHECK(rep.winner == "M1");
    CHECK(rep.ranking[0].distance < 1e-6);
    CHECK(rep.ranking[0].exact_match);
    CHECK(rep.ranking[1].distance > 1e-3);
}

TEST_CASE("three-model bank with an impedance-error variant") {
    ModelBank bank = two_model_bank();
    bank.models.emplace_back("M3", ieee33_bad_impedance());
    for (std::uint64_t seed : {4u, 5u, 6u}) {
        SynthResult res = scenario_run(seed);
        TIReport rep = match_model(window(res.z_ob, 1, 150),
                                   window(res.inputs_p, 1, 150),
                                   window(res.inputs_q, 1, 150), bank,
                                   default_cfg());
        CHECK(rep.winner == "M1");
    }
}

TEST_CASE("mismatched model elevates b_hat on influenced nodes") {
    Grid grid = ieee33();
    // precise meters so the renewables imprint dominates sigma_e
    SynthResult res = scenario_run(7, 300, /*sigma_e=*/5e-4);
    // second half runs under M2; diff against M1 carries the structure
    SEOutput se = se_output(grid, window(res.inputs_p, 151, 150),
                            window(res.inputs_q, 151, 150));
    DifferenceMatrix mismatched =
        difference(window(res.z_ob, 151, 150), se.z_hat, "M1");
    Eigen::VectorXd bhat = autocorr_profile(mismatched.x);
    // the rerouted feeder section rides the renewables swings; its rows show
    // the AR coefficient while untouched laterals stay white
    CHECK(bhat(grid.bus_index(12)) > 0.5);
    CHECK(bhat(grid.bus_index(15)) > 0.5);
    CHECK(bhat.maxCoeff() > 0.7);

    // matched model over the same window stays white
    SEOutput se2 = se_output(ieee33_switched(), window(res.inputs_p, 151, 150),
                             window(res.inputs_q, 151, 150));
    Eigen::VectorXd bhat2 =
        autocorr_profile(difference(window(res.z_ob, 151, 150), se2.z_hat, "M2").x);
    CHECK(bhat2.cwiseAbs().maxCoeff() < 0.3);
}

TEST_CASE("bank validation and guards") {
    ModelBank empty;
    SynthResult res = scenario_run(8, 100);
    CHECK_THROWS_AS(match_model(window(res.z_ob, 1, 50),
                                window(res.inputs_p, 1, 50),
                                window(res.inputs_q, 1, 50), empty, default_cfg()),
                    TIFailure);

    ModelBank dup;
    dup.models.emplace_back("M", ieee33());
    dup.models.emplace_back("M", ieee33_switched());
    CHECK_THROWS_AS(dup.validate(), TIFailure);

    // window too short for the node count
    ModelBank bank = two_model_bank();
    CHECK_THROWS_AS(match_model(window(res.z_ob, 1, 20),
                                window(res.inputs_p, 1, 20),
                                window(res.inputs_q, 1, 20), bank, default_cfg()),
                    RangeError);
}
