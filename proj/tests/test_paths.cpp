#include <jdr/examples/ruin.hpp>
#include <jdr/examples/survival.hpp>
#include <jdr/paths.hpp>
#include <jdr/thinning.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace jdr;

namespace {

/// x' = 1 on (0, 2), no jumps, g = 1.
Problem1D drift_only() {
    Problem1D p;
    p.constant_drift = vec1(1.0);
    p.drift = [](double, const Vec<1>&) { return vec1(1.0); };
    p.domain = Domain<1>::interval(0.0, 2.0);
    p.terminal_payoff = [](const Vec<1>&) { return 1.0; };
    return p;
}

/// Brownian motion with drift on a wide interval and a constant jump rate.
Problem1D wide_diffusion(double rate, std::optional<double> bound) {
    Problem1D p;
    p.constant_drift = vec1(0.5);
    p.drift = [](double, const Vec<1>&) { return vec1(0.5); };
    p.diffusion = [](double, const Vec<1>&) { return NoiseMatrix<1, 1>::Constant(1.0); };
    p.jump_rate = [rate](double, const Vec<1>&) { return rate; };
    p.rate_bound = bound;
    p.jump_measure = JumpMeasure<1>::gaussian(0.1);
    p.domain = Domain<1>::interval(-100.0, 100.0);
    return p;
}

SimulationSettings skeleton(double step = 1e-3) {
    SimulationSettings s;
    s.step = step;
    s.record_skeleton = true;
    return s;
}

}  // namespace

TEST(SimulateP0, AffineBoundaryHit) {
    const auto p = drift_only();
    const auto rec = simulate_p0_path(p, at(0.0, 1.5), skeleton(), RngStreamSpec{1}, 0);
    EXPECT_EQ(rec.reason, StopReason::BoundaryHit);
    EXPECT_NEAR(rec.stop_time, 0.5, 1e-9);
    EXPECT_DOUBLE_EQ(rec.stop_post[0], 2.0);
    EXPECT_DOUBLE_EQ(rec.theta(), 1.0);
    ASSERT_TRUE(rec.exit().has_value());
    EXPECT_EQ(rec.exit()->cause, StopReason::BoundaryHit);
    EXPECT_TRUE(rec.jumps.empty());
}

TEST(SimulateP0, RuinDriftOnlyPath) {
    const auto p = make_ruin_problem(RuinParams{});
    const auto rec = simulate_p0_path(p, at(0.0, 0.5), skeleton(), RngStreamSpec{1}, 0);
    EXPECT_EQ(rec.reason, StopReason::Horizon);
    EXPECT_FALSE(rec.exit().has_value());
    EXPECT_NEAR(rec.stop_post[0], 1.5, 1e-12);
    EXPECT_NEAR(rec.lambda_discount(), std::exp(-1.0), 1e-12);
    EXPECT_TRUE(rec.jumps.empty());
}

TEST(SimulateP0, SurvivalStatesStayInClosure) {
    const auto p = make_survival_problem(SurvivalParams{});
    for (std::uint64_t id = 0; id < 50; ++id) {
        const auto rec = simulate_p0_path(p, at(0.0, 1.0), skeleton(), RngStreamSpec{42}, id);
        for (const auto& x : rec.grid_states) {
            EXPECT_GE(x[0], 0.0);
            EXPECT_LE(x[0], 2.0);
        }
        EXPECT_GE(rec.stop_post[0], 0.0);
        EXPECT_LE(rec.stop_post[0], 2.0);
        EXPECT_EQ(rec.theta_log, 0.0);
        EXPECT_TRUE(rec.jumps.empty());
        if (rec.exited()) {
            EXPECT_EQ(rec.reason, StopReason::BoundaryHit);
        }
    }
}

TEST(SimulateP0, NonFiniteStateFaults) {
    auto p = drift_only();
    p.constant_drift.reset();
    p.drift = [](double t, const Vec<1>&) {
        return vec1(t > 0.25 ? std::numeric_limits<double>::quiet_NaN() : 0.1);
    };
    try {
        simulate_p0_path(p, at(0.0, 1.0), skeleton(0.01), RngStreamSpec{1}, 0);
        FAIL() << "expected a simulation fault";
    } catch (const SimulationFault& e) {
        EXPECT_GE(e.last_valid_time(), 0.25);
        EXPECT_LE(e.last_valid_time(), 0.27);
    }
}

TEST(SimulateP0, RejectsBadStart) {
    const auto p = drift_only();
    EXPECT_THROW(simulate_p0_path(p, at(0.0, 3.0), skeleton(), RngStreamSpec{1}, 0), ArgumentError);
    EXPECT_THROW(simulate_p0_path(p, at(1.5, 1.0), skeleton(), RngStreamSpec{1}, 0), ArgumentError);
}

TEST(SimulatePLambda, ZeroRateMatchesP0Realization) {
    const auto p = wide_diffusion(0.0, std::nullopt);
    for (std::uint64_t id = 0; id < 20; ++id) {
        const auto a = simulate_p0_path(p, at(0.0, 0.0), skeleton(), RngStreamSpec{9}, id);
        const auto b = simulate_plambda_path(p, at(0.0, 0.0), -1, skeleton(), RngStreamSpec{9}, id);
        EXPECT_EQ(a.reason, b.reason);
        EXPECT_DOUBLE_EQ(a.stop_time, b.stop_time);
        EXPECT_DOUBLE_EQ(a.stop_post[0], b.stop_post[0]);
        EXPECT_TRUE(b.jumps.empty());
        EXPECT_TRUE(b.jump_clock_exhausted);
    }
}

TEST(SimulatePLambda, RuinJumpsAreUnitDrawdowns) {
    const auto p = make_ruin_problem(RuinParams{});
    int overshoots = 0;
    for (std::uint64_t id = 0; id < 400; ++id) {
        const auto rec = simulate_plambda_path(p, at(0.0, 0.3), -1, skeleton(), RngStreamSpec{3}, id);
        double last = 0.0;
        for (const auto& j : rec.jumps) {
            EXPECT_NEAR(j.post[0], j.pre[0] - 1.0, 1e-12);
            EXPECT_GT(j.time, last);
            EXPECT_LE(j.time, rec.stop_time);
            EXPECT_FALSE(j.zero_sized);
            last = j.time;
        }
        if (rec.reason == StopReason::JumpOvershoot) {
            ++overshoots;
            ASSERT_FALSE(rec.jumps.empty());
            EXPECT_DOUBLE_EQ(rec.stop_time, rec.jumps.back().time);
            EXPECT_LT(rec.stop_post[0], 0.0);
            EXPECT_GE(rec.stop_pre[0], 0.0);
        } else {
            EXPECT_EQ(rec.reason, StopReason::Horizon);
        }
        EXPECT_GT(rec.lambda_discount(), 0.0);
        EXPECT_LE(rec.lambda_discount(), 1.0);
    }
    // First jump ruins iff it comes before 0.7: probability 1 - e^{-0.7}, about 0.5.
    EXPECT_GT(overshoots, 120);
}

TEST(SimulatePLambda, StopsAtJumpLimit) {
    const auto p = make_ruin_problem(RuinParams{1.0, 5.0, -0.1, 1.0});
    int limited = 0;
    for (std::uint64_t id = 0; id < 100; ++id) {
        const auto rec = simulate_plambda_path(p, at(0.0, 2.0), 2, skeleton(), RngStreamSpec{3}, id);
        EXPECT_LE(rec.jumps.size(), 2u);
        if (rec.reason == StopReason::JumpLimit) {
            ++limited;
            EXPECT_EQ(rec.jumps.size(), 2u);
            EXPECT_DOUBLE_EQ(rec.stop_time, rec.jumps.back().time);
        }
    }
    EXPECT_GT(limited, 80);
}

TEST(SimulatePLambda, InversionWithoutBound) {
    auto p = wide_diffusion(3.0, std::nullopt);
    double jumps = 0.0;
    const int n = 2000;
    for (int id = 0; id < n; ++id)
        jumps += simulate_plambda_path(p, at(0.0, 0.0), -1, SimulationSettings{}, RngStreamSpec{5}, id).jumps.size();
    // Poisson(3) mean with stderr sqrt(3/n).
    EXPECT_NEAR(jumps / n, 3.0, 4.0 * std::sqrt(3.0 / n));
}

TEST(SimulateThinned, FullAcceptanceWhenRateEqualsBound) {
    const auto p = wide_diffusion(2.0, 2.0);
    for (std::uint64_t id = 0; id < 50; ++id) {
        const auto rec = simulate_thinned_path(p, at(0.0, 0.0), -1, skeleton(), RngStreamSpec{4}, id);
        EXPECT_EQ(rec.nonzero_jumps(), static_cast<int>(rec.jumps.size()));
    }
}

TEST(SimulateThinned, ZeroRateGivesOnlyZeroJumps) {
    const auto p = wide_diffusion(0.0, 1.0);
    int candidates = 0;
    for (std::uint64_t id = 0; id < 50; ++id) {
        const auto thin = simulate_thinned_path(p, at(0.0, 0.0), -1, skeleton(), RngStreamSpec{4}, id);
        const auto base = simulate_p0_path(p, at(0.0, 0.0), skeleton(), RngStreamSpec{4}, id);
        candidates += static_cast<int>(thin.jumps.size());
        EXPECT_EQ(thin.nonzero_jumps(), 0);
        for (const auto& j : thin.jumps) {
            EXPECT_TRUE(j.zero_sized);
            EXPECT_EQ(j.pre[0], j.post[0]);
        }
        // Grid values of the visible path coincide with the jump-free skeleton.
        ASSERT_EQ(thin.grid_states.size(), base.grid_states.size());
        for (std::size_t k = 0; k < base.grid_states.size(); ++k)
            EXPECT_NEAR(thin.grid_states[k][0], base.grid_states[k][0], 1e-10);
    }
    EXPECT_GT(candidates, 20);
}

TEST(SimulateThinned, RequiresRateBound) {
    const auto p = wide_diffusion(1.0, std::nullopt);
    EXPECT_THROW(simulate_thinned_path(p, at(0.0, 0.0), 1, skeleton(), RngStreamSpec{4}, 0), ConfigError);
}

TEST(SimulateThinned, DominanceFault) {
    const auto p = wide_diffusion(3.0, 1.0);
    EXPECT_THROW(
        {
            for (std::uint64_t id = 0; id < 20; ++id)
                simulate_thinned_path(p, at(0.0, 0.0), -1, skeleton(), RngStreamSpec{4}, id);
        },
        DominanceFault);
}

TEST(SimulateThinned, KillingDominatesPathRate) {
    SurvivalParams sp;
    const auto p = make_survival_problem(sp);
    for (std::uint64_t id = 0; id < 100; ++id) {
        const auto rec = simulate_thinned_path(p, at(0.0, 1.0), 3, skeleton(), RngStreamSpec{8}, id);
        EXPECT_LE(rec.lambda_log, sp.lambda_tilde() * (rec.stop_time - rec.start_time) + 1e-12);
        EXPECT_LE(rec.jumps.size(), 3u);
        double last = 0.0;
        for (const auto& j : rec.jumps) {
            EXPECT_GT(j.time, last);
            last = j.time;
            // Zero-sized candidates never leave the domain.
            if (j.zero_sized) EXPECT_TRUE(p.domain.in_closure(j.post));
            else EXPECT_NE(j.pre[0], j.post[0]);
        }
    }
}

TEST(Paths, DeterministicGivenSeed) {
    const auto p = make_survival_problem(SurvivalParams{});
    const auto a = simulate_plambda_path(p, at(0.2, 1.0), -1, skeleton(), RngStreamSpec{77}, 5);
    const auto b = simulate_plambda_path(p, at(0.2, 1.0), -1, skeleton(), RngStreamSpec{77}, 5);
    EXPECT_EQ(a.grid_states.size(), b.grid_states.size());
    EXPECT_EQ(a.jumps.size(), b.jumps.size());
    EXPECT_EQ(a.stop_time, b.stop_time);
    EXPECT_EQ(a.stop_post[0], b.stop_post[0]);
    const auto c = simulate_plambda_path(p, at(0.2, 1.0), -1, skeleton(), RngStreamSpec{77}, 6);
    EXPECT_NE(a.stop_time, c.stop_time);
}

TEST(Paths, RuinExitProbabilityAgreesAcrossLaws) {
    const RuinParams rp;
    const auto p = make_ruin_problem(rp);
    const auto thin = with_rate_bound(p, 2.0);
    const int n = 20000;
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
        a[i] = simulate_plambda_path(p, at(0.0, 0.5), -1, SimulationSettings{0.1}, RngStreamSpec{11}, i).exited();
        b[i] = simulate_thinned_path(thin, at(0.0, 0.5), -1, SimulationSettings{0.1}, RngStreamSpec{12}, i).exited();
    }
    const auto ea = mc_aggregate(a, 0.99), eb = mc_aggregate(b, 0.99);
    EXPECT_LE(std::abs(ea.mean - eb.mean), 3.0 * combined_stderr(ea, eb));
}
