#include <jdr/examples/ruin.hpp>
#include <jdr/examples/survival.hpp>
#include <jdr/thinning.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace jdr;

namespace {

EstimatorSettings settings(std::size_t n, std::uint64_t seed, double step = 0.0) {
    EstimatorSettings s;
    s.n_paths = n;
    s.rng = RngStreamSpec{seed};
    s.sim.step = step;
    return s;
}

/// Ruin with candidate rate 2: half the candidates are real claims.
double ruin_thinned_w1(double t, double x) {
    const double reach = std::clamp(1.0 - x, 0.0, 1.0 - t);
    return 0.5 * -std::expm1(-2.0 * reach);
}

}  // namespace

TEST(ThinnedMeasure, MassAtOrigin) {
    const auto p = make_survival_problem(SurvivalParams{});
    const auto nu = build_thinned_measure(p);
    EXPECT_DOUBLE_EQ(nu.rate_bound(), 1.25);
    EXPECT_NEAR(nu.mass_at_origin(0.5, vec1(1.0)), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(nu.mass_at_origin(0.0, vec1(1.0)), 1.0);
    EXPECT_DOUBLE_EQ(nu.mass_at_origin(0.5, vec1(0.0)), 1.0);
    EXPECT_NEAR(nu.mass_at_origin(0.5, vec1(0.5)), 0.25, 1e-15);
    const auto wide = ThinnedMeasure(p, 2.5);
    EXPECT_NEAR(wide.mass_at_origin(0.5, vec1(1.0)), 0.5, 1e-15);
}

TEST(ThinnedMeasure, SampleFrequencyMatchesMass) {
    const auto p = make_survival_problem(SurvivalParams{});
    const auto nu = ThinnedMeasure(p, 2.5);
    Xoshiro256 rng(11);
    const int n = 100000;
    int zeros = 0;
    for (int i = 0; i < n; ++i) zeros += nu.sample(rng, 0.5, vec1(1.0))[0] == 0.0 ? 1 : 0;
    const double se = std::sqrt(0.25 / n);
    EXPECT_NEAR(zeros / static_cast<double>(n), 0.5, 4.0 * se);
}

TEST(ThinnedMeasure, DominanceAndMissingBound) {
    const auto p = make_survival_problem(SurvivalParams{});
    const auto tight = ThinnedMeasure(p, 1.0);
    EXPECT_NO_THROW((void)tight.acceptance(0.1, vec1(1.0)));
    EXPECT_THROW((void)tight.acceptance(0.5, vec1(1.0)), DominanceFault);
    auto unbounded = p;
    unbounded.rate_bound.reset();
    EXPECT_THROW(build_thinned_measure(unbounded), ConfigError);
    EXPECT_THROW(estimate_thinned(unbounded, ThinnedKind::W, 1, at(0.0, 1.0), settings(10, 1)), ConfigError);
    EXPECT_THROW(ThinnedMeasure(p, 0.0), ConfigError);
}

TEST(EstimateThinned, LevelZeroIsW0) {
    SurvivalSeries series(SurvivalParams{}, SeriesGrid{0.01, 0.01});
    const auto p = series.problem();
    const auto s = settings(300, 2, 0.01);
    EXPECT_DOUBLE_EQ(estimate_thinned(p, ThinnedKind::W, 0, at(0.2, 0.9), s).mean,
                     estimate_w0(p, at(0.2, 0.9), s).mean);
    EXPECT_THROW(estimate_thinned(p, ThinnedKind::V, 0, at(0.2, 0.9), s), ArgumentError);
}

TEST(EstimateThinned, RuinFirstLevelClosedForm) {
    const auto p = with_rate_bound(make_ruin_problem(RuinParams{}), 2.0);
    for (double x : {0.0, 0.4, 0.9}) {
        const auto e = estimate_thinned(p, ThinnedKind::W, 1, at(0.0, x), settings(50000, 3, 0.1));
        EXPECT_TRUE(e.contains(ruin_thinned_w1(0.0, x))) << x << ": " << e.mean << " vs " << ruin_thinned_w1(0.0, x);
    }
}

TEST(EstimateThinned, SurvivalFirstLevelMatchesSeries) {
    SurvivalSeries series(SurvivalParams{}, SeriesGrid{0.01, 0.01});
    const auto p = series.problem();
    auto s = settings(20000, 4, 1e-3);
    s.sim.bridge_correction = true;
    const auto e = estimate_thinned(p, ThinnedKind::W, 1, at(0.0, 1.0), s);
    const double ref = series.w_tilde(1, 0.0, 1.0);
    EXPECT_LE(std::abs(e.mean - ref), 3.0 * e.std_error + 3e-3) << e.mean << " vs " << ref;
}

TEST(ThinnedTwoRoutes, RuinSecondLevel) {
    const auto p = with_rate_bound(make_ruin_problem(RuinParams{}), 2.0);
    auto carrier = [](double t, const Vec<1>& x) { return x[0] < 0.0 ? 0.0 : ruin_thinned_w1(t, x[0]); };
    const auto a = thinned_two_routes(p, 2, 1, carrier, at(0.0, 0.5), settings(50000, 5, 0.1));
    const auto b = estimate_thinned(p, ThinnedKind::W, 2, at(0.0, 0.5), settings(50000, 6, 0.1));
    EXPECT_LE(std::abs(a.mean - b.mean), 3.0 * combined_stderr(a, b));
    EXPECT_GT(b.mean, ruin_thinned_w1(0.0, 0.5));
    EXPECT_THROW(thinned_two_routes(p, 2, 2, carrier, at(0.0, 0.5), settings(10, 1)), ArgumentError);
}

TEST(DejumpThinned, RuinWithZeroCarrier) {
    // w_prev = 0 leaves only the ruinous part of the claim mass.
    const auto p = with_rate_bound(make_ruin_problem(RuinParams{}), 2.0);
    GridFunction<1> zero(Axis::with_step(0.0, 1.0, 0.01), Axis::with_step(0.0, 4.0, 0.001));
    const auto est = dejump_points_thinned(p, zero, {at(0.0, 0.0), at(0.0, 0.5), at(0.3, 0.9), at(0.0, 1.5)},
                                           settings(1, 1, 1e-3));
    EXPECT_NEAR(est[0].mean, ruin_thinned_w1(0.0, 0.0), 1e-3);
    EXPECT_NEAR(est[1].mean, ruin_thinned_w1(0.0, 0.5), 1e-3);
    EXPECT_NEAR(est[2].mean, ruin_thinned_w1(0.3, 0.9), 1e-3);
    EXPECT_NEAR(est[3].mean, 0.0, 1e-12);
}

TEST(DejumpThinned, ZeroRateFixesW0) {
    SurvivalSeries series(SurvivalParams{}, SeriesGrid{0.01, 0.01});
    auto p = series.problem();
    p.jump_rate = [](double, const Vec<1>&) { return 0.0; };
    const auto& w0 = series.table(0);
    auto s = settings(4000, 7, 1e-3);
    s.sim.bridge_correction = true;
    const auto step = dejump_step_thinned(p, w0, Axis(0.0, 0.5, 2), Axis(0.5, 1.0, 2), s);
    for (std::size_t k = 0; k < step.value.size(); ++k) {
        auto [t, x] = step.value.node(k);
        EXPECT_LE(std::abs(step.value.values()[k] - series.w0(t, x[0])), 3.0 * step.std_error.values()[k] + 3e-3)
            << t << "," << x[0];
    }
    auto unbounded = p;
    unbounded.rate_bound.reset();
    EXPECT_THROW(dejump_points_thinned(unbounded, w0, {at(0.0, 1.0)}, s), ConfigError);
}
