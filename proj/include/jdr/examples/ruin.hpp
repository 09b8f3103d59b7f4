#pragma once

#include <jdr/bounds.hpp>
#include <jdr/errors.hpp>
#include <jdr/grid_function.hpp>
#include <jdr/harness/monte_carlo.hpp>
#include <jdr/harness/quadrature.hpp>
#include <jdr/model.hpp>
#include <jdr/recursion.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace jdr {

/// Finite-time ruin of X_s = x + b (s - t) + c N_s with N a rate-lambda Poisson
/// process: ruin is the first jump that takes X below zero.
struct RuinParams {
    double b = 1.0;
    double lambda = 1.0;
    double c = -1.0;
    double T = 1.0;

    void validate() const {
        if (!(b > 0.0)) throw ConfigError("ruin: drift b must be positive");
        if (!(lambda > 0.0)) throw ConfigError("ruin: rate lambda must be positive");
        if (!(c < 0.0)) throw ConfigError("ruin: jump size c must be negative");
        if (!(T > 0.0)) throw ConfigError("ruin: horizon T must be positive");
    }
    /// Time until a jump would ruin from x.
    [[nodiscard]] double theta1(double x) const { return std::max(0.0, (-c - x) / b); }
    /// Time until two jumps would ruin from x, capped at T - t.
    [[nodiscard]] double theta2(double t, double x) const { return std::max(0.0, std::min((-2.0 * c - x) / b, T - t)); }
};

inline Problem1D make_ruin_problem(const RuinParams& rp) {
    rp.validate();
    Problem1D p;
    p.name = "ruin";
    p.constant_drift = vec1(rp.b);
    p.drift = [b = rp.b](double, const Vec<1>&) { return vec1(b); };
    p.jump_rate = [lam = rp.lambda](double, const Vec<1>&) { return lam; };
    p.constant_jump_rate = rp.lambda;
    p.rate_bound = rp.lambda;
    p.jump_measure = JumpMeasure<1>::point_mass(vec1(rp.c));
    p.domain = Domain<1>::interval(0.0, kInf);
    p.terminal_payoff = [](const Vec<1>&) { return 0.0; };
    p.exit_payoff = [](double, const Vec<1>&, const Vec<1>&) { return 1.0; };
    p.horizon = rp.T;
    p.reference_w0 = [](double, const Vec<1>&) { return 0.0; };
    return p;
}

/// w_0, w_1 and w_2 in closed form.
inline double ruin_closed_form(const RuinParams& rp, int m, double t, double x) {
    if (x < 0.0 || t < 0.0 || t > rp.T) throw ArgumentError("ruin_closed_form: need x >= 0 and t in [0,T]");
    if (m < 0 || m > 2) throw ArgumentError("ruin_closed_form: closed forms exist for m = 0, 1, 2 only");
    if (m == 0) return 0.0;
    const double lam = rp.lambda;
    const double arg = std::min((-rp.c - x) / rp.b, rp.T - t);
    const double w1 = arg >= 0.0 ? -std::expm1(-lam * arg) : 0.0;
    if (m == 1) return w1;
    const double th1 = rp.theta1(x), th2 = rp.theta2(t, x);
    if (th2 < th1) return w1;
    return w1 + std::exp(-lam * th1) - std::exp(-lam * th2) - lam * std::exp(-lam * th2) * (th2 - th1);
}

struct RuinIterates {
    RuinParams params;
    std::vector<GridFunction<1>> w;  ///< w[m-1] holds w_m

    [[nodiscard]] const GridFunction<1>& operator[](int m) const {
        if (m < 1 || m > static_cast<int>(w.size())) throw ArgumentError("RuinIterates: m out of range");
        return w[m - 1];
    }
    [[nodiscard]] int levels() const noexcept { return static_cast<int>(w.size()); }
};

/// w_m(t,x) = int_t^T lambda e^{-lambda (s-t)} [w_{m-1}(s, x + b(s-t) + c) 1{>= 0} + 1{< 0}] ds
/// by breakpoint-aware quadrature against the tabulated w_{m-1}.
inline RuinIterates ruin_iterate(const RuinParams& rp, int m_max, const Axis& time, const Axis& space,
                                 double quad_tol = 1e-10, unsigned workers = default_workers()) {
    rp.validate();
    if (m_max < 1) throw ArgumentError("ruin_iterate: m_max must be >= 1");
    if (space.lo < 0.0) throw ArgumentError("ruin_iterate: space window must lie in [0, inf)");
    if (std::abs(time.hi - rp.T) > 1e-12) throw ArgumentError("ruin_iterate: time axis must end at T");
    RuinIterates out{rp, {}};
    const double lam = rp.lambda, b = rp.b, c = rp.c, T = rp.T;
    GridFunction<1> prev(time, space);  // w_0 = 0
    QuadratureOptions qo{quad_tol, 20000, true};
    for (int m = 1; m <= m_max; ++m) {
        GridFunction<1> cur(time, space);
        const auto tk = time.knots();
        parallel_for(cur.size(), workers, [&](std::size_t k) {
            auto [t, xv] = cur.node(k);
            const double x = xv[0];
            if (t >= T) {
                cur.values()[k] = 0.0;
                return;
            }
            // Along a time cell the landing point and the carrier's interpolation
            // line share slope b, so the integrand is smooth between time knots.
            std::vector<double> bps{t + (-c - x) / b};
            for (double s : tk)
                if (s > t && s < T) bps.push_back(s);
            auto f = [&](double s) {
                const double y = x + b * (s - t) + c;
                const double inner = y < 0.0 ? 1.0 : prev.along(s, y, b);
                return lam * std::exp(-lam * (s - t)) * inner;
            };
            cur.values()[k] = integrate_1d(f, t, T, qo, bps).value;
        });
        out.w.push_back(cur);
        prev = std::move(cur);
    }
    return out;
}

/// w_m <= u <= w_m + lambda (T - t) w_m(t, -(m-1) c).
inline BoundPair ruin_bounds(const RuinIterates& it, int m, double t, double x) {
    const auto& w = it[m];
    const double anchor = -(m - 1) * it.params.c;
    if (!w.space_axis().covers(anchor) || !w.space_axis().covers(x))
        throw EvaluationError("ruin_bounds: anchor or x outside the tabulated window");
    BoundPair bp;
    bp.t = t;
    bp.x = x;
    bp.w = w(t, x);
    bp.lower = bp.w;
    bp.upper = bp.w + it.params.lambda * (it.params.T - t) * w(t, anchor);
    bp.valid = true;
    bp.scan_dt = w.time_axis().step();
    bp.scan_dx = w.space_axis().step();
    return bp;
}

/// Monte Carlo estimate of the ruin probability u(t, x). Between jumps the
/// probability that the next jump ruins is integrated out and the path
/// continues conditioned on survival, weighted by the survival probability.
inline McEstimate ruin_probability_mc(const RuinParams& rp, double t, double x, const EstimatorSettings& s) {
    rp.validate();
    if (x < 0.0) return McEstimate::exact(1.0, s.n_paths, s.level);
    return replicate(s.n_paths, s, [&](std::size_t i) {
        auto rng = s.rng.stream(i, "ruin-conditional");
        std::exponential_distribution<double> e(rp.lambda);
        double now = t, y = x, weight = 1.0, value = 0.0;
        while (now < rp.T && weight > 0.0) {
            const double rest = rp.T - now;
            const double window = std::clamp((-rp.c - y) / rp.b, 0.0, rest);
            const double p_ruin = -std::expm1(-rp.lambda * window);
            value += weight * p_ruin;
            weight *= 1.0 - p_ruin;
            const double wait = window + e(rng);
            if (wait >= rest) break;
            now += wait;
            y += rp.b * wait + rp.c;
        }
        return value;
    });
}

}  // namespace jdr
