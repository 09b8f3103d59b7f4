#pragma once

#include <jdr/errors.hpp>
#include <jdr/grid_function.hpp>
#include <jdr/harness/monte_carlo.hpp>
#include <jdr/model.hpp>
#include <jdr/paths.hpp>
#include <jdr/recursion.hpp>

#include <string>
#include <vector>

namespace jdr {

/// nu~(dz; t, x) = (1 - lambda/lambda~) delta_0 + (lambda/lambda~) nu(dz; x).
template <int Dim, int NoiseDim>
class ThinnedMeasure {
public:
    ThinnedMeasure(const Problem<Dim, NoiseDim>& p, double rate_bound) : p_(p), bound_(rate_bound) {
        if (!(rate_bound > 0.0)) throw ConfigError("thinned measure needs a positive rate bound");
    }

    [[nodiscard]] double rate_bound() const noexcept { return bound_; }
    [[nodiscard]] const JumpMeasure<Dim>& base() const noexcept { return p_.jump_measure; }

    /// Probability of the zero-sized jump at (t, x).
    [[nodiscard]] double mass_at_origin(double t, const Vec<Dim>& x) const { return 1.0 - acceptance(t, x); }

    [[nodiscard]] double acceptance(double t, const Vec<Dim>& x) const {
        const double lam = p_.lambda(t, x);
        if (lam > bound_ * (1.0 + 1e-12))
            throw DominanceFault("jump rate " + std::to_string(lam) + " exceeds thinning bound at t=" +
                                     std::to_string(t),
                                 t, x[0]);
        return lam / bound_;
    }

    /// A draw from nu~: the zero vector on rejection.
    [[nodiscard]] Vec<Dim> sample(Xoshiro256& rng, double t, const Vec<Dim>& x) const {
        if (rng.uniform() >= acceptance(t, x)) return Vec<Dim>::Zero();
        return p_.jump_measure.sample(rng, x);
    }

private:
    const Problem<Dim, NoiseDim>& p_;
    double bound_;
};

template <int Dim, int NoiseDim>
ThinnedMeasure<Dim, NoiseDim> build_thinned_measure(const Problem<Dim, NoiseDim>& p) {
    if (!p.rate_bound) throw ConfigError("thinning requires a rate bound on the problem");
    return ThinnedMeasure<Dim, NoiseDim>(p, *p.rate_bound);
}

/// Copy of `p` whose rate bound is replaced by `rate`.
template <int Dim, int NoiseDim>
Problem<Dim, NoiseDim> with_rate_bound(const Problem<Dim, NoiseDim>& p, double rate) {
    Problem<Dim, NoiseDim> q = p;
    q.rate_bound = rate;
    return q;
}

enum class ThinnedKind { W, V };

/// w~_m or v~_m: thinned paths stopped at eta^T or the m-th candidate jump
/// (zero-sized ones included).
template <int Dim, int NoiseDim>
McEstimate estimate_thinned(const Problem<Dim, NoiseDim>& p, ThinnedKind kind, int m, const SpaceTimePoint<Dim>& pt,
                            const EstimatorSettings& s) {
    if (!p.rate_bound) throw ConfigError("estimate_thinned: rate bound required");
    if (kind == ThinnedKind::W && m == 0) return estimate_w0(p, pt, s);
    if (m < 1) throw ArgumentError("estimate_thinned: m out of range");
    if (pt.t < 0.0 || pt.t > p.horizon) throw ArgumentError("estimate_thinned: time outside [0,T]");
    if (pt.t >= p.horizon) return McEstimate::exact(p.g(pt.x), s.n_paths, s.level);
    detail::W0Oracle<Dim, NoiseDim> w0(p, s);
    return replicate(s.n_paths, s, [&](std::size_t i) {
        auto rec = simulate_thinned_path(p, pt, m, s.sim, s.rng, i);
        return detail::stopped_value(p, rec, [&](double t, const Vec<Dim>& x) {
            return kind == ThinnedKind::W ? w0(t, x, i) : 0.0;
        });
    });
}

/// Thinned two-route estimator: v~_{m-n} plus the carrier paid at the
/// (m-n)-th candidate jump if it precedes eta^T.
template <int Dim, int NoiseDim, class Carrier>
McEstimate thinned_two_routes(const Problem<Dim, NoiseDim>& p, int m, int n, const Carrier& carrier,
                              const SpaceTimePoint<Dim>& pt, const EstimatorSettings& s) {
    if (!p.rate_bound) throw ConfigError("thinned_two_routes: rate bound required");
    if (n < 0 || n > m - 1) throw ArgumentError("thinned_two_routes: need 0 <= n <= m-1");
    if (pt.t >= p.horizon) return McEstimate::exact(p.g(pt.x), s.n_paths, s.level);
    return replicate(s.n_paths, s, [&](std::size_t i) {
        auto rec = simulate_thinned_path(p, pt, m - n, s.sim, s.rng, i);
        return detail::stopped_value(p, rec, [&](double t, const Vec<Dim>& x) { return carrier(t, x); });
    });
}

/// Thinned de-jumped step at chosen points: killing exp(-lambda~ (s-t)) and
/// source G~_{m-1} + H with G~ = (lambda~ - lambda) w + lambda int_in w nu.
template <int NoiseDim>
std::vector<McEstimate> dejump_points_thinned(const Problem<1, NoiseDim>& p, const GridFunction<1>& w_prev,
                                              const std::vector<SpaceTimePoint<1>>& points,
                                              const EstimatorSettings& s) {
    if (!p.rate_bound) throw ConfigError("dejump_step_thinned: rate bound required");
    const double rate = *p.rate_bound;
    SourceOptions so;
    so.workers = s.workers;
    so.thinned_rate = rate;
    const auto src = tabulate_source(p, w_prev, so);
    std::vector<McEstimate> out;
    out.reserve(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        EstimatorSettings sk = s;
        sk.rng = s.rng.child(k, "dejump-thinned-point");
        out.push_back(dejump_estimate(p, src, points[k], sk, Killing::Constant, rate));
    }
    return out;
}

template <int NoiseDim>
GridEstimate<1> dejump_step_thinned(const Problem<1, NoiseDim>& p, const GridFunction<1>& w_prev, const Axis& time,
                                    const Axis& space, const EstimatorSettings& s) {
    GridEstimate<1> out{GridFunction<1>(time, space), GridFunction<1>(time, space)};
    std::vector<SpaceTimePoint<1>> nodes;
    for (std::size_t k = 0; k < out.value.size(); ++k) {
        auto [t, x] = out.value.node(k);
        nodes.push_back({t, x});
    }
    const auto est = dejump_points_thinned(p, w_prev, nodes, s);
    for (std::size_t k = 0; k < est.size(); ++k) {
        out.value.values()[k] = est[k].mean;
        out.std_error.values()[k] = est[k].std_error;
    }
    return out;
}

}  // namespace jdr
