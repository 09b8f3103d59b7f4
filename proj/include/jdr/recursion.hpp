#pragma once

#include <jdr/errors.hpp>
#include <jdr/grid_function.hpp>
#include <jdr/harness/monte_carlo.hpp>
#include <jdr/harness/quadrature.hpp>
#include <jdr/harness/rng.hpp>
#include <jdr/model.hpp>
#include <jdr/paths.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <vector>

namespace jdr {

template <int Dim>
using ValueFn = std::function<double(double, const Vec<Dim>&)>;

/// Monte Carlo controls shared by all path estimators.
struct EstimatorSettings {
    std::size_t n_paths = 10000;
    SimulationSettings sim;
    RngStreamSpec rng;
    unsigned workers = default_workers();
    double level = 0.99;
    /// Replications per nested w_0 evaluation; zero means ceil(sqrt(n_paths)).
    std::size_t inner_paths = 0;
    /// Cap on n_paths * inner_paths for nested estimation.
    double nested_budget = 1e9;
};

/// Runs `sample(i)` for i < n and aggregates in index order, so the result
/// does not depend on the worker count.
template <class SampleFn>
McEstimate replicate(std::size_t n, const EstimatorSettings& s, SampleFn&& sample) {
    if (n == 0) throw ArgumentError("replication count must be positive");
    std::vector<double> out(n);
    parallel_for(n, s.workers, [&](std::size_t i) { out[i] = sample(i); });
    return mc_aggregate(out, s.level);
}

/// Values of an estimator on every knot of a grid.
template <int Dim>
struct GridEstimate {
    GridFunction<Dim> value;
    GridFunction<Dim> std_error;
};

namespace detail {

/// Theta * payoff at the stopping point minus the running integral. Inside
/// stops at a jump count are paid by `at_jump_limit`; boundary hits pay
/// Psi(eta, X, X) and the horizon pays g.
template <int Dim, int NoiseDim, class AtLimit>
double stopped_value(const Problem<Dim, NoiseDim>& p, const PathRecord<Dim>& rec, AtLimit&& at_jump_limit,
                     double extra_log_weight = 0.0) {
    const double w = std::exp(-rec.theta_log - extra_log_weight);
    double pay = 0.0;
    switch (rec.reason) {
        case StopReason::Horizon: pay = p.g(rec.stop_post); break;
        case StopReason::BoundaryHit: pay = p.psi(rec.stop_time, rec.stop_post, rec.stop_post); break;
        case StopReason::JumpOvershoot: pay = p.psi(rec.stop_time, rec.stop_post, rec.stop_pre); break;
        case StopReason::JumpLimit: pay = at_jump_limit(rec.stop_time, rec.stop_post); break;
    }
    return w * pay - rec.running_integral;
}

template <int Dim>
void check_point(double T, const SpaceTimePoint<Dim>& pt) {
    if (pt.t < 0.0 || pt.t > T) throw ArgumentError("evaluation time outside [0,T]");
}

}  // namespace detail

/// w_0(t, x): expectation under the jump-suppressed law.
template <int Dim, int NoiseDim>
McEstimate estimate_w0(const Problem<Dim, NoiseDim>& p, const SpaceTimePoint<Dim>& pt,
                       const EstimatorSettings& s) {
    if (s.n_paths == 0) throw ArgumentError("estimate_w0: N must be positive");
    detail::check_point(p.horizon, pt);
    if (pt.t >= p.horizon) return McEstimate::exact(p.g(pt.x), s.n_paths, s.level);
    auto sample = [&](std::size_t i) {
        auto rec = simulate_p0_path(p, pt, s.sim, s.rng, i);
        return detail::stopped_value(p, rec, [](double, const Vec<Dim>&) { return 0.0; });
    };
    if (!p.has_diffusion()) return McEstimate::exact(sample(0), s.n_paths, s.level);
    return replicate(s.n_paths, s, sample);
}

namespace detail {

/// w_0 at an interior stopping point: closed form when the problem carries
/// one, a single flow evaluation for degenerate diffusion, nested MC else.
template <int Dim, int NoiseDim>
class W0Oracle {
public:
    W0Oracle(const Problem<Dim, NoiseDim>& p, const EstimatorSettings& s) : p_(p), outer_(s) {
        nested_ = !p.reference_w0 && p.has_diffusion();
        if (nested_) {
            inner_ = s.inner_paths ? s.inner_paths
                                   : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(s.n_paths))));
            if (static_cast<double>(s.n_paths) * static_cast<double>(inner_) > s.nested_budget)
                throw BudgetError("nested w_0 estimation needs " + std::to_string(s.n_paths) + " x " +
                                  std::to_string(inner_) + " paths, above the budget");
        }
    }
    double operator()(double t, const Vec<Dim>& x, std::size_t replication) const {
        if (t >= p_.horizon) return p_.g(x);
        if (p_.reference_w0) return p_.reference_w0(t, x);
        EstimatorSettings inner = outer_;
        inner.n_paths = nested_ ? inner_ : 1;
        inner.workers = 1;
        inner.rng = outer_.rng.child(replication, "inner-w0");
        SpaceTimePoint<Dim> pt{t, x};
        return estimate_w0(p_, pt, inner).mean;
    }

private:
    const Problem<Dim, NoiseDim>& p_;
    EstimatorSettings outer_;
    bool nested_ = false;
    std::size_t inner_ = 0;
};

}  // namespace detail

/// u(t, x) itself: paths under P_lambda with no jump cap.
template <int Dim, int NoiseDim>
McEstimate estimate_u(const Problem<Dim, NoiseDim>& p, const SpaceTimePoint<Dim>& pt, const EstimatorSettings& s) {
    detail::check_point(p.horizon, pt);
    if (pt.t >= p.horizon) return McEstimate::exact(p.g(pt.x), s.n_paths, s.level);
    return replicate(s.n_paths, s, [&](std::size_t i) {
        auto rec = simulate_plambda_path(p, pt, -1, s.sim, s.rng, i);
        return detail::stopped_value(p, rec, [](double, const Vec<Dim>&) { return 0.0; });
    });
}

/// w_m(t, x) from paths stopped at the m-th jump or the capped exit time.
template <int Dim, int NoiseDim>
McEstimate estimate_wm_direct(const Problem<Dim, NoiseDim>& p, int m, const SpaceTimePoint<Dim>& pt,
                              const EstimatorSettings& s) {
    if (m < 1) throw ArgumentError("estimate_wm_direct: m must be >= 1");
    detail::check_point(p.horizon, pt);
    if (pt.t >= p.horizon) return McEstimate::exact(p.g(pt.x), s.n_paths, s.level);
    detail::W0Oracle<Dim, NoiseDim> w0(p, s);
    return replicate(s.n_paths, s, [&](std::size_t i) {
        auto rec = simulate_plambda_path(p, pt, m, s.sim, s.rng, i);
        return detail::stopped_value(p, rec, [&](double t, const Vec<Dim>& x) { return w0(t, x, i); });
    });
}

/// w_m(t, x) by observing the path only up to its n-th jump and handing off
/// to the carrier for w_{m-n}.
template <int Dim, int NoiseDim, class Carrier>
McEstimate estimate_wm_relay(const Problem<Dim, NoiseDim>& p, int m, int n, const Carrier& prev,
                             const SpaceTimePoint<Dim>& pt, const EstimatorSettings& s) {
    if (n < 0 || n > m) throw ArgumentError("estimate_wm_relay: need 0 <= n <= m");
    detail::check_point(p.horizon, pt);
    if (n == 0) return McEstimate::exact(prev(pt.t, pt.x), s.n_paths, s.level);
    if (pt.t >= p.horizon) return McEstimate::exact(p.g(pt.x), s.n_paths, s.level);
    return replicate(s.n_paths, s, [&](std::size_t i) {
        auto rec = simulate_plambda_path(p, pt, n, s.sim, s.rng, i);
        return detail::stopped_value(p, rec, [&](double t, const Vec<Dim>& x) { return prev(t, x); });
    });
}

/// v_m(t, x): like w_m but the w_0 term is paid only when no m-th jump
/// happened before the capped exit time.
template <int Dim, int NoiseDim>
McEstimate estimate_vm(const Problem<Dim, NoiseDim>& p, int m, const SpaceTimePoint<Dim>& pt,
                       const EstimatorSettings& s) {
    if (m < 1) throw ArgumentError("estimate_vm: m must be >= 1");
    detail::check_point(p.horizon, pt);
    if (pt.t >= p.horizon) return McEstimate::exact(p.g(pt.x), s.n_paths, s.level);
    return replicate(s.n_paths, s, [&](std::size_t i) {
        auto rec = simulate_plambda_path(p, pt, m, s.sim, s.rng, i);
        return detail::stopped_value(p, rec, [](double, const Vec<Dim>&) { return 0.0; });
    });
}

enum class TwoRoute {
    VAdvance,  ///< v_{m+1} = v_{m-n} + E[1(tau^(m-n) < eta^T) Theta v_{n+1}(tau^(m-n), X)]
    WFromV,    ///< w_m     = v_{m-n} + E[1(tau^(m-n) < eta^T) Theta w_n(tau^(m-n), X)]
};

/// Shared-path estimator of either two-route identity. The carrier must
/// tabulate v_{n+1} (VAdvance) or w_n (WFromV).
template <int Dim, int NoiseDim, class Carrier>
McEstimate advance_two_routes(const Problem<Dim, NoiseDim>& p, TwoRoute identity, int m, int n,
                              const Carrier& carrier, const SpaceTimePoint<Dim>& pt, const EstimatorSettings& s) {
    (void)identity;  // both identities share the estimator; the carrier differs
    if (n < 0 || n > m - 1) throw ArgumentError("advance_two_routes: need 0 <= n <= m-1");
    detail::check_point(p.horizon, pt);
    if (pt.t >= p.horizon) return McEstimate::exact(p.g(pt.x), s.n_paths, s.level);
    const int k = m - n;
    return replicate(s.n_paths, s, [&](std::size_t i) {
        auto rec = simulate_plambda_path(p, pt, k, s.sim, s.rng, i);
        return detail::stopped_value(p, rec, [&](double t, const Vec<Dim>& x) { return carrier(t, x); });
    });
}

// ---------------------------------------------------------------------------
// Jump source terms
// ---------------------------------------------------------------------------

struct SourceTerms {
    double G = 0.0;
    double H = 0.0;
};

/// G(t,x) = lambda int_{x+z in closure} w_prev(t, x+z) nu(dz; x) and
/// H(t,x) = lambda int_{x+z outside} Psi(t, x+z, x) nu(dz; x).
template <int Dim, int NoiseDim, class Carrier>
SourceTerms evaluate_G_H(const Problem<Dim, NoiseDim>& p, const Carrier& w_prev, double t, const Vec<Dim>& x,
                         double tol = 1e-10) {
    if (!p.domain.in_closure(x)) throw ArgumentError("evaluate_G_H: state outside closure(D)");
    SourceTerms out;
    const double lam = p.lambda(t, x);
    if (lam == 0.0) return out;
    const auto& nu = p.jump_measure;
    if (nu.kind() == JumpKind::PointMass) {
        const Vec<Dim> y = x + nu.point();
        if (p.domain.in_closure(y)) out.G = lam * w_prev(t, y);
        else out.H = lam * p.psi(t, y, x);
        return out;
    }
    out.G = lam * nu.integrate(t, x, [&](const Vec<Dim>& y) { return w_prev(t, y); }, p.domain, tol).inside;
    if (p.exit_payoff)
        out.H = lam * nu.integrate(t, x, [&](const Vec<Dim>& y) { return p.psi(t, y, x); }, p.domain, tol).outside;
    return out;
}

/// Weights W(j, k) = int_{lo}^{hi} hat_k(y) N(y - x_j; 0, variance) dy for the
/// piecewise-linear hat basis on `axis`. A row applied to knot values gives the
/// exact Gaussian integral of the linear interpolant over [lo, hi].
class GaussianHatWeights {
public:
    GaussianHatWeights(const Axis& axis, const std::vector<double>& targets, double variance)
        : n_(axis.count), rows_(targets.size()), w_(rows_ * static_cast<std::size_t>(n_), 0.0) {
        const double sd = std::sqrt(variance);
        const auto knots = axis.knots();
        auto cdf = [&](double z) { return 0.5 * std::erfc(-z / (sd * std::numbers::sqrt2)); };
        auto pdf = [&](double z) { return std::exp(-0.5 * z * z / variance) / (sd * std::sqrt(2.0 * std::numbers::pi)); };
        for (std::size_t j = 0; j < rows_; ++j) {
            const double x = targets[j];
            double* row = &w_[j * n_];
            for (int k = 0; k + 1 < n_; ++k) {
                const double a = knots[k], b = knots[k + 1], h = b - a;
                const double i0 = cdf(b - x) - cdf(a - x);
                const double i1 = variance * (pdf(a - x) - pdf(b - x));  // int (y - x) density
                row[k] += ((b - x) * i0 - i1) / h;
                row[k + 1] += (i1 + (x - a) * i0) / h;
            }
        }
    }
    [[nodiscard]] double apply(std::size_t row, const double* values) const {
        const double* w = &w_[row * n_];
        double acc = 0.0;
        for (int k = 0; k < n_; ++k) acc += w[k] * values[k];
        return acc;
    }
    [[nodiscard]] int columns() const noexcept { return n_; }

private:
    int n_;
    std::size_t rows_;
    std::vector<double> w_;
};

struct SourceOptions {
    bool include_G = true;
    bool include_H = true;
    /// Adds (rate - lambda) * w_prev: the thinned source with this bound.
    std::optional<double> thinned_rate;
    double quad_tol = 1e-10;
    unsigned workers = default_workers();
};

/// Tabulates G (+ H) from w_prev on w_prev's own grid. Gaussian jumps on an
/// interval domain matching the space window use exact hat-basis weights.
template <int NoiseDim>
GridFunction<1> tabulate_source(const Problem<1, NoiseDim>& p, const GridFunction<1>& w_prev,
                                const SourceOptions& opt = {}) {
    GridFunction<1> src(w_prev.time_axis(), w_prev.space_axis());
    const Axis& ta = w_prev.time_axis();
    const Axis& xa = w_prev.space_axis();
    const int nx = xa.count;
    const auto xs = xa.knots();
    const auto& nu = p.jump_measure;
    const bool fast = nu.kind() == JumpKind::Gaussian && p.domain.is_interval() &&
                      std::abs(p.domain.lower() - xa.lo) < 1e-12 && std::abs(p.domain.upper() - xa.hi) < 1e-12;
    std::optional<GaussianHatWeights> weights;
    if (fast && opt.include_G) weights.emplace(xa, xs, nu.variance());

    parallel_for(static_cast<std::size_t>(ta.count), opt.workers, [&](std::size_t it) {
        const double t = ta.knot(static_cast<int>(it));
        const double* prev_row = &w_prev.values()[w_prev.index(static_cast<int>(it), 0)];
        for (int j = 0; j < nx; ++j) {
            const Vec<1> x = vec1(xs[j]);
            const double lam = p.lambda(t, x);
            double v = 0.0;
            if (lam != 0.0) {
                if (fast) {
                    if (opt.include_G) v += lam * weights->apply(static_cast<std::size_t>(j), prev_row);
                    if (opt.include_H && p.exit_payoff)
                        v += evaluate_G_H(p, [](double, const Vec<1>&) { return 0.0; }, t, x, opt.quad_tol).H;
                } else {
                    auto gh = evaluate_G_H(p, w_prev, t, x, opt.quad_tol);
                    if (opt.include_G) v += gh.G;
                    if (opt.include_H) v += gh.H;
                }
            }
            if (opt.thinned_rate) v += (*opt.thinned_rate - lam) * prev_row[j];
            src.at(static_cast<int>(it), j) = v;
        }
    });
    return src;
}

// ---------------------------------------------------------------------------
// De-jumped (Picard) step
// ---------------------------------------------------------------------------

/// One P_0 estimate of
///   E_0[K Theta payoff - int Theta K (phi - S)]
/// with K the configured killing weight and S a tabulated source.
template <int Dim, int NoiseDim, class Source>
McEstimate dejump_estimate(const Problem<Dim, NoiseDim>& p, const Source& source, const SpaceTimePoint<Dim>& pt,
                           const EstimatorSettings& s, Killing killing, double killing_rate = 0.0) {
    detail::check_point(p.horizon, pt);
    if (s.n_paths == 0) throw ArgumentError("dejump_estimate: N must be positive");
    if (pt.t >= p.horizon) return McEstimate::exact(p.g(pt.x), s.n_paths, s.level);
    PathIntegrand<Dim> integrand;
    integrand.source = [&](double t, const Vec<Dim>& x) { return p.phi(t, x) - source(t, x); };
    integrand.killing = killing;
    integrand.killing_rate = killing_rate;
    auto sample = [&](std::size_t i) {
        auto rec = simulate_p0_path(p, pt, s.sim, s.rng, i, integrand);
        double extra = 0.0;
        if (killing == Killing::PathRate) extra = rec.lambda_log;
        else if (killing == Killing::Constant) extra = killing_rate * (rec.stop_time - pt.t);
        return detail::stopped_value(p, rec, [](double, const Vec<Dim>&) { return 0.0; }, extra);
    };
    if (!p.has_diffusion()) return McEstimate::exact(sample(0), s.n_paths, s.level);
    return replicate(s.n_paths, s, sample);
}

/// w_m at chosen points from the de-jump representation with carrier w_{m-1}.
template <int NoiseDim>
std::vector<McEstimate> dejump_points(const Problem<1, NoiseDim>& p, const GridFunction<1>& w_prev,
                                      const std::vector<SpaceTimePoint<1>>& points, const EstimatorSettings& s) {
    SourceOptions so;
    so.workers = s.workers;
    const auto src = tabulate_source(p, w_prev, so);
    std::vector<McEstimate> out;
    out.reserve(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        EstimatorSettings sk = s;
        sk.rng = s.rng.child(k, "dejump-point");
        out.push_back(dejump_estimate(p, src, points[k], sk, Killing::PathRate));
    }
    return out;
}

/// De-jumped step on every knot of (time, space): the tabulated w_m.
template <int NoiseDim>
GridEstimate<1> dejump_step(const Problem<1, NoiseDim>& p, const GridFunction<1>& w_prev, const Axis& time,
                            const Axis& space, const EstimatorSettings& s) {
    std::vector<SpaceTimePoint<1>> nodes;
    GridEstimate<1> out{GridFunction<1>(time, space), GridFunction<1>(time, space)};
    for (std::size_t k = 0; k < out.value.size(); ++k) {
        auto [t, x] = out.value.node(k);
        nodes.push_back({t, x});
    }
    const auto est = dejump_points(p, w_prev, nodes, s);
    for (std::size_t k = 0; k < est.size(); ++k) {
        out.value.values()[k] = est[k].mean;
        out.std_error.values()[k] = est[k].std_error;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Degenerate diffusion: deterministic flow solver
// ---------------------------------------------------------------------------

struct DeterministicOptions {
    double quad_tol = 1e-10;
    unsigned workers = default_workers();
    /// RK4 sub-steps per time cell for non-constant drift.
    int flow_substeps = 8;
};

enum class FlowStepKind {
    W0,        ///< no killing, no jump terms: the w_0 functional
    Full,      ///< killing Lambda, G from the carrier, H, payoffs and phi
    JumpOnly,  ///< killing Lambda, G from the carrier only (the operator J)
};

namespace detail {

/// Backward sweep along characteristics on a (time, space) grid.
template <int NoiseDim>
class FlowSweep {
public:
    using State = Vec<1>;

    FlowSweep(const Problem<1, NoiseDim>& p, const DeterministicOptions& opt) : p_(p), opt_(opt) {
        if (p.has_diffusion()) throw ArgumentError("deterministic solver requires a zero diffusion coefficient");
        constant_rates_ = !p.discount_rate && (p.constant_jump_rate.has_value() || !p.jump_rate);
        rate_ = p.constant_jump_rate.value_or(0.0);
    }

    GridFunction<1> run(FlowStepKind kind, const GridFunction<1>* carrier, const Axis& time, const Axis& space) {
        if (std::abs(time.hi - p_.horizon) > 1e-12) throw ArgumentError("deterministic grid must end at T");
        if (!p_.domain.in_closure(vec1(space.lo)) || !p_.domain.in_closure(vec1(space.hi)))
            throw ArgumentError("deterministic grid window must lie in closure(D)");
        kind_ = kind;
        carrier_ = carrier;
        if (carrier_ && kind_ != FlowStepKind::W0 && p_.jump_measure.kind() != JumpKind::PointMass) {
            SourceOptions so;
            so.include_H = false;
            so.workers = opt_.workers;
            so.quad_tol = opt_.quad_tol;
            tabulated_G_ = tabulate_source(p_, *carrier_, so);
        } else {
            tabulated_G_.reset();
        }
        if (kind_ == FlowStepKind::Full && p_.exit_payoff && p_.jump_measure.kind() != JumpKind::PointMass) {
            GridFunction<1> zero(time, space);
            SourceOptions so;
            so.include_G = false;
            so.workers = opt_.workers;
            so.quad_tol = opt_.quad_tol;
            tabulated_H_ = tabulate_source(p_, zero, so);
        } else {
            tabulated_H_.reset();
        }

        GridFunction<1> out(time, space);
        const int nt = time.count, nx = space.count;
        for (int j = 0; j < nx; ++j) out.at(nt - 1, j) = terminal(space.knot(j));
        for (int i = nt - 2; i >= 0; --i) {
            const double t0 = time.knot(i), t1 = time.knot(i + 1);
            parallel_for(static_cast<std::size_t>(nx), opt_.workers, [&](std::size_t jj) {
                const int j = static_cast<int>(jj);
                out.at(i, j) = node_value(out, time, i, t0, t1, space.knot(j));
            });
        }
        return out;
    }

private:
    double terminal(double x) const { return kind_ == FlowStepKind::JumpOnly ? 0.0 : p_.g(vec1(x)); }
    double exit_pay(double t, const State& y) const {
        return kind_ == FlowStepKind::JumpOnly ? 0.0 : p_.psi(t, y, y);
    }

    State flow(double s0, const State& y0, double s) const {
        if (s <= s0) return y0;
        if (p_.constant_drift) return y0 + *p_.constant_drift * (s - s0);
        const int n = std::max(1, opt_.flow_substeps);
        const double h = (s - s0) / n;
        State y = y0;
        double u = s0;
        for (int k = 0; k < n; ++k, u += h) y = flow_step(p_, u, y, h);
        return y;
    }

    /// -log(Theta Lambda) along the flow over [s0, s]; Lambda omitted for W0.
    double log_weight(double s0, const State& y0, double s) const {
        const bool killing = kind_ != FlowStepKind::W0;
        if (s <= s0) return 0.0;
        if (constant_rates_) return killing ? rate_ * (s - s0) : 0.0;
        auto rate = [&](double u) {
            const State y = flow(s0, y0, u);
            return p_.r(u, y) + (killing ? p_.lambda(u, y) : 0.0);
        };
        return gk15(rate, s0, s).value;
    }

    /// Source density at (s, y): jump terms plus -phi.
    double source(double s, const State& y) const {
        double v = 0.0;
        if (kind_ != FlowStepKind::JumpOnly) v -= p_.phi(s, y);
        if (kind_ == FlowStepKind::W0) return v;
        const auto& nu = p_.jump_measure;
        if (nu.kind() == JumpKind::PointMass) {
            const double lam = p_.lambda(s, y);
            if (lam == 0.0) return v;
            const State landing = y + nu.point();
            if (p_.domain.in_closure(landing)) {
                if (carrier_) v += lam * carrier_at(s, landing);
            } else if (kind_ == FlowStepKind::Full) {
                v += lam * p_.psi(s, landing, y);
            }
            return v;
        }
        if (tabulated_G_) v += along_flow(*tabulated_G_, s, y);
        if (tabulated_H_) v += along_flow(*tabulated_H_, s, y);
        return v;
    }

    /// Tables are read along the characteristics when the drift is constant,
    /// so kinks carried by the flow are not smeared across a cell.
    double along_flow(const GridFunction<1>& f, double s, const State& y) const {
        if (p_.constant_drift) return f.along(s, y[0], (*p_.constant_drift)[0]);
        return f(s, y);
    }
    double carrier_at(double s, const State& y) const { return along_flow(*carrier_, s, y); }

    /// Interior breakpoints in (s0, s1): time knots of the tables and the
    /// times at which a jump would land on a domain edge.
    std::vector<double> breakpoints(double s0, const State& y0, double s1) const {
        std::vector<double> out;
        auto add_time_knots = [&](const Axis& a) {
            for (int k = 0; k < a.count; ++k) {
                const double tk = a.knot(k);
                if (tk > s0 && tk < s1) out.push_back(tk);
            }
        };
        if (carrier_) add_time_knots(carrier_->time_axis());
        if (tabulated_G_) add_time_knots(tabulated_G_->time_axis());
        if (tabulated_H_) add_time_knots(tabulated_H_->time_axis());
        if (!p_.constant_drift) return out;
        const double b = (*p_.constant_drift)[0];
        if (b == 0.0) return out;
        if (kind_ == FlowStepKind::W0) return out;
        const auto& nu = p_.jump_measure;
        if (nu.kind() == JumpKind::PointMass) {
            const double c = nu.point()[0];
            for (double edge : {p_.domain.lower(), p_.domain.upper()}) {
                if (!std::isfinite(edge)) continue;
                const double s = s0 + (edge - y0[0] - c) / b;
                if (s > s0 && s < s1) out.push_back(s);
            }
        }
        return out;
    }

    struct Panel {
        double integral = 0.0;
        double log_weight = 0.0;
        State end;
        bool exited = false;
        double end_time = 0.0;
    };

    Panel panel(double s0, const State& y0, double s1) const {
        Panel pr;
        pr.end_time = s1;
        pr.end = flow(s0, y0, s1);
        if (!p_.domain.in_closure(pr.end)) {
            pr.exited = true;
            if (p_.constant_drift && p_.domain.is_interval()) {
                pr.end_time = s0 + p_.domain.crossing_fraction(y0, pr.end) * (s1 - s0);
            } else {
                double lo = s0, hi = s1;
                while (hi - lo > 1e-13 * std::max(1.0, s1 - s0)) {
                    const double mid = 0.5 * (lo + hi);
                    if (p_.domain.in_closure(flow(s0, y0, mid))) lo = mid;
                    else hi = mid;
                }
                pr.end_time = lo;
            }
            pr.end = p_.domain.boundary_point(flow(s0, y0, pr.end_time), pr.end);
        }
        const auto bps = breakpoints(s0, y0, pr.end_time);
        auto integrand = [&](double s) {
            const State y = flow(s0, y0, s);
            const double src = source(s, y);
            if (src == 0.0) return 0.0;
            return std::exp(-log_weight(s0, y0, s)) * src;
        };
        QuadratureOptions qo{opt_.quad_tol, 20000, true};
        pr.integral = integrate_1d(integrand, s0, pr.end_time, qo, bps).value;
        pr.log_weight = log_weight(s0, y0, pr.end_time);
        return pr;
    }

    double node_value(const GridFunction<1>& out, const Axis& time, int i, double t0, double t1, double x) const {
        State y = vec1(x);
        // One cell, then hand off to the already-computed next layer.
        Panel pr = panel(t0, y, t1);
        if (pr.exited) return pr.integral + std::exp(-pr.log_weight) * exit_pay(pr.end_time, pr.end);
        if (out.space_axis().covers(pr.end[0])) return pr.integral + std::exp(-pr.log_weight) * out(t1, pr.end);
        // Flow leaves the window: integrate forward cell by cell to T.
        double value = pr.integral;
        double logw = pr.log_weight;
        y = pr.end;
        for (int k = i + 1; k + 1 < time.count; ++k) {
            Panel q = panel(time.knot(k), y, time.knot(k + 1));
            value += std::exp(-logw) * q.integral;
            logw += q.log_weight;
            if (q.exited) return value + std::exp(-logw) * exit_pay(q.end_time, q.end);
            y = q.end;
        }
        return value + std::exp(-logw) * terminal(y[0]);
    }

    const Problem<1, NoiseDim>& p_;
    DeterministicOptions opt_;
    bool constant_rates_ = false;
    double rate_ = 0.0;
    FlowStepKind kind_ = FlowStepKind::Full;
    const GridFunction<1>* carrier_ = nullptr;
    std::optional<GridFunction<1>> tabulated_G_;
    std::optional<GridFunction<1>> tabulated_H_;
};

}  // namespace detail

/// w_0 on a grid for a degenerate-diffusion problem (closed form if present).
template <int NoiseDim>
GridFunction<1> deterministic_w0(const Problem<1, NoiseDim>& p, const Axis& time, const Axis& space,
                                 const DeterministicOptions& opt = {}) {
    if (p.reference_w0)
        return GridFunction<1>::tabulate(time, space, [&](double t, const Vec<1>& x) {
            return t >= p.horizon ? p.g(x) : p.reference_w0(t, x);
        });
    detail::FlowSweep<NoiseDim> sweep(p, opt);
    return sweep.run(FlowStepKind::W0, nullptr, time, space);
}

/// One Picard step along the flow: the de-jumped w_m from the carrier w_{m-1}.
template <int NoiseDim>
GridFunction<1> deterministic_step(const Problem<1, NoiseDim>& p, const GridFunction<1>& prev, const Axis& time,
                                   const Axis& space, const DeterministicOptions& opt = {}) {
    detail::FlowSweep<NoiseDim> sweep(p, opt);
    return sweep.run(FlowStepKind::Full, &prev, time, space);
}

/// The jump operator J[f](t,x) = int Theta Lambda lambda int_in f(s, x(s)+z) nu ds,
/// i.e. E[1(tau^(1) < eta^T) Theta f(tau^(1), X)].
template <int NoiseDim>
GridFunction<1> deterministic_jump_operator(const Problem<1, NoiseDim>& p, const GridFunction<1>& f,
                                            const Axis& time, const Axis& space,
                                            const DeterministicOptions& opt = {}) {
    detail::FlowSweep<NoiseDim> sweep(p, opt);
    return sweep.run(FlowStepKind::JumpOnly, &f, time, space);
}

/// w_1 .. w_{m_max} for sigma = 0 on the grid (time, space).
template <int NoiseDim>
std::vector<GridFunction<1>> deterministic_solve(const Problem<1, NoiseDim>& p, int m_max, const Axis& time,
                                                 const Axis& space, const DeterministicOptions& opt = {}) {
    if (m_max < 1) throw ArgumentError("deterministic_solve: m_max must be >= 1");
    std::vector<GridFunction<1>> out;
    GridFunction<1> prev = deterministic_w0(p, time, space, opt);
    for (int m = 1; m <= m_max; ++m) {
        out.push_back(deterministic_step(p, prev, time, space, opt));
        prev = out.back();
    }
    return out;
}

/// v_1 .. v_{m_max} for sigma = 0: v_1 is the step from a zero carrier and
/// v_{m+1} the step from v_m.
template <int NoiseDim>
std::vector<GridFunction<1>> deterministic_v_sequence(const Problem<1, NoiseDim>& p, int m_max, const Axis& time,
                                                      const Axis& space, const DeterministicOptions& opt = {}) {
    if (m_max < 1) throw ArgumentError("deterministic_v_sequence: m_max must be >= 1");
    std::vector<GridFunction<1>> out;
    GridFunction<1> prev(time, space);
    for (int m = 1; m <= m_max; ++m) {
        out.push_back(deterministic_step(p, prev, time, space, opt));
        prev = out.back();
    }
    return out;
}

}  // namespace jdr
