#pragma once

#include <jdr/errors.hpp>
#include <jdr/harness/rng.hpp>
#include <jdr/model.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace jdr {

/// Which law drives the jump component of a simulated path.
enum class JumpLaw {
    Suppressed,  ///< P_0: no jumps at all
    Original,    ///< P_lambda
    Thinned,     ///< candidates at the constant rate bound, rejections kept as zero-sized jumps
};

enum class StopReason {
    BoundaryHit,    ///< continuous exit through the boundary, eta <= T
    JumpOvershoot,  ///< a jump landed strictly outside the closure, eta <= T
    Horizon,        ///< no exit up to T (eta > T)
    JumpLimit,      ///< stopped at the requested jump count inside the closure
};

/// Discount-like weight multiplied into the running integral.
enum class Killing {
    None,
    PathRate,  ///< Lambda_{t,s} = exp(-int lambda(u, X_u) du)
    Constant,  ///< exp(-rate (s - t)) with a fixed rate
};

struct SimulationSettings {
    /// Euler step; zero means 1e-3 * T.
    double step = 0.0;
    /// Brownian-bridge exit check between monitoring times (1-D intervals).
    bool bridge_correction = false;
    /// Relative accuracy of the exit-time bisection on deterministic flows.
    double exit_time_rel_tol = 1e-6;
    bool record_skeleton = false;

    [[nodiscard]] double step_for(double horizon) const { return step > 0.0 ? step : 1e-3 * horizon; }
};

template <int Dim>
struct JumpEvent {
    double time = 0.0;
    Vec<Dim> pre = Vec<Dim>::Zero();
    Vec<Dim> post = Vec<Dim>::Zero();
    bool zero_sized = false;
    double theta_log = 0.0;   ///< int r ds from the start up to this event
    double lambda_log = 0.0;  ///< int lambda ds from the start up to this event
};

template <int Dim>
struct ExitInfo {
    double time = 0.0;
    Vec<Dim> pre = Vec<Dim>::Zero();
    Vec<Dim> post = Vec<Dim>::Zero();
    StopReason cause = StopReason::Horizon;
};

/// Skeleton of one simulated trajectory, stopped at the first of: exit, T,
/// or the requested jump count.
template <int Dim>
struct PathRecord {
    double start_time = 0.0;
    Vec<Dim> start_state = Vec<Dim>::Zero();
    std::vector<double> grid_times;      ///< filled when record_skeleton is set
    std::vector<Vec<Dim>> grid_states;
    std::vector<JumpEvent<Dim>> jumps;   ///< counted jump events, in time order

    StopReason reason = StopReason::Horizon;
    double stop_time = 0.0;
    Vec<Dim> stop_pre = Vec<Dim>::Zero();
    Vec<Dim> stop_post = Vec<Dim>::Zero();
    double theta_log = 0.0;   ///< int_t^stop r ds
    double lambda_log = 0.0;  ///< int_t^stop lambda ds
    /// int_t^stop Theta_{t,s} K_{t,s} f(s, X_s) ds for the configured source f
    /// and killing K (default: f = phi, K = 1).
    double running_integral = 0.0;
    /// Rate-inversion sampling saw a numerically zero rate for the rest of the path.
    bool jump_clock_exhausted = false;

    [[nodiscard]] double theta() const { return std::exp(-theta_log); }
    [[nodiscard]] double lambda_discount() const { return std::exp(-lambda_log); }
    [[nodiscard]] bool exited() const { return reason == StopReason::BoundaryHit || reason == StopReason::JumpOvershoot; }
    [[nodiscard]] std::optional<ExitInfo<Dim>> exit() const {
        if (!exited()) return std::nullopt;
        return ExitInfo<Dim>{stop_time, stop_pre, stop_post, reason};
    }
    [[nodiscard]] int nonzero_jumps() const {
        return static_cast<int>(std::count_if(jumps.begin(), jumps.end(), [](const auto& j) { return !j.zero_sized; }));
    }
};

/// Integrand for the running integral; defaults to the running cost phi.
template <int Dim>
struct PathIntegrand {
    std::function<double(double, const Vec<Dim>&)> source;  ///< empty: use phi
    Killing killing = Killing::None;
    double killing_rate = 0.0;  ///< for Killing::Constant
};

namespace detail {

template <int Dim, int NoiseDim>
Vec<Dim> flow_step(const Problem<Dim, NoiseDim>& p, double s, const Vec<Dim>& x, double dt) {
    if (p.constant_drift) return x + *p.constant_drift * dt;
    const Vec<Dim> k1 = p.drift(s, x);
    const Vec<Dim> k2 = p.drift(s + 0.5 * dt, x + 0.5 * dt * k1);
    const Vec<Dim> k3 = p.drift(s + 0.5 * dt, x + 0.5 * dt * k2);
    const Vec<Dim> k4 = p.drift(s + dt, x + dt * k3);
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Jump clock state for one path.
struct JumpClock {
    JumpLaw law = JumpLaw::Suppressed;
    double bound = 0.0;        ///< candidate rate (bound-based sampling)
    bool inversion = false;    ///< integrated-rate inversion (no bound)
    double next = kInf;        ///< next candidate time (bound-based)
    double target = kInf;      ///< Exp(1) hazard target (inversion)
    double hazard = 0.0;       ///< accumulated hazard since last jump (inversion)
};

}  // namespace detail

/// Simulates one trajectory skeleton from `start` under the chosen jump law.
///
/// `max_jumps` < 0 means unbounded. Jump randomness and diffusion noise come
/// from separate substreams of (streams, id), so switching jumps off leaves
/// the diffusion realization unchanged.
template <int Dim, int NoiseDim>
PathRecord<Dim> simulate_path(const Problem<Dim, NoiseDim>& p, JumpLaw law, const SpaceTimePoint<Dim>& start,
                              int max_jumps, const SimulationSettings& settings, const RngStreamSpec& streams,
                              std::uint64_t id, const PathIntegrand<Dim>& integrand = {}) {
    using State = Vec<Dim>;
    const double T = p.horizon;
    const double h = settings.step_for(T);
    if (!(h > 0.0)) throw ArgumentError("simulate_path: step must be positive");
    if (start.t < 0.0 || start.t > T) throw ArgumentError("simulate_path: start time outside [0,T]");
    if (!p.domain.in_closure(start.x)) throw ArgumentError("simulate_path: start state outside closure(D)");

    auto diffusion_rng = streams.stream(id, "diffusion");
    auto jump_rng = streams.stream(id, "jumps");
    auto bridge_rng = streams.stream(id, "bridge");
    // One distribution per engine: normal_distribution caches a spare draw,
    // and sharing it would leak values between substreams.
    std::normal_distribution<double> normal(0.0, 1.0);
    std::normal_distribution<double> split_normal(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);

    PathRecord<Dim> rec;
    rec.start_time = start.t;
    rec.start_state = start.x;

    detail::JumpClock clock;
    clock.law = law;
    if (law == JumpLaw::Thinned) {
        if (!p.rate_bound) throw ConfigError("thinned simulation requires a rate bound");
        clock.bound = *p.rate_bound;
    } else if (law == JumpLaw::Original) {
        if (p.rate_bound) clock.bound = *p.rate_bound;
        else clock.inversion = true;
    }
    const bool counts_jumps = law != JumpLaw::Suppressed;
    auto schedule = [&](double from) {
        if (!counts_jumps) return;
        if (clock.inversion) {
            clock.target = expo(jump_rng);
            clock.hazard = 0.0;
        } else {
            clock.next = clock.bound > 0.0 ? from + expo(jump_rng) / clock.bound : kInf;
        }
    };
    schedule(start.t);

    const bool has_diffusion = p.has_diffusion();
    const bool use_bridge = settings.bridge_correction && has_diffusion && Dim == 1 && p.domain.is_interval();

    auto source = [&](double s, const State& x) {
        return integrand.source ? integrand.source(s, x) : p.phi(s, x);
    };
    const bool want_integral = static_cast<bool>(integrand.source) || static_cast<bool>(p.running_cost);
    auto killing_log = [&](double s, double lambda_log) {
        switch (integrand.killing) {
            case Killing::None: return 0.0;
            case Killing::PathRate: return lambda_log;
            case Killing::Constant: return integrand.killing_rate * (s - start.t);
        }
        return 0.0;
    };

    double s = start.t;
    State x = start.x;
    double r_now = p.r(s, x);
    double lam_now = p.lambda(s, x);
    double f_now = want_integral ? source(s, x) : 0.0;

    auto finish = [&](StopReason why, double when, const State& pre, const State& post) {
        rec.reason = why;
        rec.stop_time = when;
        rec.stop_pre = pre;
        rec.stop_post = post;
        return rec;
    };
    auto record_grid = [&](double when, const State& at) {
        if (settings.record_skeleton) {
            rec.grid_times.push_back(when);
            rec.grid_states.push_back(at);
        }
    };
    record_grid(s, x);

    if (s >= T) return finish(StopReason::Horizon, T, x, x);

    // A nondegenerate diffusion started on the boundary leaves immediately.
    if (has_diffusion && p.domain.classify(x) == Region::Boundary && p.diffusion(s, x).norm() > 0.0)
        return finish(StopReason::BoundaryHit, s, x, x);

    // Advance the integrals across [s, s_new] by the trapezoid rule.
    auto accumulate = [&](double s_new, const State& x_new) {
        const double dt = s_new - s;
        const double r_new = p.r(s_new, x_new);
        const double lam_new = p.lambda(s_new, x_new);
        const double f_new = want_integral ? source(s_new, x_new) : 0.0;
        const double theta_before = rec.theta_log;
        const double lambda_before = rec.lambda_log;
        rec.theta_log += 0.5 * dt * (r_now + r_new);
        rec.lambda_log += 0.5 * dt * (lam_now + lam_new);
        if (want_integral) {
            const double w0 = std::exp(-theta_before - killing_log(s, lambda_before));
            const double w1 = std::exp(-rec.theta_log - killing_log(s_new, rec.lambda_log));
            rec.running_integral += 0.5 * dt * (w0 * f_now + w1 * f_new);
        }
        if (clock.inversion) clock.hazard += dt * lam_now;
        s = s_new;
        x = x_new;
        r_now = r_new;
        lam_now = lam_new;
        f_now = f_new;
    };

    long step_index = 0;
    const long step_count = std::max(1L, static_cast<long>(std::ceil((T - start.t) / h - 1e-9)));
    Eigen::Matrix<double, NoiseDim, 1> remaining_noise;
    while (true) {
        ++step_index;
        const double step_end = step_index >= step_count ? T : start.t + static_cast<double>(step_index) * h;
        if (has_diffusion) {
            const double full = std::sqrt(step_end - s);
            for (int j = 0; j < NoiseDim; ++j) remaining_noise[j] = full * normal(diffusion_rng);
        }
        while (s < step_end) {
            double seg_end = step_end;
            bool jump_due = false;
            if (counts_jumps) {
                if (clock.inversion) {
                    if (lam_now > 0.0 && clock.hazard + lam_now * (seg_end - s) >= clock.target) {
                        seg_end = std::min(seg_end, s + (clock.target - clock.hazard) / lam_now);
                        jump_due = true;
                    }
                } else if (clock.next <= seg_end) {
                    seg_end = clock.next;
                    jump_due = true;
                }
            }
            const double dt = seg_end - s;
            State x_new = x;
            double sigma_scale = 0.0;
            if (has_diffusion) {
                Eigen::Matrix<double, NoiseDim, 1> dw;
                const double rest = step_end - s;
                if (seg_end >= step_end || rest <= 0.0) {
                    dw = remaining_noise;
                } else {
                    // Brownian bridge split of the remaining increment.
                    const double frac = dt / rest;
                    const double sd = std::sqrt(dt * (1.0 - frac));
                    for (int j = 0; j < NoiseDim; ++j) dw[j] = frac * remaining_noise[j] + sd * split_normal(jump_rng);
                }
                remaining_noise -= dw;
                const auto sigma = p.diffusion(s, x);
                x_new = x + p.b(s, x) * dt + sigma * dw;
                if constexpr (Dim == 1) sigma_scale = sigma.norm();
            } else if (dt > 0.0) {
                x_new = detail::flow_step(p, s, x, dt);
            }
            if (!x_new.allFinite()) throw SimulationFault("non-finite state during simulation", s);

            if (!p.domain.in_closure(x_new)) {
                double frac;
                State hit;
                if (has_diffusion) {
                    frac = p.domain.crossing_fraction(x, x_new);
                    hit = p.domain.boundary_point(x, x_new);
                } else {
                    // Locate the exit time of the flow by bisection.
                    double lo = 0.0, hi = dt;
                    const double tol = settings.exit_time_rel_tol * h;
                    while (hi - lo > tol) {
                        const double mid = 0.5 * (lo + hi);
                        if (p.domain.in_closure(detail::flow_step(p, s, x, mid))) lo = mid;
                        else hi = mid;
                    }
                    frac = dt > 0.0 ? lo / dt : 0.0;
                    const State inside = detail::flow_step(p, s, x, lo);
                    const State outside = detail::flow_step(p, s, x, hi);
                    hit = p.domain.boundary_point(inside, outside);
                }
                const double eta = s + frac * dt;
                accumulate(eta, hit);
                return finish(StopReason::BoundaryHit, eta, hit, hit);
            }
            if (use_bridge && dt > 0.0) {
                if constexpr (Dim == 1) {
                    const double var = sigma_scale * sigma_scale * dt;
                    double survive = 1.0;
                    double nearest = p.domain.lower();
                    const double lo = p.domain.lower(), hi = p.domain.upper();
                    if (std::isfinite(lo) && var > 0.0)
                        survive *= 1.0 - std::exp(-2.0 * (x[0] - lo) * (x_new[0] - lo) / var);
                    if (std::isfinite(hi) && var > 0.0)
                        survive *= 1.0 - std::exp(-2.0 * (hi - x[0]) * (hi - x_new[0]) / var);
                    if (!std::isfinite(lo) || (std::isfinite(hi) && hi - x[0] < x[0] - lo)) nearest = hi;
                    if (bridge_rng.uniform() > survive) {
                        const double eta = s + 0.5 * dt;
                        State hit;
                        hit[0] = nearest;
                        accumulate(eta, hit);
                        return finish(StopReason::BoundaryHit, eta, hit, hit);
                    }
                }
            }
            accumulate(seg_end, x_new);

            if (jump_due) {
                const State pre = x;
                bool accepted = true;
                if (!clock.inversion) {
                    const double lam = lam_now;
                    if (lam > clock.bound * (1.0 + 1e-12))
                        throw DominanceFault("jump rate exceeds rate bound at t=" + std::to_string(s), s, x[0]);
                    accepted = jump_rng.uniform() * clock.bound < lam;
                }
                schedule(s);
                if (accepted || law == JumpLaw::Thinned) {
                    JumpEvent<Dim> ev;
                    ev.time = s;
                    ev.pre = pre;
                    ev.zero_sized = !accepted;
                    ev.post = accepted ? State(pre + p.jump_measure.sample(jump_rng, pre)) : pre;
                    ev.theta_log = rec.theta_log;
                    ev.lambda_log = rec.lambda_log;
                    rec.jumps.push_back(ev);
                    if (!ev.post.allFinite()) throw SimulationFault("non-finite post-jump state", s);
                    if (!p.domain.in_closure(ev.post)) return finish(StopReason::JumpOvershoot, s, pre, ev.post);
                    if (accepted) {
                        x = ev.post;
                        lam_now = p.lambda(s, x);
                        r_now = p.r(s, x);
                        if (want_integral) f_now = source(s, x);
                    }
                    if (max_jumps >= 0 && static_cast<int>(rec.jumps.size()) >= max_jumps)
                        return finish(StopReason::JumpLimit, s, pre, x);
                }
            }
        }
        record_grid(s, x);
        if (s >= T) break;
    }
    if (clock.inversion && lam_now <= 0.0 && rec.jumps.empty()) rec.jump_clock_exhausted = true;
    return finish(StopReason::Horizon, T, x, x);
}

/// Path under P_0 (jump component suppressed).
template <int Dim, int NoiseDim>
PathRecord<Dim> simulate_p0_path(const Problem<Dim, NoiseDim>& p, const SpaceTimePoint<Dim>& start,
                                 const SimulationSettings& settings, const RngStreamSpec& streams,
                                 std::uint64_t id, const PathIntegrand<Dim>& integrand = {}) {
    return simulate_path(p, JumpLaw::Suppressed, start, -1, settings, streams, id, integrand);
}

/// Path under P_lambda, stopped at eta^T or the max_jumps-th jump (< 0: unbounded).
template <int Dim, int NoiseDim>
PathRecord<Dim> simulate_plambda_path(const Problem<Dim, NoiseDim>& p, const SpaceTimePoint<Dim>& start,
                                      int max_jumps, const SimulationSettings& settings,
                                      const RngStreamSpec& streams, std::uint64_t id,
                                      const PathIntegrand<Dim>& integrand = {}) {
    return simulate_path(p, JumpLaw::Original, start, max_jumps, settings, streams, id, integrand);
}

/// Path under the thinned law: candidates at the rate bound, rejections
/// recorded as zero-sized jumps and counted towards max_jumps.
template <int Dim, int NoiseDim>
PathRecord<Dim> simulate_thinned_path(const Problem<Dim, NoiseDim>& p, const SpaceTimePoint<Dim>& start,
                                      int max_jumps, const SimulationSettings& settings,
                                      const RngStreamSpec& streams, std::uint64_t id,
                                      const PathIntegrand<Dim>& integrand = {}) {
    return simulate_path(p, JumpLaw::Thinned, start, max_jumps, settings, streams, id, integrand);
}

}  // namespace jdr
