#pragma once

#include <jdr/errors.hpp>
#include <jdr/grid_function.hpp>
#include <jdr/harness/monte_carlo.hpp>
#include <jdr/model.hpp>
#include <jdr/paths.hpp>
#include <jdr/recursion.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

namespace jdr {

/// Running extrema of a field over [t, T] x window, from a grid scan.
///
/// upper(t) = max over scan nodes with time >= t of max(field, 0);
/// lower(t) = min over the same nodes of min(field, 0). A finite scan sees
/// only sampled values, so both can fall short of the true essential extrema
/// by the variation of the field within one scan cell.
class ExtremaProfile {
public:
    ExtremaProfile() = default;

    static ExtremaProfile from_field(const GridFunction<1>& field) {
        ExtremaProfile pr;
        pr.time_ = field.time_axis();
        pr.dx_ = field.space_axis().step();
        const int nt = pr.time_.count, nx = field.space_axis().count;
        pr.upper_.assign(nt, 0.0);
        pr.lower_.assign(nt, 0.0);
        double hi = 0.0, lo = 0.0;
        for (int i = nt - 1; i >= 0; --i) {
            for (int j = 0; j < nx; ++j) {
                hi = std::max(hi, field.at(i, j));
                lo = std::min(lo, field.at(i, j));
            }
            pr.upper_[i] = hi;
            pr.lower_[i] = lo;
        }
        return pr;
    }

    /// Profile values at t: the knot at or before t, whose scan set contains [t, T].
    [[nodiscard]] double upper(double t) const { return upper_[slot(t)]; }
    [[nodiscard]] double lower(double t) const { return lower_[slot(t)]; }
    [[nodiscard]] const Axis& time_axis() const noexcept { return time_; }
    [[nodiscard]] const std::vector<double>& upper_values() const noexcept { return upper_; }
    [[nodiscard]] const std::vector<double>& lower_values() const noexcept { return lower_; }
    /// Scan spacing (dt, dx) behind the extrema.
    [[nodiscard]] std::pair<double, double> resolution() const noexcept { return {time_.step(), dx_}; }

private:
    [[nodiscard]] int slot(double t) const {
        if (upper_.empty()) throw ArgumentError("ExtremaProfile: empty profile");
        if (t <= time_.lo) return 0;
        if (t >= time_.hi) return time_.count - 1;
        const double s = (t - time_.lo) / time_.step();
        int i = static_cast<int>(std::floor(s + 1e-9));
        return std::clamp(i, 0, time_.count - 1);
    }

    Axis time_;
    double dx_ = 0.0;
    std::vector<double> upper_;
    std::vector<double> lower_;
};

struct FieldProfile {
    GridFunction<1> field;
    ExtremaProfile profile;
};

struct MProfile {
    GridFunction<1> field;
    ExtremaProfile profile;
    /// M^U(0) < 1, the precondition of the bounds.
    bool valid = false;
};

struct BoundPair {
    double t = 0.0;
    double x = 0.0;
    double w = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool valid = false;
    /// Scan spacing behind the extrema; the bounds are hard only up to the
    /// field variation within one scan cell.
    double scan_dt = 0.0;
    double scan_dx = 0.0;
};

enum class RateMode { Lambda, Zero };

/// xi(t, x; lambda) or xi(t, x; 0): the expected discounted time to the capped exit.
template <int Dim, int NoiseDim>
McEstimate estimate_xi(const Problem<Dim, NoiseDim>& p, RateMode mode, const SpaceTimePoint<Dim>& pt,
                       const EstimatorSettings& s) {
    if (s.n_paths == 0) throw ArgumentError("estimate_xi: N must be positive");
    if (pt.t < 0.0 || pt.t > p.horizon) throw ArgumentError("estimate_xi: time outside [0,T]");
    if (pt.t >= p.horizon) return McEstimate::exact(0.0, s.n_paths, s.level);
    PathIntegrand<Dim> one;
    one.source = [](double, const Vec<Dim>&) { return 1.0; };
    auto sample = [&](std::size_t i) {
        auto rec = mode == RateMode::Zero ? simulate_p0_path(p, pt, s.sim, s.rng, i, one)
                                          : simulate_plambda_path(p, pt, -1, s.sim, s.rng, i, one);
        return rec.running_integral;
    };
    if (mode == RateMode::Zero && !p.has_diffusion()) return McEstimate::exact(sample(0), s.n_paths, s.level);
    return replicate(s.n_paths, s, sample);
}

/// M(t,x) = lambda [int_{x+z outside} xi(t, x+z; 0) nu(dz) - xi(t, x; 0)] on the
/// scan grid. xi(.;0) vanishes outside closure(D) (a P_0 path started there
/// exits at once), so the jump integral is zero.
template <int NoiseDim, class Xi>
MProfile compute_M_extrema(const Problem<1, NoiseDim>& p, const Xi& xi0, const Axis& time, const Axis& space) {
    MProfile out;
    out.field = GridFunction<1>::tabulate(time, space, [&](double t, const Vec<1>& x) {
        const double lam = p.lambda(t, x);
        if (lam == 0.0) return 0.0;
        const double outside_part = 0.0;
        return lam * (outside_part - xi0(t, x));
    });
    out.profile = ExtremaProfile::from_field(out.field);
    out.valid = out.profile.upper(time.lo) < 1.0;
    return out;
}

struct NOptions {
    /// Thinned variant: G~ = (rate - lambda) w + lambda int_in w nu.
    std::optional<double> thinned_rate;
    unsigned workers = default_workers();
};

/// N_m on the scan grid: N_0 = G_0 - lambda w_0 + H, N_m = G_m - G_{m-1}.
/// Both iterates must be tabulated on the scan grid.
template <int NoiseDim>
FieldProfile compute_N_extrema(const Problem<1, NoiseDim>& p, int m, const GridFunction<1>* w_m,
                               const GridFunction<1>* w_prev, const NOptions& opt = {}) {
    if (m < 0) throw ArgumentError("compute_N_extrema: m must be >= 0");
    if (!w_m || (m >= 1 && !w_prev)) throw ArgumentError("compute_N_extrema: missing iterate");
    SourceOptions so;
    so.workers = opt.workers;
    so.thinned_rate = opt.thinned_rate;
    FieldProfile out;
    if (m == 0) {
        so.include_H = true;
        out.field = tabulate_source(p, *w_m, so);
        auto& v = out.field.values();
        for (std::size_t k = 0; k < v.size(); ++k) {
            auto [t, x] = out.field.node(k);
            const double rate = opt.thinned_rate.value_or(p.lambda(t, x));
            v[k] -= rate * w_m->values()[k];
        }
    } else {
        if (w_m->time_axis().count != w_prev->time_axis().count ||
            w_m->space_axis().count != w_prev->space_axis().count)
            throw ArgumentError("compute_N_extrema: iterates must share the scan grid");
        so.include_H = false;
        out.field = tabulate_source(p, *w_m, so);
        const auto g_prev = tabulate_source(p, *w_prev, so);
        for (std::size_t k = 0; k < out.field.size(); ++k) out.field.values()[k] -= g_prev.values()[k];
    }
    out.profile = ExtremaProfile::from_field(out.field);
    return out;
}

/// lower = w + N^L/(1 - M^L) xi0, upper = w + N^U/(1 - M^U) xi0.
inline BoundPair hard_bounds(double t, double x, double w_m, const MProfile& M, const ExtremaProfile& N,
                             double xi0) {
    BoundPair b;
    b.t = t;
    b.x = x;
    b.w = w_m;
    b.valid = M.valid;
    std::tie(b.scan_dt, b.scan_dx) = N.resolution();
    if (!b.valid) {
        b.lower = -kInf;
        b.upper = kInf;
        return b;
    }
    b.lower = w_m + N.lower(t) / (1.0 - M.profile.lower(t)) * xi0;
    b.upper = w_m + N.upper(t) / (1.0 - M.profile.upper(t)) * xi0;
    return b;
}

/// CSV rows t,x,m,w_m,lower,upper,valid.
inline void write_bounds_csv(std::ostream& os, int m, const std::vector<BoundPair>& rows, bool header = true) {
    if (header) os << "t,x,m,w_m,lower,upper,valid\n";
    const auto old = os.precision(12);
    for (const auto& b : rows)
        os << b.t << ',' << b.x << ',' << m << ',' << b.w << ',' << b.lower << ',' << b.upper << ','
           << (b.valid ? 1 : 0) << '\n';
    os.precision(old);
}

}  // namespace jdr
