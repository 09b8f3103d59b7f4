#pragma once

#include <jdr/errors.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <span>
#include <vector>

namespace jdr {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;  ///< achieved absolute error bound
    int intervals = 0;
};

struct QuadratureOptions {
    double abs_tol = 1e-8;
    int max_intervals = 20000;
    /// Throw ToleranceError when the interval budget runs out; otherwise
    /// return the best estimate with its (too large) error bound.
    bool throw_on_failure = true;
};

namespace detail {

// 7-point Gauss / 15-point Kronrod pair (QUADPACK constants).
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
QuadratureResult gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kronrod = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        const double s = f(c - dx) + f(c + dx);
        kronrod += kWgk[j] * s;
        if (j % 2 == 1) gauss += kWg[j / 2] * s;
    }
    QuadratureResult r;
    r.value = kronrod * h;
    r.error = std::abs((kronrod - gauss) * h);
    r.intervals = 1;
    return r;
}

struct Panel {
    double a, b, value, error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of f over [a, b] to an absolute
/// tolerance. Interior breakpoints (kinks, discontinuities) seed the initial
/// partition so that each starting panel is smooth.
template <class F>
QuadratureResult integrate_1d(F&& f, double a, double b, const QuadratureOptions& opt = {},
                              std::span<const double> breakpoints = {}) {
    if (!(a <= b)) throw ArgumentError("integrate_1d: requires a <= b");
    if (a == b) return {};

    std::vector<double> cuts{a};
    for (double p : breakpoints)
        if (p > a && p < b) cuts.push_back(p);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::vector<detail::Panel> panels;
    panels.reserve(cuts.size());
    double total = 0.0;
    double total_err = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        auto r = detail::gk15(f, cuts[i], cuts[i + 1]);
        panels.push_back({cuts[i], cuts[i + 1], r.value, r.error});
        total += r.value;
        total_err += r.error;
    }
    if (total_err <= opt.abs_tol) return {total, total_err, static_cast<int>(panels.size())};

    std::priority_queue<detail::Panel> heap(panels.begin(), panels.end());
    int count = static_cast<int>(heap.size());
    while (total_err > opt.abs_tol && count < opt.max_intervals) {
        auto worst = heap.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) break;  // no more resolution
        heap.pop();
        auto left = detail::gk15(f, worst.a, mid);
        auto right = detail::gk15(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push({worst.a, mid, left.value, left.error});
        heap.push({mid, worst.b, right.value, right.error});
        ++count;
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    total = 0.0;
    total_err = 0.0;
    while (!heap.empty()) {
        total += heap.top().value;
        total_err += heap.top().error;
        heap.pop();
    }
    if (total_err > opt.abs_tol && opt.throw_on_failure)
        throw ToleranceError("integrate_1d: subdivision limit reached", total, total_err);
    return {total, total_err, count};
}

}  // namespace jdr
