#pragma once

#include <jdr/bounds.hpp>
#include <jdr/errors.hpp>
#include <jdr/grid_function.hpp>
#include <jdr/harness/monte_carlo.hpp>
#include <jdr/harness/quadrature.hpp>
#include <jdr/model.hpp>
#include <jdr/recursion.hpp>

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <vector>

namespace jdr {

/// Drifted Brownian motion on (x_L, x_U) with Gaussian jumps at rate
/// lambda(t,x) = 5 t (T - t) (x_U - x)(x - x_L); u is the survival probability.
struct SurvivalParams {
    double T = 1.0;
    double x_lo = 0.0;
    double x_hi = 2.0;
    double b = 2.0;
    double sigma = 1.0;
    double rho = 0.1;
    int K = 500;
    /// Thinning rate; unset means the sup of lambda over the domain.
    std::optional<double> rate_bound;

    void validate() const {
        if (!(T > 0.0)) throw ConfigError("survival: horizon T must be positive");
        if (!(x_lo < x_hi)) throw ConfigError("survival: need x_L < x_U");
        if (!(sigma > 0.0)) throw ConfigError("survival: sigma must be positive");
        if (!(rho > 0.0)) throw ConfigError("survival: jump variance rho must be positive");
        if (K <= 0) throw ConfigError("survival: series truncation K must be positive");
        if (rate_bound && !(*rate_bound >= lambda_sup() * (1.0 - 1e-12)))
            throw ConfigError("survival: thinning rate below the sup of lambda");
    }
    [[nodiscard]] double width() const { return x_hi - x_lo; }
    [[nodiscard]] double lambda(double t, double x) const { return 5.0 * t * (T - t) * (x_hi - x) * (x - x_lo); }
    /// sup of lambda over [0,T] x [x_L, x_U].
    [[nodiscard]] double lambda_sup() const { return 5.0 / 16.0 * T * T * width() * width(); }
    [[nodiscard]] double lambda_tilde() const { return rate_bound.value_or(lambda_sup()); }
};

struct SeriesGrid {
    double dt = 0.005;
    double dx = 0.005;
};

/// Semi-analytic sine-series solutions: w_0, xi(.;0) and the thinned
/// iterates w~_m, tabulated level by level on a (t, x) grid.
class SurvivalSeries {
public:
    explicit SurvivalSeries(SurvivalParams sp, SeriesGrid grid = {}, unsigned workers = default_workers())
        : p_(sp), workers_(workers) {
        p_.validate();
        time_ = Axis::with_step(0.0, p_.T, grid.dt);
        space_ = Axis::with_step(p_.x_lo, p_.x_hi, grid.dx);
        a_ = p_.b / (p_.sigma * p_.sigma);
        const int K = p_.K;
        omega_.resize(K + 1);
        alpha_.resize(K + 1);
        decay0_.resize(K + 1);
        for (int k = 1; k <= K; ++k) {
            omega_[k] = k * std::numbers::pi / p_.width();
            // Sine coefficients of e^{a y} on [x_L, x_U].
            const double w = omega_[k];
            alpha_[k] = 2.0 / p_.width() * w * (std::exp(a_ * p_.x_lo) - parity(k) * std::exp(a_ * p_.x_hi)) /
                        (a_ * a_ + w * w);
            decay0_[k] = 0.5 * (p_.b * p_.b / (p_.sigma * p_.sigma) + std::pow(w * p_.sigma, 2));
        }
    }

    [[nodiscard]] const SurvivalParams& params() const noexcept { return p_; }
    [[nodiscard]] const Axis& time_axis() const noexcept { return time_; }
    [[nodiscard]] const Axis& space_axis() const noexcept { return space_; }
    [[nodiscard]] double alpha(int k) const { return alpha_.at(k); }

    /// w_0(t, x) = P_0(eta > T).
    [[nodiscard]] double w0(double t, double x) const {
        check(t, x);
        double sum = 0.0;
        for_each_sine(x, [&](int k, double s) { sum += alpha_[k] * s * std::exp(-decay0_[k] * (p_.T - t)); });
        return std::exp(-a_ * x) * sum;
    }

    /// Expected exit time of the drifted Brownian motion with no horizon.
    [[nodiscard]] double h0(double x) const {
        const double b = p_.b, s2 = p_.sigma * p_.sigma, lo = p_.x_lo, hi = p_.x_hi;
        const double el = std::exp(-2.0 * b * (lo - x) / s2), eu = std::exp(-2.0 * b * (hi - x) / s2);
        return ((hi - x) * (el - 1.0) + (lo - x) * (1.0 - eu)) / (b * (el - eu));
    }

    [[nodiscard]] double c(int k) const {
        ensure_c();
        return c_.at(k);
    }

    /// xi(t, x; 0) = E_0[eta^T] - t.
    [[nodiscard]] double xi0(double t, double x) const {
        check(t, x);
        ensure_c();
        double sum = 0.0;
        for_each_sine(x, [&](int k, double s) { sum += c_[k] * s * std::exp(-decay0_[k] * (p_.T - t)); });
        return h0(x) - std::exp(-a_ * x) * sum;
    }

    /// w~_m(t, x) for m >= 0 at an arbitrary point (w~_0 = w_0).
    double w_tilde(int m, double t, double x) {
        check(t, x);
        if (m == 0) return w0(t, x);
        const Level& L = level(m);
        const double lt = p_.lambda_tilde();
        auto [i, frac] = time_.locate(t);
        const double t1 = time_.knot(i + 1 < time_.count ? i + 1 : i);
        const double h = t1 - t;
        double sum = 0.0;
        for_each_sine(x, [&](int k, double s) {
            const double ak = decay0_[k] + lt;
            const double* beta = &L.beta[static_cast<std::size_t>(k) * time_.count];
            const double* I = &L.I[static_cast<std::size_t>(k) * time_.count];
            double Ik;
            if (h <= 0.0) {
                Ik = I[i + (frac > 0.0 ? 1 : 0)];
            } else {
                const double bt = beta[i] + frac * (beta[i + 1] - beta[i]);
                const double slope = (beta[i + 1] - beta[i]) / time_.step();
                Ik = bt * e0(ak, h) + slope * e1(ak, h) + std::exp(-ak * h) * I[i + 1];
            }
            sum += s * Ik;
        });
        return std::exp(-lt * (p_.T - t)) * w0(t, x) + std::exp(-a_ * x) * sum;
    }

    /// Tabulated w~_m on the series grid (m = 0 gives w_0). At t = T the
    /// table holds the terminal data: 1 inside, 0 on the boundary.
    const GridFunction<1>& table(int m) {
        if (m == 0) {
            if (!w0_table_) {
                w0_table_ = std::make_unique<GridFunction<1>>(time_, space_);
                fill_table(*w0_table_, [&](double t, double x) { return w0(t, x); });
            }
            return *w0_table_;
        }
        return level(m).table;
    }

    /// xi(.;0) tabulated on the series grid.
    const GridFunction<1>& xi0_table() {
        if (!xi_table_) {
            xi_table_ = std::make_unique<GridFunction<1>>(time_, space_);
            auto& tab = *xi_table_;
            parallel_for(tab.size(), workers_, [&](std::size_t k) {
                auto [t, x] = tab.node(k);
                tab.values()[k] = xi0(t, x[0]);
            });
        }
        return *xi_table_;
    }

    /// The problem instance with the closed-form w_0 attached.
    [[nodiscard]] Problem1D problem() const;

private:
    struct Level {
        std::vector<double> beta;  ///< [k * nt + i]: beta_{m,k}(t_i)
        std::vector<double> I;     ///< [k * nt + i]: int_{t_i}^T e^{-a_k (s - t_i)} beta_{m,k}(s) ds
        GridFunction<1> table;
    };

    static double parity(int k) { return k % 2 == 0 ? 1.0 : -1.0; }
    static double e0(double a, double h) { return -std::expm1(-a * h) / a; }
    static double e1(double a, double h) {
        const double ah = a * h;
        if (ah < 1e-4) return h * h * (0.5 - ah / 3.0 + ah * ah / 8.0);
        return (-std::expm1(-ah) - ah * std::exp(-ah)) / (a * a);
    }

    void check(double t, double x) const {
        if (t < 0.0 || t > p_.T || x < p_.x_lo || x > p_.x_hi)
            throw ArgumentError("survival series: point outside [0,T] x [x_L, x_U]");
    }

    /// Calls f(k, sin(omega_k (x - x_L))) for k = 1..K via the Chebyshev recurrence.
    template <class F>
    void for_each_sine(double x, F&& f) const {
        const double th = std::numbers::pi * (x - p_.x_lo) / p_.width();
        const double two_cos = 2.0 * std::cos(th);
        double s_prev = 0.0, s_cur = std::sin(th);
        for (int k = 1; k <= p_.K; ++k) {
            f(k, s_cur);
            const double s_next = two_cos * s_cur - s_prev;
            s_prev = s_cur;
            s_cur = s_next;
        }
    }

    template <class F>
    void fill_table(GridFunction<1>& tab, F&& f) const {
        const int last = time_.count - 1;
        parallel_for(tab.size(), workers_, [&](std::size_t k) {
            auto [t, xv] = tab.node(k);
            const double x = xv[0];
            const int it = static_cast<int>(k / space_.count);
            const int ix = static_cast<int>(k % space_.count);
            if (it == last) {
                tab.values()[k] = (ix == 0 || ix == space_.count - 1) ? 0.0 : 1.0;
                return;
            }
            tab.values()[k] = f(t, x);
        });
    }

    void ensure_c() const {
        if (!c_.empty()) return;
        std::vector<double> c(p_.K + 1, 0.0);
        for (int k = 1; k <= p_.K; ++k) {
            auto f = [&](double y) {
                return h0(y) * std::exp(a_ * y) * std::sin(omega_[k] * (y - p_.x_lo));
            };
            // Split at the sine's zeros so each panel holds half a period.
            std::vector<double> cuts;
            for (int j = 1; j < k; ++j) cuts.push_back(p_.x_lo + j * p_.width() / k);
            c[k] = 2.0 / p_.width() * integrate_1d(f, p_.x_lo, p_.x_hi, {1e-13, 200000, true}, cuts).value;
        }
        c_ = std::move(c);
    }

    /// Exact integrals of hat_j(y) sin(omega_k (y - x_L)) times 2/L.
    [[nodiscard]] std::vector<double> sine_hat_weights() const {
        const int K = p_.K, n = space_.count;
        std::vector<double> W(static_cast<std::size_t>(K + 1) * n, 0.0);
        const auto y = space_.knots();
        for (int k = 1; k <= K; ++k) {
            const double w = omega_[k];
            auto F0 = [&](double v) { return -std::cos(w * (v - p_.x_lo)) / w; };
            double* row = &W[static_cast<std::size_t>(k) * n];
            for (int j = 0; j + 1 < n; ++j) {
                const double lo = y[j], hi = y[j + 1], h = hi - lo;
                // F1(v) = int (v - lo) sin(w (v - x_L)) dv
                auto F1 = [&](double v) {
                    return -(v - lo) * std::cos(w * (v - p_.x_lo)) / w + std::sin(w * (v - p_.x_lo)) / (w * w);
                };
                const double i0 = F0(hi) - F0(lo);
                const double i1 = F1(hi) - F1(lo);
                row[j + 1] += i1 / h;
                row[j] += (h * i0 - i1) / h;
            }
            for (int j = 0; j < n; ++j) row[j] *= 2.0 / p_.width();
        }
        return W;
    }

    const Level& level(int m) {
        if (m < 1) throw ArgumentError("survival series: level must be >= 1");
        while (static_cast<int>(levels_.size()) < m) build_next_level();
        return *levels_[m - 1];
    }

    void build_next_level() {
        const int m = static_cast<int>(levels_.size()) + 1;
        const GridFunction<1>& prev = table(m - 1);
        if (sine_weights_.empty()) sine_weights_ = sine_hat_weights();
        const Problem1D prob = problem();
        SourceOptions so;
        so.include_H = false;
        so.thinned_rate = p_.lambda_tilde();
        so.workers = workers_;
        const GridFunction<1> G = tabulate_source(prob, prev, so);

        const int K = p_.K, nt = time_.count, nx = space_.count;
        auto L = std::make_unique<Level>();
        L->beta.assign(static_cast<std::size_t>(K + 1) * nt, 0.0);
        L->I.assign(static_cast<std::size_t>(K + 1) * nt, 0.0);
        const auto y = space_.knots();
        std::vector<double> ea(nx);
        for (int j = 0; j < nx; ++j) ea[j] = std::exp(a_ * y[j]);
        parallel_for(static_cast<std::size_t>(nt), workers_, [&](std::size_t it) {
            std::vector<double> F(nx);
            for (int j = 0; j < nx; ++j) F[j] = ea[j] * G.at(static_cast<int>(it), j);
            for (int k = 1; k <= K; ++k) {
                const double* w = &sine_weights_[static_cast<std::size_t>(k) * nx];
                double acc = 0.0;
                for (int j = 0; j < nx; ++j) acc += w[j] * F[j];
                L->beta[static_cast<std::size_t>(k) * nt + it] = acc;
            }
        });
        const double lt = p_.lambda_tilde(), h = time_.step();
        for (int k = 1; k <= K; ++k) {
            const double ak = decay0_[k] + lt;
            const double E0 = e0(ak, h), E1 = e1(ak, h), decay = std::exp(-ak * h);
            double* beta = &L->beta[static_cast<std::size_t>(k) * nt];
            double* I = &L->I[static_cast<std::size_t>(k) * nt];
            I[nt - 1] = 0.0;
            for (int i = nt - 2; i >= 0; --i)
                I[i] = beta[i] * E0 + (beta[i + 1] - beta[i]) / h * E1 + decay * I[i + 1];
        }
        L->table = GridFunction<1>(time_, space_);
        levels_.push_back(std::move(L));
        Level& cur = *levels_.back();
        const GridFunction<1>& w0tab = table(0);
        fill_table(cur.table, [&](double t, double x) {
            const int i = static_cast<int>(std::lround((t - time_.lo) / time_.step()));
            double sum = 0.0;
            for_each_sine(x, [&](int k, double s) { sum += s * cur.I[static_cast<std::size_t>(k) * nt + i]; });
            return std::exp(-lt * (p_.T - t)) * w0tab(t, x) + std::exp(-a_ * x) * sum;
        });
    }

    SurvivalParams p_;
    unsigned workers_;
    Axis time_, space_;
    double a_ = 0.0;
    std::vector<double> omega_, alpha_, decay0_;
    mutable std::vector<double> c_;
    std::vector<double> sine_weights_;
    std::vector<std::unique_ptr<Level>> levels_;
    std::unique_ptr<GridFunction<1>> w0_table_;
    std::unique_ptr<GridFunction<1>> xi_table_;
};

/// The survival problem; pass a series to attach its closed-form w_0.
inline Problem1D make_survival_problem(const SurvivalParams& sp, const SurvivalSeries* series = nullptr) {
    sp.validate();
    Problem1D p;
    p.name = "survival";
    p.constant_drift = vec1(sp.b);
    p.drift = [b = sp.b](double, const Vec<1>&) { return vec1(b); };
    p.diffusion = [s = sp.sigma](double, const Vec<1>&) { return NoiseMatrix<1, 1>::Constant(s); };
    p.jump_rate = [sp](double t, const Vec<1>& x) { return sp.lambda(t, x[0]); };
    p.rate_bound = sp.lambda_tilde();
    p.jump_measure = JumpMeasure<1>::gaussian(sp.rho);
    p.domain = Domain<1>::interval(sp.x_lo, sp.x_hi);
    p.terminal_payoff = [](const Vec<1>&) { return 1.0; };
    p.horizon = sp.T;
    if (series) p.reference_w0 = [series](double t, const Vec<1>& x) { return series->w0(t, x[0]); };
    return p;
}

inline Problem1D SurvivalSeries::problem() const { return make_survival_problem(p_, this); }

struct SurvivalBoundSet {
    MProfile M;
    FieldProfile N;
    int m = 0;
};

/// Extrema behind the thinned bounds at level m on the series grid.
inline SurvivalBoundSet survival_bound_profiles(SurvivalSeries& series, int m) {
    if (m < 0) throw ArgumentError("survival_bounds: m must be >= 0");
    const Problem1D prob = series.problem();
    SurvivalBoundSet out;
    out.m = m;
    const auto& xi = series.xi0_table();
    out.M = compute_M_extrema(prob, xi, series.time_axis(), series.space_axis());
    NOptions no;
    no.thinned_rate = series.params().lambda_tilde();
    const GridFunction<1>& wm = series.table(m);
    const GridFunction<1>* wprev = m >= 1 ? &series.table(m - 1) : nullptr;
    out.N = compute_N_extrema(prob, m, &wm, wprev, no);
    return out;
}

/// Bracket for u(t, x) around w~_m(t, x).
inline BoundPair survival_bounds(SurvivalSeries& series, const SurvivalBoundSet& set, double t, double x) {
    const double w = set.m == 0 ? series.w0(t, x) : series.w_tilde(set.m, t, x);
    return hard_bounds(t, x, w, set.M, set.N.profile, series.xi0(t, x));
}

}  // namespace jdr
