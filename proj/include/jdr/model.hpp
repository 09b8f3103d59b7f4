#pragma once

#include <jdr/errors.hpp>
#include <jdr/harness/quadrature.hpp>
#include <jdr/harness/rng.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace jdr {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

template <int Dim, int NoiseDim>
using NoiseMatrix = Eigen::Matrix<double, Dim, NoiseDim>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Where a state sits relative to the domain D.
enum class Region { Inside, Boundary, Outside };

/// Open convex domain D with closure membership and a boundary tolerance band.
///
/// For 1-D intervals, Outside is decided by exact interval arithmetic
/// (x < lo or x > hi); Boundary is the part of [lo, hi] within `tol` of a
/// finite endpoint. Higher dimensions use a user predicate.
template <int Dim>
class Domain {
public:
    using State = Vec<Dim>;
    using Classifier = std::function<Region(const State&)>;

    static Domain interval(double lo, double hi, std::optional<double> tol = std::nullopt)
        requires(Dim == 1)
    {
        if (!(lo < hi)) throw ConfigError("interval domain requires lo < hi");
        Domain d;
        d.lo_ = lo;
        d.hi_ = hi;
        const double diameter = (std::isfinite(lo) && std::isfinite(hi)) ? hi - lo : 1.0;
        d.tol_ = tol.value_or(1e-12 * diameter);
        return d;
    }

    static Domain from_predicate(Classifier classify, double diameter = 1.0) {
        Domain d;
        d.classify_ = std::move(classify);
        d.tol_ = 1e-12 * (std::isfinite(diameter) ? diameter : 1.0);
        return d;
    }

    [[nodiscard]] Region classify(const State& x) const {
        if (classify_) return classify_(x);
        if constexpr (Dim == 1) {
            const double v = x[0];
            if (!(v >= lo_ && v <= hi_)) return Region::Outside;
            if (v - lo_ <= tol_ || hi_ - v <= tol_) return Region::Boundary;
            return Region::Inside;
        }
        return Region::Inside;
    }

    [[nodiscard]] bool in_closure(const State& x) const { return classify(x) != Region::Outside; }
    [[nodiscard]] bool is_interval() const noexcept { return !classify_; }
    [[nodiscard]] double lower() const noexcept { return lo_; }
    [[nodiscard]] double upper() const noexcept { return hi_; }
    [[nodiscard]] double tolerance() const noexcept { return tol_; }

    /// Fraction f in [0, 1] such that a + f (b - a) lies on the boundary, for
    /// a in the closure and b outside. Exact for intervals, bisection otherwise.
    [[nodiscard]] double crossing_fraction(const State& a, const State& b) const {
        if constexpr (Dim == 1) {
            if (!classify_) {
                const double target = b[0] < lo_ ? lo_ : hi_;
                const double denom = b[0] - a[0];
                if (denom == 0.0) return 0.0;
                return std::clamp((target - a[0]) / denom, 0.0, 1.0);
            }
        }
        double in = 0.0, out = 1.0;
        for (int it = 0; it < 60 && out - in > 1e-14; ++it) {
            const double mid = 0.5 * (in + out);
            if (in_closure(a + mid * (b - a))) in = mid;
            else out = mid;
        }
        return in;
    }

    /// The boundary point reached by the segment a -> b.
    [[nodiscard]] State boundary_point(const State& a, const State& b) const {
        if constexpr (Dim == 1) {
            if (!classify_) {
                State p;
                p[0] = b[0] < lo_ ? lo_ : hi_;
                return p;
            }
        }
        return a + crossing_fraction(a, b) * (b - a);
    }

private:
    Domain() = default;
    double lo_ = -kInf;
    double hi_ = kInf;
    double tol_ = 1e-12;
    Classifier classify_;
};

/// Split of a jump integral by landing region.
struct RestrictedIntegral {
    double inside = 0.0;   ///< over {z : x + z in closure(D)}
    double outside = 0.0;  ///< over {z : x + z outside closure(D)}
};

enum class JumpKind { PointMass, Gaussian, UserSupplied };

/// State-dependent jump law nu(dz; x), standardized to total mass one.
template <int Dim>
class JumpMeasure {
public:
    using State = Vec<Dim>;
    using Integrand = std::function<double(const State&)>;
    using Sampler = std::function<State(Xoshiro256&, const State&)>;
    using Integrator =
        std::function<RestrictedIntegral(double, const State&, const Integrand&, const Domain<Dim>&)>;

    /// Dirac mass at a fixed jump vector.
    static JumpMeasure point_mass(const State& z) {
        JumpMeasure m;
        m.kind_ = JumpKind::PointMass;
        m.point_ = z;
        return m;
    }

    /// Centred Gaussian jump size with the given variance (1-D only).
    static JumpMeasure gaussian(double variance)
        requires(Dim == 1)
    {
        if (!(variance > 0.0)) throw ConfigError("gaussian jump measure needs positive variance");
        JumpMeasure m;
        m.kind_ = JumpKind::Gaussian;
        m.variance_ = variance;
        return m;
    }

    static JumpMeasure user_supplied(Sampler sampler, Integrator integrator) {
        JumpMeasure m;
        m.kind_ = JumpKind::UserSupplied;
        m.sampler_ = std::move(sampler);
        m.integrator_ = std::move(integrator);
        return m;
    }

    [[nodiscard]] JumpKind kind() const noexcept { return kind_; }
    [[nodiscard]] const State& point() const noexcept { return point_; }
    [[nodiscard]] double variance() const noexcept { return variance_; }

    /// Gaussian integrals are truncated at this many standard deviations.
    static constexpr double kGaussianCutoff = 8.0;

    [[nodiscard]] State sample(Xoshiro256& rng, const State& x) const {
        switch (kind_) {
            case JumpKind::PointMass:
                return point_;
            case JumpKind::Gaussian: {
                std::normal_distribution<double> n(0.0, std::sqrt(variance_));
                State z;
                z[0] = n(rng);
                return z;
            }
            case JumpKind::UserSupplied:
                return sampler_(rng, x);
        }
        return point_;
    }

    /// int f(x + z) nu(dz; x), split by whether x + z lands in the closure.
    [[nodiscard]] RestrictedIntegral integrate(double t, const State& x, const Integrand& f,
                                               const Domain<Dim>& domain, double tol = 1e-10) const {
        RestrictedIntegral out;
        switch (kind_) {
            case JumpKind::PointMass: {
                const State y = x + point_;
                (domain.in_closure(y) ? out.inside : out.outside) = f(y);
                return out;
            }
            case JumpKind::Gaussian: {
                if constexpr (Dim == 1) {
                    const double sd = std::sqrt(variance_);
                    const double cut = kGaussianCutoff * sd;
                    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * variance_);
                    auto g = [&](double z) {
                        State y;
                        y[0] = x[0] + z;
                        return f(y) * norm * std::exp(-0.5 * z * z / variance_);
                    };
                    const double a = std::max(-cut, domain.lower() - x[0]);
                    const double b = std::min(cut, domain.upper() - x[0]);
                    QuadratureOptions opt{tol, 20000, true};
                    if (a < b) out.inside = integrate_1d(g, a, b, opt).value;
                    if (-cut < std::min(a, cut))
                        out.outside += integrate_1d(g, -cut, std::min(a, cut), opt).value;
                    if (std::max(b, -cut) < cut)
                        out.outside += integrate_1d(g, std::max(b, -cut), cut, opt).value;
                }
                return out;
            }
            case JumpKind::UserSupplied:
                return integrator_(t, x, f, domain);
        }
        return out;
    }

private:
    JumpMeasure() = default;
    JumpKind kind_ = JumpKind::PointMass;
    State point_ = State::Zero();
    double variance_ = 0.0;
    Sampler sampler_;
    Integrator integrator_;
};

/// A complete problem instance: coefficients, jump mechanism, domain, payoffs
/// and horizon. Function fields must be pure; instances are shared read-only.
///
/// Empty `diffusion`, `discount_rate` and `running_cost` mean identically zero.
template <int Dim, int NoiseDim = Dim>
struct Problem {
    using State = Vec<Dim>;
    using Noise = NoiseMatrix<Dim, NoiseDim>;
    using ScalarField = std::function<double(double, const State&)>;

    static constexpr int dim = Dim;
    static constexpr int noise_dim = NoiseDim;

    std::string name;
    std::function<State(double, const State&)> drift;
    std::function<Noise(double, const State&)> diffusion;
    ScalarField discount_rate;
    ScalarField jump_rate;
    JumpMeasure<Dim> jump_measure = JumpMeasure<Dim>::point_mass(State::Zero());
    Domain<Dim> domain = Domain<Dim>::from_predicate([](const State&) { return Region::Inside; });
    std::function<double(const State&)> terminal_payoff;
    /// Psi(t, post-jump state, pre-jump state); diffusion exits call Psi(t, x, x).
    std::function<double(double, const State&, const State&)> exit_payoff;
    ScalarField running_cost;
    double horizon = 1.0;
    std::optional<double> rate_bound;

    // Structural facts the numerics may exploit.
    std::optional<State> constant_drift;
    std::optional<double> constant_jump_rate;
    /// Closed-form w_0 when available (built-in examples); estimators use it
    /// instead of nested simulation.
    ScalarField reference_w0;

    [[nodiscard]] bool has_diffusion() const noexcept { return static_cast<bool>(diffusion); }
    [[nodiscard]] double r(double t, const State& x) const { return discount_rate ? discount_rate(t, x) : 0.0; }
    [[nodiscard]] double lambda(double t, const State& x) const { return jump_rate ? jump_rate(t, x) : 0.0; }
    [[nodiscard]] double phi(double t, const State& x) const { return running_cost ? running_cost(t, x) : 0.0; }
    [[nodiscard]] double g(const State& x) const { return terminal_payoff ? terminal_payoff(x) : 0.0; }
    [[nodiscard]] double psi(double t, const State& post, const State& pre) const {
        return exit_payoff ? exit_payoff(t, post, pre) : 0.0;
    }
    [[nodiscard]] State b(double t, const State& x) const {
        return constant_drift ? *constant_drift : drift(t, x);
    }
};

using Problem1D = Problem<1, 1>;

/// A (time, state) pair.
template <int Dim>
struct SpaceTimePoint {
    double t = 0.0;
    Vec<Dim> x = Vec<Dim>::Zero();
};

inline SpaceTimePoint<1> at(double t, double x) {
    SpaceTimePoint<1> p;
    p.t = t;
    p.x[0] = x;
    return p;
}

inline Vec<1> vec1(double x) {
    Vec<1> v;
    v[0] = x;
    return v;
}

struct ValidationReport {
    std::vector<std::string> violations;
    [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
};

/// Sample-based check of the standing assumptions. Never mutates `p`.
template <int Dim, int NoiseDim>
ValidationReport validate_problem(const Problem<Dim, NoiseDim>& p,
                                  const std::vector<SpaceTimePoint<Dim>>& sample_grid,
                                  double mass_tol = 1e-6) {
    if (sample_grid.empty()) throw ArgumentError("validate_problem: empty sample grid");
    ValidationReport report;
    auto where = [](const SpaceTimePoint<Dim>& pt) {
        std::ostringstream os;
        os << "(t=" << pt.t << ", x=" << pt.x.transpose() << ")";
        return os.str();
    };
    if (!(p.horizon > 0.0)) report.violations.push_back("horizon T must be positive");
    if (p.rate_bound && !(*p.rate_bound >= 0.0)) report.violations.push_back("rate bound must be nonnegative");
    if (!p.drift && !p.constant_drift) report.violations.push_back("drift coefficient missing");

    for (const auto& pt : sample_grid) {
        if (!p.domain.in_closure(pt.x)) throw ArgumentError("validate_problem: grid state outside closure(D) at " + where(pt));
        if (pt.t < 0.0 || pt.t > p.horizon) throw ArgumentError("validate_problem: grid time outside [0,T] at " + where(pt));

        const double lam = p.lambda(pt.t, pt.x);
        if (!std::isfinite(lam)) report.violations.push_back("non-finite jump rate at " + where(pt));
        else if (lam < 0.0) report.violations.push_back("negative jump rate " + std::to_string(lam) + " at " + where(pt));
        else if (p.rate_bound && lam > *p.rate_bound)
            report.violations.push_back("jump rate " + std::to_string(lam) + " exceeds rate bound " +
                                        std::to_string(*p.rate_bound) + " at " + where(pt));

        if (!std::isfinite(p.r(pt.t, pt.x)) || p.r(pt.t, pt.x) < 0.0)
            report.violations.push_back("discount rate not finite and nonnegative at " + where(pt));
        if (!p.b(pt.t, pt.x).allFinite()) report.violations.push_back("non-finite drift at " + where(pt));
        if (p.diffusion && !p.diffusion(pt.t, pt.x).allFinite())
            report.violations.push_back("non-finite diffusion at " + where(pt));
        if (!std::isfinite(p.phi(pt.t, pt.x))) report.violations.push_back("non-finite running cost at " + where(pt));
        if (!std::isfinite(p.g(pt.x))) report.violations.push_back("non-finite terminal payoff at " + where(pt));

        try {
            auto mass = p.jump_measure.integrate(pt.t, pt.x, [](const Vec<Dim>&) { return 1.0; }, p.domain);
            if (std::abs(mass.inside + mass.outside - 1.0) > mass_tol)
                report.violations.push_back("jump measure mass " + std::to_string(mass.inside + mass.outside) +
                                            " != 1 at " + where(pt));
        } catch (const ToleranceError&) {
            report.violations.push_back("jump measure mass quadrature failed at " + where(pt));
        }
    }
    return report;
}

/// Uniform (t, x) sample grid over [0, T] x [lo, hi] for 1-D problems.
inline std::vector<SpaceTimePoint<1>> sample_grid_1d(double T, double lo, double hi, int nt, int nx) {
    std::vector<SpaceTimePoint<1>> out;
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < nx; ++j)
            out.push_back(at(nt == 1 ? 0.0 : T * i / (nt - 1), nx == 1 ? lo : lo + (hi - lo) * j / (nx - 1)));
    return out;
}

}  // namespace jdr
