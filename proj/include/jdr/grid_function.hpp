#pragma once

#include <jdr/errors.hpp>
#include <jdr/model.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace jdr {

/// Uniform knots lo, lo + h, ..., hi.
struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    int count = 2;

    Axis() = default;
    Axis(double lo_, double hi_, int count_) : lo(lo_), hi(hi_), count(count_) {
        if (count < 1 || (count > 1 && !(hi > lo)) || (count == 1 && hi != lo))
            throw ArgumentError("Axis: need count >= 2 and hi > lo (or a single knot)");
    }
    /// Axis with spacing as close as possible to `step`, hitting both ends.
    static Axis with_step(double lo, double hi, double step) {
        const int n = std::max(1, static_cast<int>(std::lround((hi - lo) / step)));
        return Axis(lo, hi, n + 1);
    }

    [[nodiscard]] double step() const noexcept { return count > 1 ? (hi - lo) / (count - 1) : 0.0; }
    [[nodiscard]] double knot(int i) const noexcept {
        if (i == count - 1) return hi;
        return lo + (hi - lo) * static_cast<double>(i) / (count - 1);
    }
    [[nodiscard]] std::vector<double> knots() const {
        std::vector<double> k(count);
        for (int i = 0; i < count; ++i) k[i] = knot(i);
        return k;
    }
    [[nodiscard]] bool covers(double v) const noexcept { return v >= lo && v <= hi; }

    /// Cell index and local coordinate in [0, 1]; v must already be in range.
    [[nodiscard]] std::pair<int, double> locate(double v) const noexcept {
        if (count == 1) return {0, 0.0};
        const double s = (v - lo) / step();
        int i = static_cast<int>(std::floor(s));
        i = std::clamp(i, 0, count - 2);
        double w = s - i;
        // Snap rounding noise so knots evaluate to stored values exactly.
        if (std::abs(w) < 1e-12) w = 0.0;
        if (std::abs(w - 1.0) < 1e-12) w = 1.0;
        return {i, std::clamp(w, 0.0, 1.0)};
    }
};

enum class OutOfWindow { Clamp, Constant, Error };

/// Tabulated function of (t, x) on a uniform tensor grid with multilinear
/// interpolation. The carrier handed from one iteration step to the next.
template <int Dim>
class GridFunction {
public:
    using State = Vec<Dim>;

    GridFunction() = default;
    GridFunction(Axis time, std::array<Axis, Dim> space)
        : time_(time), space_(space) {
        std::size_t n = static_cast<std::size_t>(time_.count);
        for (const auto& a : space_) n *= static_cast<std::size_t>(a.count);
        values_.assign(n, 0.0);
    }
    GridFunction(Axis time, Axis space)
        requires(Dim == 1)
        : GridFunction(time, std::array<Axis, 1>{space}) {}

    /// Tabulates f at every knot.
    template <class F>
    static GridFunction tabulate(Axis time, std::array<Axis, Dim> space, F&& f) {
        GridFunction g(time, space);
        g.fill(f);
        return g;
    }
    template <class F>
    static GridFunction tabulate(Axis time, Axis space, F&& f)
        requires(Dim == 1)
    {
        return tabulate(time, std::array<Axis, 1>{space}, std::forward<F>(f));
    }

    template <class F>
    void fill(F&& f) {
        for (std::size_t k = 0; k < values_.size(); ++k) {
            auto [t, x] = node(k);
            values_[k] = f(t, x);
        }
    }

    [[nodiscard]] const Axis& time_axis() const noexcept { return time_; }
    [[nodiscard]] const Axis& space_axis(int d = 0) const noexcept { return space_[d]; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::size_t space_size() const noexcept { return values_.size() / time_.count; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] std::vector<double>& values() noexcept { return values_; }

    void set_policy(OutOfWindow policy, double constant = 0.0) {
        policy_ = policy;
        constant_ = constant;
    }
    [[nodiscard]] OutOfWindow policy() const noexcept { return policy_; }

    /// Flat index of knot (i_t, i_x...).
    [[nodiscard]] std::size_t index(int it, const std::array<int, Dim>& ix) const noexcept {
        std::size_t k = static_cast<std::size_t>(it);
        for (int d = 0; d < Dim; ++d) k = k * space_[d].count + ix[d];
        return k;
    }
    [[nodiscard]] std::size_t index(int it, int ix) const noexcept
        requires(Dim == 1)
    {
        return static_cast<std::size_t>(it) * space_[0].count + ix;
    }
    [[nodiscard]] double at(int it, int ix) const
        requires(Dim == 1)
    {
        return values_[index(it, ix)];
    }
    double& at(int it, int ix)
        requires(Dim == 1)
    {
        return values_[index(it, ix)];
    }

    /// (t, x) of the flat knot index k.
    [[nodiscard]] std::pair<double, State> node(std::size_t k) const {
        State x;
        for (int d = Dim - 1; d >= 0; --d) {
            const int c = space_[d].count;
            x[d] = space_[d].knot(static_cast<int>(k % c));
            k /= c;
        }
        return {time_.knot(static_cast<int>(k)), x};
    }

    [[nodiscard]] bool in_window(double t, const State& x) const noexcept {
        if (!time_.covers(t)) return false;
        for (int d = 0; d < Dim; ++d)
            if (!space_[d].covers(x[d])) return false;
        return true;
    }

    /// Multilinear interpolation. Outside the window the policy applies:
    /// clamp to the nearest knot, return the constant, or throw.
    [[nodiscard]] double operator()(double t, const State& x) const {
        if (!in_window(t, x)) {
            if (policy_ == OutOfWindow::Constant) return constant_;
            if (policy_ == OutOfWindow::Error) {
                std::ostringstream os;
                os << "GridFunction: (t=" << t << ", x=" << x.transpose() << ") outside window";
                throw EvaluationError(os.str());
            }
        }
        const auto [it, wt] = time_.locate(std::clamp(t, time_.lo, time_.hi));
        std::array<int, Dim> ix{};
        std::array<double, Dim> wx{};
        for (int d = 0; d < Dim; ++d) {
            auto [i, w] = space_[d].locate(std::clamp(x[d], space_[d].lo, space_[d].hi));
            ix[d] = i;
            wx[d] = w;
        }
        double result = 0.0;
        const int corners = 1 << (Dim + 1);
        for (int c = 0; c < corners; ++c) {
            double weight = 1.0;
            int jt = it;
            if (c & 1) {
                weight *= wt;
                jt = std::min(it + 1, time_.count - 1);
            } else {
                weight *= 1.0 - wt;
            }
            if (weight == 0.0) continue;
            std::array<int, Dim> jx{};
            for (int d = 0; d < Dim; ++d) {
                if (c & (2 << d)) {
                    weight *= wx[d];
                    jx[d] = std::min(ix[d] + 1, space_[d].count - 1);
                } else {
                    weight *= 1.0 - wx[d];
                    jx[d] = ix[d];
                }
            }
            if (weight == 0.0) continue;
            result += weight * values_[index(jt, jx)];
        }
        return result;
    }
    [[nodiscard]] double operator()(double t, double x) const
        requires(Dim == 1)
    {
        return (*this)(t, vec1(x));
    }

    /// Interpolation along the line of the given slope through (t, x): linear
    /// in x on the two enclosing time layers, then linear in t. Functions whose
    /// kinks follow lines of that slope keep them sharp.
    [[nodiscard]] double along(double t, double x, double slope) const
        requires(Dim == 1)
    {
        if (!time_.covers(t)) return (*this)(t, x);
        auto [i, w] = time_.locate(t);
        if (time_.count == 1) return (*this)(t, x);
        const double t0 = time_.knot(i), t1 = time_.knot(i + 1);
        const double v0 = w < 1.0 ? (*this)(t0, vec1(x - slope * (t - t0))) : 0.0;
        const double v1 = w > 0.0 ? (*this)(t1, vec1(x + slope * (t1 - t))) : 0.0;
        return (1.0 - w) * v0 + w * v1;
    }

    /// CSV with columns t, x0 (, x1 ...), value.
    void write_csv(std::ostream& os, const std::string& value_name = "value") const {
        os << "t";
        for (int d = 0; d < Dim; ++d) os << (Dim == 1 ? ",x" : ",x" + std::to_string(d));
        os << ',' << value_name << '\n';
        os << std::setprecision(17);
        for (std::size_t k = 0; k < values_.size(); ++k) {
            auto [t, x] = node(k);
            os << t;
            for (int d = 0; d < Dim; ++d) os << ',' << x[d];
            os << ',' << values_[k] << '\n';
        }
    }

private:
    Axis time_;
    std::array<Axis, Dim> space_{};
    std::vector<double> values_;
    OutOfWindow policy_ = OutOfWindow::Clamp;
    double constant_ = 0.0;
};

using GridFunction1D = GridFunction<1>;

}  // namespace jdr
