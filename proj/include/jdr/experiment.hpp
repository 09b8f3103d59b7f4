#pragma once

#include <jdr/bounds.hpp>
#include <jdr/errors.hpp>
#include <jdr/examples/ruin.hpp>
#include <jdr/examples/survival.hpp>
#include <jdr/harness/monte_carlo.hpp>
#include <jdr/model.hpp>
#include <jdr/recursion.hpp>

#include <boost/algorithm/string.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace jdr {

/// Comma-separated list whose items are numbers or ranges "lo..hi" (unit
/// step) and "lo..hi:step". Endpoints are included.
inline std::vector<double> parse_value_list(const std::string& spec) {
    std::vector<std::string> items;
    boost::split(items, spec, boost::is_any_of(","));
    auto number = [&](std::string s) {
        boost::trim(s);
        double v = 0.0;
        const auto* end = s.data() + s.size();
        auto [ptr, ec] = std::from_chars(s.data(), end, v);
        if (s.empty() || ec != std::errc() || ptr != end)
            throw ConfigError("cannot read number '" + s + "' in '" + spec + "'");
        return v;
    };
    std::vector<double> out;
    for (auto item : items) {
        boost::trim(item);
        if (item.empty()) throw ConfigError("empty item in list '" + spec + "'");
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
            out.push_back(number(item));
            continue;
        }
        const std::string rest = item.substr(dots + 2);
        const auto colon = rest.find(':');
        const double lo = number(item.substr(0, dots));
        const double hi = number(rest.substr(0, colon));
        const double step = colon == std::string::npos ? 1.0 : number(rest.substr(colon + 1));
        if (!(step > 0.0) || hi < lo) throw ConfigError("bad range '" + item + "'");
        const long n = std::lround((hi - lo) / step);
        if (std::abs(lo + n * step - hi) > 1e-9 * std::max(1.0, std::abs(hi)))
            throw ConfigError("range '" + item + "' does not end on a step");
        for (long k = 0; k <= n; ++k) out.push_back(k == n ? hi : lo + k * step);
    }
    return out;
}

/// Everything a run needs. Flat key = value text with one key per line.
struct ExperimentConfig {
    std::string subcommand = "ruin";
    // Problem parameters; each subcommand reads the ones it uses.
    double b = 1.0;
    double lambda = 1.0;
    double c = -1.0;
    double T = 1.0;
    double sigma = 1.0;
    double rho = 0.1;
    double x_lo = 0.0;
    double x_hi = 2.0;
    int K = 500;
    std::string m = "1..5";
    std::string t = "0,0.5";
    std::string x = "0..5:0.1";
    std::size_t n_paths = 10000;
    double step = 0.0;
    bool bridge = false;
    std::uint64_t seed = 20240101;
    std::string out = "out.csv";
    bool bounds = false;
    std::optional<double> lambda_tilde;
    double scan_dx = 0.005;
    double level = 0.99;
    unsigned workers = default_workers();

    bool operator==(const ExperimentConfig&) const = default;

    /// Subcommand defaults. The survival problem lives on [0, 2] with b = 2.
    static ExperimentConfig defaults_for(const std::string& sub) {
        ExperimentConfig c;
        c.subcommand = sub;
        if (sub == "survival" || sub == "generic") {
            c.b = 2.0;
            c.m = "0..3";
            c.x = "0..2:0.1";
        }
        if (sub == "generic") {
            c.lambda = 1.0;
            c.n_paths = 1000;
        }
        return c;
    }

    [[nodiscard]] std::vector<int> m_values() const {
        std::vector<int> out;
        for (double v : parse_value_list(m)) {
            if (v != std::floor(v) || v < 0) throw ConfigError("m values must be non-negative integers");
            out.push_back(static_cast<int>(v));
        }
        return out;
    }
    [[nodiscard]] std::vector<double> t_values() const { return parse_value_list(t); }
    [[nodiscard]] std::vector<double> x_values() const { return parse_value_list(x); }

    /// "t=SPEC;x=SPEC", either part optional.
    void set_grid(const std::string& grid) {
        std::vector<std::string> parts;
        boost::split(parts, grid, boost::is_any_of(";"));
        for (auto part : parts) {
            boost::trim(part);
            if (part.empty()) continue;
            const auto eq = part.find('=');
            if (eq == std::string::npos) throw ConfigError("grid part '" + part + "' lacks '='");
            const std::string key = boost::trim_copy(part.substr(0, eq));
            const std::string val = boost::trim_copy(part.substr(eq + 1));
            if (key == "t") t = val;
            else if (key == "x") x = val;
            else throw ConfigError("grid key '" + key + "' is not t or x");
        }
    }

    void set(const std::string& key, const std::string& raw) {
        const std::string v = boost::trim_copy(raw);
        auto num = [&] {
            const auto vals = parse_value_list(v);
            if (vals.size() != 1) throw ConfigError("key '" + key + "' needs a single number");
            return vals[0];
        };
        auto integer = [&] {
            const double d = num();
            if (d != std::floor(d) || d < 0) throw ConfigError("key '" + key + "' needs a non-negative integer");
            return d;
        };
        auto flag = [&] {
            if (v == "true" || v == "1") return true;
            if (v == "false" || v == "0") return false;
            throw ConfigError("key '" + key + "' needs true or false");
        };
        if (key == "subcommand") subcommand = v;
        else if (key == "b") b = num();
        else if (key == "lambda") lambda = num();
        else if (key == "c") c = num();
        else if (key == "T") T = num();
        else if (key == "sigma") sigma = num();
        else if (key == "rho") rho = num();
        else if (key == "x_lo") x_lo = num();
        else if (key == "x_hi") x_hi = num();
        else if (key == "K") K = static_cast<int>(integer());
        else if (key == "m") m = v;
        else if (key == "t") t = v;
        else if (key == "x") x = v;
        else if (key == "grid") set_grid(v);
        else if (key == "n_paths") n_paths = static_cast<std::size_t>(integer());
        else if (key == "step") step = num();
        else if (key == "bridge") bridge = flag();
        else if (key == "seed") {
            std::uint64_t parsed = 0;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
            if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
                throw ConfigError("seed must be an unsigned integer");
            seed = parsed;
        }
        else if (key == "out") out = v;
        else if (key == "bounds") bounds = flag();
        else if (key == "lambda_tilde") lambda_tilde = v.empty() ? std::nullopt : std::optional<double>(num());
        else if (key == "scan_dx") scan_dx = num();
        else if (key == "level") level = num();
        else if (key == "workers") workers = static_cast<unsigned>(integer());
        else throw ConfigError("unknown config key '" + key + "'");
    }

    static ExperimentConfig parse(std::istream& is) {
        ExperimentConfig c;
        c.apply(is);
        return c;
    }
    static ExperimentConfig parse(const std::string& text) {
        std::istringstream is(text);
        return parse(is);
    }

    /// Reads key = value lines on top of the current values. Blank lines and
    /// lines starting with '#' are skipped.
    void apply(std::istream& is) {
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            boost::trim(line);
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + " has no '='");
            set(boost::trim_copy(line.substr(0, eq)), line.substr(eq + 1));
        }
    }

    [[nodiscard]] std::string serialize() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "subcommand = " << subcommand << '\n'
           << "b = " << b << '\n'
           << "lambda = " << lambda << '\n'
           << "c = " << c << '\n'
           << "T = " << T << '\n'
           << "sigma = " << sigma << '\n'
           << "rho = " << rho << '\n'
           << "x_lo = " << x_lo << '\n'
           << "x_hi = " << x_hi << '\n'
           << "K = " << K << '\n'
           << "m = " << m << '\n'
           << "t = " << t << '\n'
           << "x = " << x << '\n'
           << "n_paths = " << n_paths << '\n'
           << "step = " << step << '\n'
           << "bridge = " << (bridge ? "true" : "false") << '\n'
           << "seed = " << seed << '\n'
           << "out = " << out << '\n'
           << "bounds = " << (bounds ? "true" : "false") << '\n'
           << "lambda_tilde = ";
        if (lambda_tilde) os << *lambda_tilde;
        os << '\n'
           << "scan_dx = " << scan_dx << '\n'
           << "level = " << level << '\n'
           << "workers = " << workers << '\n';
        return os.str();
    }

    void validate() const {
        if (subcommand != "ruin" && subcommand != "survival" && subcommand != "generic")
            throw ConfigError("subcommand must be ruin, survival or generic");
        if (n_paths == 0) throw ConfigError("n_paths must be positive");
        if (step < 0.0) throw ConfigError("step must be non-negative");
        if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
        if (!(scan_dx > 0.0)) throw ConfigError("scan_dx must be positive");
        if (!(T > 0.0)) throw ConfigError("T must be positive");
        if (workers == 0) throw ConfigError("workers must be positive");
        if (m_values().empty() || t_values().empty() || x_values().empty())
            throw ConfigError("m, t and x lists must be non-empty");
        for (double tv : t_values())
            if (tv < 0.0 || tv > T) throw ConfigError("evaluation times must lie in [0, T]");
        if (lambda_tilde && subcommand == "ruin" && *lambda_tilde < lambda)
            throw ConfigError("lambda_tilde below the jump rate");
    }
};

/// One CSV row; bound fields are absent when bounds were not requested.
struct ExperimentRow {
    ExperimentRow() = default;
    ExperimentRow(double t_, double x_, int m_, double estimate_ = 0.0, double std_error_ = 0.0)
        : t(t_), x(x_), m(m_), estimate(estimate_), std_error(std_error_) {}

    double t = 0.0;
    double x = 0.0;
    int m = 0;
    double estimate = 0.0;
    double std_error = 0.0;
    std::optional<double> lower;
    std::optional<double> upper;
    std::optional<bool> valid;
};

inline constexpr const char* kCsvHeader = "t,x,m,estimate,stderr,lower,upper,valid";

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw IoError("cannot format value");
    return std::string(buf, ptr);
}

inline void write_experiment_csv(std::ostream& os, const std::vector<ExperimentRow>& rows) {
    os << kCsvHeader << '\n';
    for (const auto& r : rows) {
        os << format_double(r.t) << ',' << format_double(r.x) << ',' << r.m << ',' << format_double(r.estimate)
           << ',' << format_double(r.std_error) << ',';
        if (r.lower) os << format_double(*r.lower);
        os << ',';
        if (r.upper) os << format_double(*r.upper);
        os << ',';
        if (r.valid) os << (*r.valid ? 1 : 0);
        os << '\n';
    }
}

namespace detail {

inline std::vector<ExperimentRow> run_ruin(const ExperimentConfig& cfg) {
    RuinParams rp{cfg.b, cfg.lambda, cfg.c, cfg.T};
    rp.validate();
    const auto ms = cfg.m_values();
    const auto ts = cfg.t_values();
    const auto xs = cfg.x_values();
    const int m_max = std::max(1, *std::max_element(ms.begin(), ms.end()));
    double x_top = *std::max_element(xs.begin(), xs.end());
    if (*std::min_element(xs.begin(), xs.end()) < 0.0) throw ConfigError("ruin: x values must be >= 0");
    if (cfg.bounds) x_top = std::max(x_top, -(m_max - 1) * rp.c);
    // Landing points of the carrier stay below x + bT + c; pad the window so
    // no evaluation is clamped.
    x_top += std::max(0.0, rp.b * rp.T + rp.c) + cfg.scan_dx;
    const Axis time = Axis::with_step(0.0, rp.T, cfg.scan_dx);
    const Axis space = Axis::with_step(0.0, cfg.scan_dx * std::ceil(x_top / cfg.scan_dx), cfg.scan_dx);
    DeterministicOptions opt;
    opt.workers = cfg.workers;
    RuinIterates it{rp, deterministic_solve(make_ruin_problem(rp), m_max, time, space, opt)};
    std::vector<ExperimentRow> rows;
    for (int m : ms)
        for (double t : ts)
            for (double x : xs) {
                ExperimentRow r{t, x, m};
                if (m == 0) {
                    r.estimate = 0.0;
                    if (cfg.bounds) r.valid = false;
                } else {
                    r.estimate = it[m](t, x);
                    if (cfg.bounds) {
                        const auto bp = ruin_bounds(it, m, t, x);
                        r.lower = bp.lower;
                        r.upper = bp.upper;
                        r.valid = bp.valid;
                    }
                }
                rows.push_back(r);
            }
    return rows;
}

inline std::vector<ExperimentRow> run_survival(const ExperimentConfig& cfg) {
    SurvivalParams sp;
    sp.T = cfg.T;
    sp.x_lo = cfg.x_lo;
    sp.x_hi = cfg.x_hi;
    sp.b = cfg.b;
    sp.sigma = cfg.sigma;
    sp.rho = cfg.rho;
    sp.K = cfg.K;
    sp.rate_bound = cfg.lambda_tilde;
    sp.validate();
    const auto ms = cfg.m_values();
    const auto ts = cfg.t_values();
    const auto xs = cfg.x_values();
    for (double x : xs)
        if (x < sp.x_lo || x > sp.x_hi) throw ConfigError("survival: x values must lie in [x_lo, x_hi]");
    SurvivalSeries series(sp, SeriesGrid{cfg.scan_dx, cfg.scan_dx}, cfg.workers);
    std::vector<ExperimentRow> rows;
    for (int m : ms) {
        std::optional<SurvivalBoundSet> set;
        if (cfg.bounds) set = survival_bound_profiles(series, m);
        for (double t : ts)
            for (double x : xs) {
                ExperimentRow r{t, x, m};
                r.estimate = m == 0 ? series.w0(t, x) : series.w_tilde(m, t, x);
                if (set) {
                    const auto bp = survival_bounds(series, *set, t, x);
                    r.lower = bp.lower;
                    r.upper = bp.upper;
                    r.valid = bp.valid;
                }
                rows.push_back(r);
            }
    }
    return rows;
}

/// Survival probability of a constant-coefficient jump diffusion on
/// (x_lo, x_hi): Gaussian jumps of variance rho, or a point mass at c when
/// rho is zero. Degenerate diffusion runs the flow solver, otherwise MC.
inline std::vector<ExperimentRow> run_generic(const ExperimentConfig& cfg) {
    if (cfg.bounds) throw ConfigError("generic: bounds are available for ruin and survival only");
    if (!(cfg.x_lo < cfg.x_hi)) throw ConfigError("generic: need x_lo < x_hi");
    if (cfg.sigma < 0.0 || cfg.rho < 0.0 || cfg.lambda < 0.0)
        throw ConfigError("generic: sigma, rho and lambda must be non-negative");
    Problem1D p;
    p.name = "generic";
    p.constant_drift = vec1(cfg.b);
    p.drift = [b = cfg.b](double, const Vec<1>&) { return vec1(b); };
    if (cfg.sigma > 0.0)
        p.diffusion = [s = cfg.sigma](double, const Vec<1>&) { return NoiseMatrix<1, 1>::Constant(s); };
    p.jump_rate = [lam = cfg.lambda](double, const Vec<1>&) { return lam; };
    p.constant_jump_rate = cfg.lambda;
    p.rate_bound = cfg.lambda_tilde.value_or(cfg.lambda);
    p.jump_measure = cfg.rho > 0.0 ? JumpMeasure<1>::gaussian(cfg.rho) : JumpMeasure<1>::point_mass(vec1(cfg.c));
    p.domain = Domain<1>::interval(cfg.x_lo, cfg.x_hi);
    p.terminal_payoff = [](const Vec<1>&) { return 1.0; };
    p.horizon = cfg.T;
    const auto report = validate_problem(p, sample_grid_1d(cfg.T, cfg.x_lo, cfg.x_hi, 5, 5));
    if (!report.ok()) throw ConfigError("generic: " + report.violations.front());
    const auto ms = cfg.m_values();
    const auto ts = cfg.t_values();
    const auto xs = cfg.x_values();
    std::vector<ExperimentRow> rows;
    if (cfg.sigma == 0.0) {
        const int m_max = std::max(1, *std::max_element(ms.begin(), ms.end()));
        const Axis time = Axis::with_step(0.0, cfg.T, cfg.scan_dx);
        const Axis space = Axis::with_step(cfg.x_lo, cfg.x_hi, cfg.scan_dx);
        DeterministicOptions opt;
        opt.workers = cfg.workers;
        const auto w0 = deterministic_w0(p, time, space, opt);
        const auto ws = deterministic_solve(p, m_max, time, space, opt);
        for (int m : ms)
            for (double t : ts)
                for (double x : xs) rows.emplace_back(t, x, m, m == 0 ? w0(t, x) : ws[m - 1](t, x));
        return rows;
    }
    EstimatorSettings s;
    s.n_paths = cfg.n_paths;
    s.sim.step = cfg.step;
    s.sim.bridge_correction = cfg.bridge;
    s.workers = cfg.workers;
    s.level = cfg.level;
    std::size_t point = 0;
    for (int m : ms)
        for (double t : ts)
            for (double x : xs) {
                s.rng = RngStreamSpec{cfg.seed}.child(point++, "experiment-point");
                const SpaceTimePoint<1> pt{t, vec1(x)};
                const auto est = m == 0 ? estimate_w0(p, pt, s) : estimate_wm_direct(p, m, pt, s);
                rows.emplace_back(t, x, m, est.mean, est.std_error);
            }
    return rows;
}

}  // namespace detail

/// Computes the rows of a run; throws on any failure.
inline std::vector<ExperimentRow> experiment_rows(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.subcommand == "ruin") return detail::run_ruin(cfg);
    if (cfg.subcommand == "survival") return detail::run_survival(cfg);
    return detail::run_generic(cfg);
}

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitNumerical = 3, kExitIo = 4 };

/// Runs the experiment and writes the CSV to cfg.out ("-" for stdout).
/// Returns 0 on success, 2 on bad configuration, 3 on a numerical fault and
/// 4 when the output cannot be written; the reason goes to `log`.
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
    try {
        const auto rows = experiment_rows(cfg);
        if (cfg.out == "-") {
            write_experiment_csv(std::cout, rows);
            return kExitOk;
        }
        std::ofstream os(cfg.out, std::ios::binary);
        if (!os) throw IoError("cannot open output file '" + cfg.out + "'");
        write_experiment_csv(os, rows);
        os.flush();
        if (!os) throw IoError("failed writing '" + cfg.out + "'");
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "configuration error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ArgumentError& e) {
        log << "configuration error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const IoError& e) {
        log << "output error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        log << "numerical fault: " << e.what() << '\n';
        return kExitNumerical;
    }
}

}  // namespace jdr
