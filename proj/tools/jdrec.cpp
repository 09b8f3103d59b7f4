// Command-line front end: jdrec <ruin|survival|generic> [flags].

#include <jdr/experiment.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

namespace {

struct FlagSpec {
    std::string flag;
    std::string key;
    std::string help;
};

const std::vector<FlagSpec> kCommon = {
    {"--seed", "seed", "master RNG seed"},
    {"--n-paths", "n_paths", "Monte Carlo paths per point"},
    {"--step", "step", "Euler step (0 = T/1000)"},
    {"--m", "m", "iteration levels, e.g. 1..5 or 0,2"},
    {"--grid", "grid", "evaluation grid, e.g. \"t=0,0.5;x=0..5:0.1\""},
    {"--t", "t", "evaluation times"},
    {"--x", "x", "evaluation states"},
    {"--lambda-tilde", "lambda_tilde", "thinning rate"},
    {"--scan-dx", "scan_dx", "grid spacing of solver tables and extrema scans"},
    {"--out", "out", "output CSV path, - for stdout"},
    {"--workers", "workers", "worker threads (default JD_WORKERS or 1)"},
    {"--level", "level", "confidence level"},
    {"--T", "T", "horizon"},
};

const std::vector<FlagSpec> kRuin = {
    {"--b", "b", "premium rate"},
    {"--lambda", "lambda", "claim rate"},
    {"--c", "c", "claim size (negative)"},
};

const std::vector<FlagSpec> kSurvival = {
    {"--b", "b", "drift"},
    {"--sigma", "sigma", "volatility"},
    {"--rho", "rho", "jump variance"},
    {"--x-lo", "x_lo", "lower barrier"},
    {"--x-hi", "x_hi", "upper barrier"},
    {"--K", "K", "sine series terms"},
};

const std::vector<FlagSpec> kGeneric = {
    {"--b", "b", "drift"},
    {"--sigma", "sigma", "volatility"},
    {"--lambda", "lambda", "jump rate"},
    {"--rho", "rho", "Gaussian jump variance (0 = point mass at c)"},
    {"--c", "c", "point-mass jump size"},
    {"--x-lo", "x_lo", "lower barrier"},
    {"--x-hi", "x_hi", "upper barrier"},
};

struct Subcommand {
    CLI::App* app = nullptr;
    std::vector<std::pair<CLI::Option*, std::string>> options;  // option, config key
    std::vector<std::string> values;
    std::string config_path;
    bool bounds = false;
    bool bridge = false;
};

void add_flags(Subcommand& sc, const std::vector<FlagSpec>& flags) {
    for (const auto& f : flags) {
        sc.values.emplace_back();
        // values is reserved up front, so the address stays valid.
        auto* opt = sc.app->add_option(f.flag, sc.values.back(), f.help);
        opt->allow_extra_args(false);
        sc.options.emplace_back(opt, f.key);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Picard iterates, Monte Carlo estimates and hard bounds for jump-diffusion exit problems"};
    app.require_subcommand(1);
    std::vector<Subcommand> subs(3);
    const char* names[] = {"ruin", "survival", "generic"};
    const char* descriptions[] = {"finite-time ruin of a compound Poisson risk process",
                                  "survival of a jump diffusion with state-dependent rate",
                                  "survival probability of a constant-coefficient jump diffusion"};
    for (int i = 0; i < 3; ++i) {
        auto& sc = subs[i];
        sc.app = app.add_subcommand(names[i], descriptions[i]);
        sc.values.reserve(32);
        add_flags(sc, kCommon);
        add_flags(sc, i == 0 ? kRuin : i == 1 ? kSurvival : kGeneric);
        sc.app->add_flag("--bounds", sc.bounds, "emit hard bound columns");
        sc.app->add_flag("--bridge", sc.bridge, "Brownian-bridge exit check between monitoring times");
        sc.app->add_option("--config", sc.config_path, "key = value file; flags override it")
            ->check(CLI::ExistingFile);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : jdr::kExitValidation;
    }

    for (int i = 0; i < 3; ++i) {
        auto& sc = subs[i];
        if (!sc.app->parsed()) continue;
        try {
            auto cfg = jdr::ExperimentConfig::defaults_for(names[i]);
            if (!sc.config_path.empty()) {
                std::ifstream is(sc.config_path);
                if (!is) throw jdr::ConfigError("cannot read config file '" + sc.config_path + "'");
                cfg.apply(is);
                cfg.subcommand = names[i];
            }
            for (std::size_t k = 0; k < sc.options.size(); ++k)
                if (sc.options[k].first->count() > 0) cfg.set(sc.options[k].second, sc.values[k]);
            if (sc.bounds) cfg.bounds = true;
            if (sc.bridge) cfg.bridge = true;
            return jdr::run_experiment(cfg, std::cerr);
        } catch (const jdr::ConfigError& e) {
            std::cerr << "configuration error: " << e.what() << '\n';
            return jdr::kExitValidation;
        }
    }
    return jdr::kExitValidation;
}
