// paramcpd: simulate -> train -> detect -> evaluate -> calibrate, driven by one JSON config.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <CLI11.hpp>

#include "paramcpd/commands.hpp"
#include "paramcpd/errors.hpp"

namespace fs = std::filesystem;
using namespace paramcpd;

namespace {

struct GlobalFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    bool force = false;
    bool quiet = false;
};

ExperimentConfig load(const GlobalFlags& g) {
    ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.jobs) cfg.jobs = *g.jobs;
    cfg.resolve();
    return cfg;
}

std::vector<ParamKind> parse_kinds(const std::vector<std::string>& names) {
    if (names.empty() || (names.size() == 1 && names[0] == "all")) {
        return {kAllParamKinds.begin(), kAllParamKinds.end()};
    }
    std::vector<ParamKind> out;
    for (const auto& n : names) {
        try {
            out.push_back(param_kind_from_string(n));
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    }
    return out;
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
    if (names.empty() || (names.size() == 1 && names[0] == "all")) return {Method::param_cpd, Method::obs_cpd};
    std::vector<Method> out;
    for (const auto& n : names) {
        try {
            out.push_back(method_from_string(n));
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Changepoint detection in the parameter space of Lorenz-63 via neural posterior estimation"};
    app.require_subcommand(1);
    GlobalFlags g;
    app.add_option("--config,-c", g.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Override the master seed");
    app.add_option("--jobs,-j", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--force", g.force, "Overwrite non-empty output directories");
    app.add_flag("--quiet,-q", g.quiet, "Suppress progress messages");

    std::string corpus_type = "all";
    std::vector<std::string> kinds, methods;
    auto* sim = app.add_subcommand("simulate", "Generate changepoint and/or stationary corpora");
    sim->add_option("--type", corpus_type, "changepoint | stationary | all");
    sim->add_option("--kind", kinds, "sigma | rho | beta | all");

    app.add_subcommand("train", "Build the simulated training set and fit the posterior model");

    auto* det = app.add_subcommand("detect", "Run detectors over the changepoint corpora");
    det->add_option("--method", methods, "param_cpd | obs_cpd | all");
    det->add_option("--kind", kinds, "sigma | rho | beta | all");

    std::string results_dir;
    auto* ev = app.add_subcommand("evaluate", "Score detection results");
    ev->add_option("--results", results_dir, "Detection results directory (default: <workdir>/detect)");

    bool perfect = false;
    auto* cal = app.add_subcommand("calibrate", "Posterior-mean calibration on stationary corpora");
    cal->add_flag("--perfect", perfect, "Use the true parameter as the estimate (sanity mode)");

    std::string axis;
    std::vector<double> values;
    auto* sw = app.add_subcommand("sweep", "Sensitivity sweep over delta, w or eta");
    sw->add_option("axis", axis, "delta | w | eta")->required();
    sw->add_option("values", values, "Axis values")->required();

    auto* all = app.add_subcommand("run", "Full pipeline: simulate, train, detect, evaluate, calibrate");

    std::string out_path;
    auto* init = app.add_subcommand("init-config", "Write the default config as JSON");
    init->add_option("output", out_path, "Destination file (stdout if omitted)");

    CLI11_PARSE(app, argc, argv);

    CommandOptions opts{g.force, g.quiet};
    if (init->parsed()) {
        ExperimentConfig cfg;
        cfg.resolve();
        const std::string text = to_json(cfg).dump(2) + "\n";
        if (out_path.empty()) {
            std::cout << text;
        } else {
            if (fs::exists(out_path) && !g.force) throw DataError(out_path + " exists (use --force)");
            std::ofstream(out_path) << text;
        }
        return 0;
    }

    const ExperimentConfig cfg = load(g);
    if (sim->parsed()) {
        cmd_simulate(cfg, corpus_type_from_string(corpus_type), parse_kinds(kinds), opts);
    } else if (app.got_subcommand("train")) {
        cmd_train(cfg, opts);
    } else if (det->parsed()) {
        cmd_detect(cfg, parse_methods(methods), parse_kinds(kinds), opts);
    } else if (ev->parsed()) {
        std::optional<fs::path> dir;
        if (!results_dir.empty()) dir = results_dir;
        const auto rows = cmd_evaluate(cfg, dir, opts);
        std::cout << "wrote " << rows.size() << " rows to " << RunLayout{cfg.workdir}.eval_dir().string() << "\n";
    } else if (cal->parsed()) {
        const auto report = cmd_calibrate(cfg, perfect, opts);
        for (const auto& k : report.kinds) {
            std::cout << to_string(k.kind) << ": slope " << k.fit.slope << " intercept " << k.fit.intercept
                      << " r2 " << k.fit.r2 << " mae " << k.mae << "\n";
        }
    } else if (sw->parsed()) {
        std::cout << cmd_sweep(cfg, sweep_axis_from_string(axis), values, opts).string() << "\n";
    } else if (all->parsed()) {
        cmd_simulate(cfg, CorpusType::all, {kAllParamKinds.begin(), kAllParamKinds.end()}, opts);
        cmd_train(cfg, opts);
        cmd_detect(cfg, {Method::param_cpd, Method::obs_cpd}, {kAllParamKinds.begin(), kAllParamKinds.end()}, opts);
        cmd_evaluate(cfg, std::nullopt, opts);
        cmd_calibrate(cfg, false, opts);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::out_of_range& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
