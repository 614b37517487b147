#include "paramcpd/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <string>

#include "paramcpd/errors.hpp"

namespace paramcpd {

using nlohmann::json;

namespace {

// Rejects keys outside `allowed` so typos never silently fall back to defaults.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

Interval read_interval(const json& j, const std::string& where) {
    std::vector<double> v;
    try {
        v = j.get<std::vector<double>>();
    } catch (const json::exception&) {
        throw ConfigError(where + " must be a [lo, hi] pair");
    }
    if (v.size() != 2 || !(v[0] <= v[1])) throw ConfigError(where + " must be a [lo, hi] pair with lo <= hi");
    return {v[0], v[1]};
}

json interval_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

void parse_simulator(const json& j, CorpusConfig& c) {
    const std::string w = "simulator";
    check_keys(j, w, {"dt", "burn_in", "eta", "segments", "segment_length", "stationary_length", "ranges"});
    read(j, "dt", c.dt, w);
    read(j, "burn_in", c.burn_in, w);
    read(j, "eta", c.eta, w);
    read(j, "segments", c.segments, w);
    read(j, "segment_length", c.segment_length, w);
    read(j, "stationary_length", c.stationary_length, w);
    if (j.contains("ranges")) {
        const json& r = j.at("ranges");
        check_keys(r, "simulator.ranges", {"sigma", "rho", "beta"});
        for (ParamKind k : kAllParamKinds) {
            const std::string name(to_string(k));
            if (!r.contains(name)) continue;
            const json& e = r.at(name);
            const std::string where = "simulator.ranges." + name;
            check_keys(e, where, {"low", "high"});
            if (e.contains("low")) c.ranges.low[index_of(k)] = read_interval(e.at("low"), where + ".low");
            if (e.contains("high")) c.ranges.high[index_of(k)] = read_interval(e.at("high"), where + ".high");
        }
    }
}

void parse_dataset(const json& j, TrainingSetConfig& c) {
    const std::string w = "dataset";
    check_keys(j, w, {"n_pairs", "sim_steps", "max_rejection_fraction", "prior"});
    read(j, "n_pairs", c.n_pairs, w);
    read(j, "sim_steps", c.sim_steps, w);
    read(j, "max_rejection_fraction", c.max_rejection_fraction, w);
    if (j.contains("prior")) {
        const json& p = j.at("prior");
        check_keys(p, "dataset.prior", {"sigma", "rho", "beta"});
        for (ParamKind k : kAllParamKinds) {
            const std::string name(to_string(k));
            if (p.contains(name)) c.prior.bounds[index_of(k)] = read_interval(p.at(name), "dataset.prior." + name);
        }
    }
}

void parse_model(const json& j, MdnConfig& m, OptimizerParams& o) {
    const std::string w = "model";
    check_keys(j, w, {"hidden", "components", "activation", "learning_rate", "batch_size", "epochs",
                      "val_fraction"});
    read(j, "hidden", m.hidden, w);
    read(j, "components", m.n_components, w);
    if (j.contains("activation")) {
        std::string a;
        read(j, "activation", a, w);
        m.activation = activation_from_string(a);
    }
    read(j, "learning_rate", o.learning_rate, w);
    read(j, "batch_size", o.batch_size, w);
    read(j, "epochs", o.epochs, w);
    read(j, "val_fraction", o.val_fraction, w);
}

void parse_detection(const json& j, DetectionConfig& d) {
    const std::string w = "detection";
    check_keys(j, w, {"w", "s", "samples", "aggregator", "penalty_scale", "min_size", "gamma",
                      "smoothing_width"});
    read(j, "w", d.w, w);
    read(j, "s", d.s, w);
    read(j, "samples", d.samples, w);
    if (j.contains("aggregator")) {
        std::string a;
        read(j, "aggregator", a, w);
        d.aggregator = aggregator_from_string(a);
    }
    read(j, "penalty_scale", d.detector.penalty_scale, w);
    read(j, "min_size", d.detector.min_size, w);
    if (j.contains("gamma") && !j.at("gamma").is_null()) {
        double g = 0.0;
        read(j, "gamma", g, w);
        d.detector.gamma = g;
    }
    read(j, "smoothing_width", d.smoothing_width, w);
}

void parse_eval(const json& j, EvalSettings& e) {
    const std::string w = "eval";
    check_keys(j, w, {"deltas", "reference_delta", "n_seeds", "n_stationary"});
    read(j, "deltas", e.deltas, w);
    read(j, "reference_delta", e.reference_delta, w);
    read(j, "n_seeds", e.n_seeds, w);
    read(j, "n_stationary", e.n_stationary, w);
}

}  // namespace

void ExperimentConfig::resolve() {
    dataset.w = detection.w;
    dataset.dt = simulator.dt;
    dataset.burn_in = simulator.burn_in;
    dataset.eta = simulator.eta;
    model.input_dim = kChannels * detection.w;
    detection.seed = seed;
    detection.jobs = jobs;

    if (!(simulator.dt > 0.0)) throw ConfigError("simulator.dt must be positive");
    if (simulator.eta < 0.0) throw ConfigError("simulator.eta must be non-negative");
    if (simulator.segments < 1 || simulator.segment_length < 1) {
        throw ConfigError("simulator needs at least one non-empty segment");
    }
    for (std::size_t d = 0; d < 3; ++d) {
        const auto& lo = simulator.ranges.low[d];
        const auto& hi = simulator.ranges.high[d];
        if (!(lo.lo > 0.0) || !(hi.lo > 0.0)) throw ConfigError("regime ranges must be positive");
        if (!dataset.prior[d].contains(lo.lo) || !dataset.prior[d].contains(lo.hi) ||
            !dataset.prior[d].contains(hi.lo) || !dataset.prior[d].contains(hi.hi)) {
            throw ConfigError("training prior must contain every regime range (" +
                              std::string(to_string(static_cast<ParamKind>(d))) + ")");
        }
        const double classic = LorenzParams::classic()[d];
        if (!dataset.prior[d].contains(classic)) {
            throw ConfigError("training prior must contain the classic parameter values");
        }
    }
    dataset.prior.validate();
    for (std::size_t d = 0; d < 3; ++d) {
        if (!(dataset.prior[d].width() > 0.0)) throw ConfigError("training prior must have positive width");
    }
    if (dataset.n_pairs < 1) throw ConfigError("dataset.n_pairs must be positive");
    if (dataset.sim_steps < dataset.w + dataset.burn_in) {
        throw ConfigError("dataset.sim_steps must be at least detection.w + simulator.burn_in");
    }
    model.validate();
    if (optimizer.batch_size < 1 || optimizer.epochs < 1) {
        throw ConfigError("model.batch_size and model.epochs must be positive");
    }
    if (optimizer.val_fraction < 0.0 || optimizer.val_fraction >= 1.0) {
        throw ConfigError("model.val_fraction must lie in [0, 1)");
    }
    detection.validate();
    if (eval.deltas.empty()) throw ConfigError("eval.deltas must not be empty");
    if (!std::is_sorted(eval.deltas.begin(), eval.deltas.end())) {
        throw ConfigError("eval.deltas must be ascending");
    }
    if (eval.n_seeds < 1) throw ConfigError("eval.n_seeds must be positive");
    if (eval.n_stationary < 2) throw ConfigError("eval.n_stationary must be at least 2");
    if (jobs < 1) throw ConfigError("jobs must be positive");
}

ExperimentConfig parse_config(const json& j) {
    check_keys(j, "config", {"seed", "jobs", "simulator", "dataset", "model", "detection", "eval", "paths"});
    ExperimentConfig c;
    read(j, "seed", c.seed, "config");
    read(j, "jobs", c.jobs, "config");
    if (j.contains("simulator")) parse_simulator(j.at("simulator"), c.simulator);
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), c.dataset);
    if (j.contains("model")) parse_model(j.at("model"), c.model, c.optimizer);
    if (j.contains("detection")) parse_detection(j.at("detection"), c.detection);
    if (j.contains("eval")) parse_eval(j.at("eval"), c.eval);
    if (j.contains("paths")) {
        check_keys(j.at("paths"), "paths", {"workdir"});
        std::string wd = c.workdir.string();
        read(j.at("paths"), "workdir", wd, "paths");
        c.workdir = wd;
    }
    c.resolve();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    ExperimentConfig c = parse_config(j);
    // Relative workdirs are resolved against the config file's directory.
    if (c.workdir.is_relative()) c.workdir = path.parent_path() / c.workdir;
    return c;
}

json to_json(const ExperimentConfig& c) {
    json ranges = json::object();
    json prior = json::object();
    for (ParamKind k : kAllParamKinds) {
        const std::size_t d = index_of(k);
        ranges[std::string(to_string(k))] = {{"low", interval_json(c.simulator.ranges.low[d])},
                                             {"high", interval_json(c.simulator.ranges.high[d])}};
        prior[std::string(to_string(k))] = interval_json(c.dataset.prior[d]);
    }
    return {
        {"seed", c.seed},
        {"jobs", c.jobs},
        {"simulator",
         {{"dt", c.simulator.dt},
          {"burn_in", c.simulator.burn_in},
          {"eta", c.simulator.eta},
          {"segments", c.simulator.segments},
          {"segment_length", c.simulator.segment_length},
          {"stationary_length", c.simulator.stationary_length},
          {"ranges", ranges}}},
        {"dataset",
         {{"n_pairs", c.dataset.n_pairs},
          {"sim_steps", c.dataset.sim_steps},
          {"max_rejection_fraction", c.dataset.max_rejection_fraction},
          {"prior", prior}}},
        {"model",
         {{"hidden", c.model.hidden},
          {"components", c.model.n_components},
          {"activation", to_string(c.model.activation)},
          {"learning_rate", c.optimizer.learning_rate},
          {"batch_size", c.optimizer.batch_size},
          {"epochs", c.optimizer.epochs},
          {"val_fraction", c.optimizer.val_fraction}}},
        {"detection",
         {{"w", c.detection.w},
          {"s", c.detection.s},
          {"samples", c.detection.samples},
          {"aggregator", to_string(c.detection.aggregator)},
          {"penalty_scale", c.detection.detector.penalty_scale},
          {"min_size", c.detection.detector.min_size},
          {"gamma", c.detection.detector.gamma ? json(*c.detection.detector.gamma) : json(nullptr)},
          {"smoothing_width", c.detection.smoothing_width}}},
        {"eval",
         {{"deltas", c.eval.deltas},
          {"reference_delta", c.eval.reference_delta},
          {"n_seeds", c.eval.n_seeds},
          {"n_stationary", c.eval.n_stationary}}},
        {"paths", {{"workdir", c.workdir.string()}}},
    };
}

}  // namespace paramcpd
