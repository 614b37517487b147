#include "paramcpd/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "paramcpd/errors.hpp"
#include "paramcpd/random.hpp"

namespace paramcpd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream ids for derive_seed so every stage draws from its own generator.
enum SeedStream : std::uint64_t {
    kChangepointCorpus = 11,
    kStationaryCorpus = 12,
    kTrainingData = 21,
    kTraining = 22,
    kDetection = 31,
    kCalibration = 41,
};

void info(const CommandOptions& opts, const std::string& msg) {
    if (!opts.quiet) std::clog << "[paramcpd] " << msg << std::endl;
}

void prepare_output_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) {
            throw DataError("output directory " + dir.string() +
                            " exists and is not empty (use --force to overwrite)");
        }
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << text;
}

void write_json_file(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_resolved_config(const fs::path& dir, const ExperimentConfig& config) {
    write_json_file(dir / "resolved_config.json", to_json(config));
}

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string seq_stem(std::size_t i) {
    std::ostringstream s;
    s << "seq_" << std::setw(3) << std::setfill('0') << i;
    return s.str();
}

std::uint64_t detection_seed(const ExperimentConfig& c, ParamKind k, std::size_t seq) {
    return derive_seed(derive_seed(c.seed, kDetection), index_of(k) * 100000 + seq);
}

void simulate_changepoint(const ExperimentConfig& config, const RunLayout& layout, ParamKind kind,
                          const CommandOptions& opts) {
    const fs::path dir = layout.changepoint_corpus(kind);
    prepare_output_dir(dir, opts.force);
    info(opts, "simulating " + std::to_string(config.eval.n_seeds) + " changepoint sequences (" +
                   std::string(to_string(kind)) + ")");
    const auto corpus = build_changepoint_corpus(kind, config.eval.n_seeds,
                                                 derive_seed(config.seed, kChangepointCorpus),
                                                 config.simulator, config.jobs);
    save_changepoint_corpus(corpus, kind, dir);
}

// Runs the requested detectors over one parameter kind's corpus.
void detect_corpus(const ExperimentConfig& config, const PosteriorModel* model,
                   const RunLayout& corpus_layout, const RunLayout& out_layout, Method method,
                   ParamKind kind, const CommandOptions& opts) {
    const auto corpus = load_changepoint_corpus(corpus_layout.changepoint_corpus(kind));
    const fs::path dir = out_layout.detect_dir(method, kind);
    prepare_output_dir(dir, opts.force);
    info(opts, "detecting with " + std::string(to_string(method)) + " on " +
                   std::to_string(corpus.size()) + " " + std::string(to_string(kind)) + " sequences");
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        DetectionConfig dc = config.detection;
        dc.varying = kind;
        dc.seed = detection_seed(config, kind, i);
        DetectionResult r = method == Method::param_cpd
                                ? detect_param_cpd(corpus[i].trajectory, *model, dc)
                                : detect_obs_cpd(corpus[i].trajectory, dc);
        write_json_file(dir / (seq_stem(i) + ".json"),
                        detection_to_json(r, corpus[i].changepoints, kind, i));
        if (r.trajectory) write_param_trajectory_csv(*r.trajectory, dir / (seq_stem(i) + "_trajectory.csv"));
    }
}

struct LoadedResult {
    Method method;
    ParamKind kind;
    std::size_t seq;
    std::vector<std::size_t> predicted;
    std::vector<std::size_t> truth;
    std::size_t T;
};

std::vector<LoadedResult> load_results(const fs::path& root) {
    std::vector<LoadedResult> out;
    if (!fs::is_directory(root)) throw DataError("results directory " + root.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().extension() == ".json" &&
            e.path().filename().string().rfind("seq_", 0) == 0) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const json j = read_json_file(f);
        try {
            out.push_back({method_from_string(j.at("method").get<std::string>()),
                           param_kind_from_string(j.at("param_kind").get<std::string>()),
                           j.at("sequence").get<std::size_t>(),
                           j.at("predicted").get<std::vector<std::size_t>>(),
                           j.at("ground_truth").get<std::vector<std::size_t>>(),
                           j.at("series_length").get<std::size_t>()});
        } catch (const json::exception& e) {
            throw DataError(f.string() + ": " + e.what());
        } catch (const ConfigError& e) {
            throw DataError(f.string() + ": " + e.what());
        }
    }
    if (out.empty()) throw DataError("no detection results found under " + root.string());
    std::sort(out.begin(), out.end(), [](const LoadedResult& a, const LoadedResult& b) {
        return std::tuple(a.method, a.kind, a.seq) < std::tuple(b.method, b.kind, b.seq);
    });
    return out;
}

std::vector<EvalRow> evaluate_results(const std::vector<LoadedResult>& results,
                                      const std::vector<std::size_t>& deltas) {
    std::vector<EvalRow> rows;
    for (const auto& r : results) {
        for (const auto& point : f1_delta_curve(r.predicted, r.truth, r.T, deltas)) {
            rows.push_back({r.method, r.kind, r.seq, point.delta, point.metrics});
        }
    }
    return rows;
}

const char* kLongHeader = "axis,value,method,param_kind,seed,f1,precision,recall,mae,fp_per_1000\n";

void append_long_rows(std::ostringstream& csv, const std::string& axis, const std::string& value,
                      const std::vector<EvalRow>& rows, std::optional<std::size_t> only_delta) {
    for (const auto& r : rows) {
        if (only_delta && r.delta != *only_delta) continue;
        csv << axis << ',' << value << ',' << to_string(r.method) << ',' << to_string(r.kind) << ','
            << r.seed << ',' << fmt(r.metrics.f1) << ',' << fmt(r.metrics.precision) << ','
            << fmt(r.metrics.recall) << ',' << fmt(r.metrics.mae_steps) << ','
            << fmt(r.metrics.fp_per_1000) << '\n';
    }
}

std::vector<std::size_t> eval_deltas(const ExperimentConfig& c) {
    std::vector<std::size_t> d = c.eval.deltas;
    if (std::find(d.begin(), d.end(), c.eval.reference_delta) == d.end()) {
        d.push_back(c.eval.reference_delta);
        std::sort(d.begin(), d.end());
    }
    return d;
}

}  // namespace

CorpusType corpus_type_from_string(const std::string& name) {
    if (name == "changepoint") return CorpusType::changepoint;
    if (name == "stationary") return CorpusType::stationary;
    if (name == "all") return CorpusType::all;
    throw ConfigError("unknown corpus type '" + name + "'");
}

SweepAxis sweep_axis_from_string(const std::string& name) {
    if (name == "delta") return SweepAxis::delta;
    if (name == "w") return SweepAxis::w;
    if (name == "eta") return SweepAxis::eta;
    throw ConfigError("unknown sweep axis '" + name + "' (expected delta, w or eta)");
}

json metrics_to_json(const MetricBundle& m) {
    return {{"precision", m.precision}, {"recall", m.recall},   {"f1", m.f1},
            {"mae_steps", num_or_null(m.mae_steps)}, {"fp_per_1000", m.fp_per_1000},
            {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"T", m.T}};
}

json detection_to_json(const DetectionResult& r, const std::vector<std::size_t>& truth,
                       ParamKind kind, std::size_t seq) {
    const auto& c = r.config;
    return {
        {"method", to_string(r.method)},
        {"param_kind", to_string(kind)},
        {"sequence", seq},
        {"series_length", r.series_length},
        {"predicted", r.predicted},
        {"ground_truth", truth},
        {"segmentation",
         {{"breakpoints", r.segmentation.breakpoints},
          {"penalty", r.segmentation.penalty},
          {"gamma", r.segmentation.gamma},
          {"min_size", r.segmentation.min_size},
          {"total_cost", r.segmentation.total_cost}}},
        {"config",
         {{"w", c.w},
          {"s", c.s},
          {"samples", c.samples},
          {"aggregator", to_string(c.aggregator)},
          {"varying_dim", to_string(c.varying)},
          {"penalty_scale", c.detector.penalty_scale},
          {"min_size", c.detector.min_size},
          {"gamma", c.detector.gamma ? json(*c.detector.gamma) : json(nullptr)},
          {"smoothing_width", c.smoothing_width},
          {"seed", c.seed}}},
        {"param_trajectory_rows", r.trajectory ? json(r.trajectory->size()) : json(nullptr)},
    };
}

void cmd_simulate(const ExperimentConfig& config, CorpusType type,
                  const std::vector<ParamKind>& kinds, const CommandOptions& opts) {
    const RunLayout layout{config.workdir};
    for (ParamKind kind : kinds) {
        if (type != CorpusType::stationary) simulate_changepoint(config, layout, kind, opts);
        if (type != CorpusType::changepoint) {
            const fs::path dir = layout.stationary_corpus(kind);
            prepare_output_dir(dir, opts.force);
            info(opts, "simulating " + std::to_string(config.eval.n_stationary) +
                           " stationary trajectories (" + std::string(to_string(kind)) + ")");
            const auto corpus = build_stationary_corpus(kind, config.eval.n_stationary,
                                                        derive_seed(config.seed, kStationaryCorpus),
                                                        config.simulator, config.jobs);
            save_stationary_corpus(corpus, kind, dir);
        }
    }
    write_resolved_config(layout.root / "corpus", config);
}

PosteriorModel cmd_train(const ExperimentConfig& config, const CommandOptions& opts) {
    const RunLayout layout{config.workdir};
    prepare_output_dir(layout.model_dir(), opts.force);
    info(opts, "building training set of " + std::to_string(config.dataset.n_pairs) + " pairs");
    const TrainingSet set =
        build_training_set(config.dataset, derive_seed(config.seed, kTrainingData), config.jobs);
    info(opts, "training (" + std::to_string(set.rejected) + " divergent draws resampled)");
    std::ostringstream log_csv;
    log_csv << "epoch,train_nll,val_nll\n";
    const PosteriorModel model =
        train(set, config.model, config.optimizer, derive_seed(config.seed, kTraining), nullptr,
              [&](const EpochRecord& r) {
                  log_csv << r.epoch << ',' << fmt(r.train_nll) << ',' << fmt(r.val_nll) << '\n';
                  info(opts, "epoch " + std::to_string(r.epoch) + " train " + fmt(r.train_nll) +
                                 " val " + fmt(r.val_nll));
              });
    save_checkpoint(model, layout.checkpoint());
    write_text(layout.model_dir() / "train_log.csv", log_csv.str());
    const auto& meta = model.meta();
    write_json_file(layout.model_dir() / "training_summary.json",
                    {{"n_pairs", set.size()},
                     {"rejected_draws", set.rejected},
                     {"epochs", meta.epochs},
                     {"best_epoch", meta.best_epoch},
                     {"initial_val_nll", meta.initial_val_nll},
                     {"best_val_nll", meta.best_val_nll},
                     {"final_train_nll", meta.final_train_nll},
                     {"norm_mean", set.stats.mean},
                     {"norm_std", set.stats.std}});
    write_resolved_config(layout.model_dir(), config);
    return model;
}

void cmd_detect(const ExperimentConfig& config, const std::vector<Method>& methods,
                const std::vector<ParamKind>& kinds, const CommandOptions& opts) {
    const RunLayout layout{config.workdir};
    std::optional<PosteriorModel> model;
    if (std::find(methods.begin(), methods.end(), Method::param_cpd) != methods.end()) {
        model = load_checkpoint(layout.checkpoint());
    }
    for (Method m : methods) {
        for (ParamKind k : kinds) {
            detect_corpus(config, model ? &*model : nullptr, layout, layout, m, k, opts);
        }
    }
    fs::create_directories(layout.detect_dir());
    write_resolved_config(layout.detect_dir(), config);
}

std::vector<EvalRow> cmd_evaluate(const ExperimentConfig& config,
                                  const std::optional<fs::path>& results_dir,
                                  const CommandOptions& opts) {
    const RunLayout layout{config.workdir};
    const auto results = load_results(results_dir ? *results_dir : layout.detect_dir());
    const auto deltas = eval_deltas(config);
    const auto rows = evaluate_results(results, deltas);
    const std::size_t ref = config.eval.reference_delta;

    const fs::path dir = layout.eval_dir();
    prepare_output_dir(dir, opts.force);

    std::ostringstream per_seed, delta_csv, summary, delta_summary;
    per_seed << "method,param_kind,seed,f1,precision,recall,mae,fp_per_1000,tp,fp,fn\n";
    delta_csv << "method,param_kind,seed,delta,f1,precision,recall,reference\n";
    std::map<std::tuple<Method, ParamKind, std::size_t>, std::vector<MetricBundle>> groups;
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        groups[{r.method, r.kind, r.delta}].push_back(m);
        delta_csv << to_string(r.method) << ',' << to_string(r.kind) << ',' << r.seed << ','
                  << r.delta << ',' << fmt(m.f1) << ',' << fmt(m.precision) << ',' << fmt(m.recall)
                  << ',' << (r.delta == ref ? 1 : 0) << '\n';
        if (r.delta != ref) continue;
        per_seed << to_string(r.method) << ',' << to_string(r.kind) << ',' << r.seed << ','
                 << fmt(m.f1) << ',' << fmt(m.precision) << ',' << fmt(m.recall) << ','
                 << fmt(m.mae_steps) << ',' << fmt(m.fp_per_1000) << ',' << m.tp << ',' << m.fp
                 << ',' << m.fn << '\n';
    }
    summary << "method,param_kind,n,f1,mae,fp_per_1000\n";
    delta_summary << "method,param_kind,delta,f1,reference\n";
    json j_summary = json::array();
    for (const auto& [key, bundles] : groups) {
        const auto& [method, kind, delta] = key;
        const MetricBundle avg = average_metrics(bundles);
        delta_summary << to_string(method) << ',' << to_string(kind) << ',' << delta << ','
                      << fmt(avg.f1) << ',' << (delta == ref ? 1 : 0) << '\n';
        json entry = metrics_to_json(avg);
        entry["method"] = to_string(method);
        entry["param_kind"] = to_string(kind);
        entry["delta"] = delta;
        entry["n"] = bundles.size();
        j_summary.push_back(entry);
        if (delta != ref) continue;
        summary << to_string(method) << ',' << to_string(kind) << ',' << bundles.size() << ','
                << fmt(avg.f1) << ',' << fmt(avg.mae_steps) << ',' << fmt(avg.fp_per_1000) << '\n';
    }
    json j_rows = json::array();
    for (const auto& r : rows) {
        json e = metrics_to_json(r.metrics);
        e["method"] = to_string(r.method);
        e["param_kind"] = to_string(r.kind);
        e["seed"] = r.seed;
        e["delta"] = r.delta;
        j_rows.push_back(e);
    }
    write_text(dir / "metrics.csv", per_seed.str());
    write_text(dir / "metrics_summary.csv", summary.str());
    write_text(dir / "f1_delta.csv", delta_csv.str());
    write_text(dir / "f1_delta_summary.csv", delta_summary.str());
    write_json_file(dir / "metrics.json",
                    {{"reference_delta", ref}, {"deltas", deltas}, {"summary", j_summary}, {"rows", j_rows}});
    write_resolved_config(dir, config);
    info(opts, "evaluated " + std::to_string(results.size()) + " detection results");
    return rows;
}

CalibrationReport cmd_calibrate(const ExperimentConfig& config, bool perfect,
                                const CommandOptions& opts) {
    const RunLayout layout{config.workdir};
    std::optional<PosteriorModel> model;
    if (!perfect) model = load_checkpoint(layout.checkpoint());
    const fs::path dir = layout.calibration_dir();
    prepare_output_dir(dir, opts.force);

    CalibrationReport report;
    json j_kinds = json::array();
    for (ParamKind kind : kAllParamKinds) {
        const fs::path corpus_dir = layout.stationary_corpus(kind);
        if (!fs::exists(corpus_dir / "manifest.json")) continue;
        const auto corpus = load_stationary_corpus(corpus_dir);
        info(opts, "calibrating " + std::string(to_string(kind)) + " on " +
                       std::to_string(corpus.size()) + " trajectories");
        KindCalibration cal;
        if (perfect) {
            std::vector<CalibrationPoint> pts;
            for (const auto& s : corpus) pts.push_back({s.params[index_of(kind)], s.params[index_of(kind)]});
            cal = calibrate_points(kind, std::move(pts));
        } else {
            DetectionConfig dc = config.detection;
            dc.varying = kind;
            dc.seed = derive_seed(derive_seed(config.seed, kCalibration), index_of(kind));
            cal = calibrate(corpus, kind, *model, dc);
        }
        std::ostringstream scatter;
        scatter << "theta_true,theta_hat\n";
        for (const auto& p : cal.points) scatter << fmt(p.theta_true) << ',' << fmt(p.theta_hat) << '\n';
        write_text(dir / ("scatter_" + std::string(to_string(kind)) + ".csv"), scatter.str());
        const Interval prior = config.dataset.prior[index_of(kind)];
        j_kinds.push_back({{"param_kind", to_string(kind)},
                           {"n", cal.points.size()},
                           {"slope", cal.fit.slope},
                           {"intercept", cal.fit.intercept},
                           {"intercept_over_prior_range", cal.fit.intercept / prior.width()},
                           {"r2", num_or_null(cal.fit.r2)},
                           {"mae", cal.mae},
                           {"perfect_estimator", perfect}});
        report.kinds.push_back(std::move(cal));
    }
    if (report.kinds.empty()) {
        throw DataError("no stationary corpora under " + (layout.root / "corpus" / "stationary").string());
    }
    write_json_file(dir / "report.json", {{"kinds", j_kinds}});
    write_resolved_config(dir, config);
    return report;
}

fs::path cmd_sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<double>& values,
                   const CommandOptions& opts) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    const RunLayout layout{config.workdir};
    const char* axis_name = axis == SweepAxis::delta ? "delta" : (axis == SweepAxis::w ? "w" : "eta");
    const fs::path dir = layout.sweep_dir() / axis_name;
    prepare_output_dir(dir, opts.force);
    std::ostringstream csv;
    csv << kLongHeader;

    if (axis == SweepAxis::delta) {
        std::vector<std::size_t> deltas;
        for (double v : values) {
            if (v < 0.0 || v != std::floor(v)) throw ConfigError("delta values must be non-negative integers");
            deltas.push_back(static_cast<std::size_t>(v));
        }
        const auto rows = evaluate_results(load_results(layout.detect_dir()), deltas);
        for (std::size_t d : deltas) {
            std::vector<EvalRow> sel;
            for (const auto& r : rows) {
                if (r.delta == d) sel.push_back(r);
            }
            append_long_rows(csv, axis_name, std::to_string(d), sel, std::nullopt);
        }
    } else {
        std::optional<PosteriorModel> base_model;
        if (axis == SweepAxis::eta) base_model = load_checkpoint(layout.checkpoint());
        for (double v : values) {
            ExperimentConfig sub = config;
            std::ostringstream label;
            label << v;
            sub.workdir = dir / (std::string(axis_name) + "_" + label.str());
            CommandOptions sub_opts = opts;
            sub_opts.force = true;
            RunLayout corpus_layout = layout;
            const PosteriorModel* model = nullptr;
            std::optional<PosteriorModel> trained;
            if (axis == SweepAxis::w) {
                if (v < 2.0 || v != std::floor(v)) throw ConfigError("w values must be integers >= 2");
                sub.detection.w = static_cast<std::size_t>(v);
                sub.dataset.sim_steps = std::max(sub.dataset.sim_steps, sub.simulator.burn_in + 5 * sub.detection.w);
                sub.resolve();
                info(opts, "sweep w=" + label.str() + ": training a dedicated model");
                trained = cmd_train(sub, sub_opts);
                model = &*trained;
            } else {
                if (v < 0.0) throw ConfigError("eta values must be non-negative");
                sub.simulator.eta = v;
                sub.resolve();
                corpus_layout = RunLayout{sub.workdir};
                for (ParamKind k : kAllParamKinds) simulate_changepoint(sub, corpus_layout, k, sub_opts);
                model = &*base_model;
            }
            const RunLayout out_layout{sub.workdir};
            for (Method m : {Method::param_cpd, Method::obs_cpd}) {
                for (ParamKind k : kAllParamKinds) {
                    detect_corpus(sub, model, corpus_layout, out_layout, m, k, sub_opts);
                }
            }
            const auto rows = evaluate_results(load_results(out_layout.detect_dir()),
                                               {config.eval.reference_delta});
            append_long_rows(csv, axis_name, label.str(), rows, std::nullopt);
        }
    }
    const fs::path out = dir / ("sweep_" + std::string(axis_name) + ".csv");
    write_text(out, csv.str());
    write_resolved_config(dir, config);
    return out;
}

}  // namespace paramcpd
