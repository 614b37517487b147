// End-to-end acceptance run: one PASS/FAIL line per criterion, exit 0 only if all pass.
//
//   acceptance [--workdir DIR] [--jobs N] [--reuse] [--only 1,2,...]
//
// Criteria 4-6 run the default pipeline (simulate, train, detect, evaluate,
// calibrate) in DIR; --reuse skips that when DIR already holds a finished run.

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "checks.hpp"
#include "paramcpd/commands.hpp"
#include "paramcpd/random.hpp"

namespace fs = std::filesystem;
using namespace paramcpd;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---- 1: segmentation oracles

Outcome criterion_oracles() {
    Outcome o;
    const auto brute = checks::pelt_vs_brute_force(500, 101);
    const auto exact = checks::pelt_vs_exact(200, 512, 102);
    o.require(brute.cases == 500 && brute.mismatches == 0,
              std::to_string(brute.mismatches) + " brute-force mismatches (" + brute.first_failure + ")");
    o.require(exact.cases == 200 && exact.mismatches == 0,
              std::to_string(exact.mismatches) + " pelt/exact mismatches (" + exact.first_failure + ")");
    if (o.pass) o.detail = "500/500 vs enumeration (T<=16), 200/200 pelt==exact_dp (T<=512)";
    return o;
}

// ---- 2: gradients

Outcome criterion_gradients() {
    Outcome o;
    const double worst = checks::gradient_check(100, 201);
    o.require(worst < 1e-4, "worst relative error " + fmt("%.3e", worst));
    if (o.pass) o.detail = "100 cases, worst relative error " + fmt("%.3e", worst) + " (h=1e-5)";
    return o;
}

// ---- 3: integrator

Outcome criterion_integrator() {
    Outcome o;
    const auto r = checks::integrator_order();
    o.require(r.ratio >= 8.0 && r.ratio <= 32.0, "error ratio " + fmt("%.3f", r.ratio));

    const State rhs = lorenz_rhs({1, 1, 1}, LorenzParams::classic());
    o.require(rhs == State{0.0, 26.0, 1.0 - 8.0 / 3.0}, "rhs at (1,1,1)");
    for (const LorenzParams p : {LorenzParams::classic(), LorenzParams{6.0, 42.0, 1.5}, LorenzParams{16.0, 22.0, 4.0}}) {
        const auto t = integrate({0, 0, 0}, p, 5000, 0.01);
        o.require(std::all_of(t.states.begin(), t.states.end(), [](const State& s) { return s == State{0, 0, 0}; }),
                  "origin drifted");
    }

    const State s0 = perturbed_initial_state(7);
    o.require(s0 == perturbed_initial_state(7), "initial state not reproducible");
    o.require(integrate(s0, LorenzParams::classic(), 3000, 0.01).states ==
                  integrate(s0, LorenzParams::classic(), 3000, 0.01).states,
              "integration not deterministic");
    CorpusConfig cc;
    cc.segments = 4;
    cc.segment_length = 300;
    const auto a = build_changepoint_corpus(ParamKind::rho, 3, 9, cc, 1);
    const auto b = build_changepoint_corpus(ParamKind::rho, 3, 9, cc, 4);
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i) {
        same = a[i].trajectory.states == b[i].trajectory.states && a[i].changepoints == b[i].changepoints;
    }
    o.require(same, "noisy corpus depends on the worker count");
    if (o.pass) {
        o.detail = "dt-halving ratio " + fmt("%.2f", r.ratio) + ", fixed point exact, runs bitwise repeatable";
    }
    return o;
}

// ---- pipeline shared by 4-6

struct Pipeline {
    ExperimentConfig cfg;
    RunLayout layout;
    CalibrationReport calibration;
    std::vector<EvalRow> rows;
};

Pipeline run_pipeline(const fs::path& workdir, std::size_t jobs, bool reuse) {
    Pipeline p;
    p.cfg.workdir = workdir;
    p.cfg.jobs = jobs;
    p.cfg.resolve();
    p.layout = RunLayout{workdir};
    const CommandOptions opts{true, false};
    const bool have = fs::exists(p.layout.checkpoint()) && fs::exists(p.layout.detect_dir());
    if (!(reuse && have)) {
        cmd_simulate(p.cfg, CorpusType::all, {kAllParamKinds.begin(), kAllParamKinds.end()}, opts);
        cmd_train(p.cfg, opts);
        cmd_detect(p.cfg, {Method::param_cpd, Method::obs_cpd}, {kAllParamKinds.begin(), kAllParamKinds.end()}, opts);
    }
    p.rows = cmd_evaluate(p.cfg, std::nullopt, opts);
    p.calibration = cmd_calibrate(p.cfg, false, opts);
    return p;
}

// ---- 4: calibration

Outcome criterion_calibration(const Pipeline& p) {
    Outcome o;
    std::string summary;
    for (const auto& k : p.calibration.kinds) {
        const std::string name(to_string(k.kind));
        const double range = p.cfg.dataset.prior[index_of(k.kind)].width();
        const double rel = std::abs(k.fit.intercept) / range;
        o.require(k.points.size() >= 50, name + ": only " + std::to_string(k.points.size()) + " trajectories");
        o.require(k.fit.slope >= 0.9 && k.fit.slope <= 1.1, name + " slope " + fmt("%.4f", k.fit.slope));
        o.require(rel <= 0.05, name + " |intercept|/range " + fmt("%.4f", rel));
        o.require(k.fit.r2 >= 0.9, name + " R2 " + fmt("%.4f", k.fit.r2));
        summary += (summary.empty() ? "" : ", ") + name + " slope " + fmt("%.3f", k.fit.slope) + " int/range " +
                   fmt("%.4f", rel) + " R2 " + fmt("%.3f", k.fit.r2);
    }
    o.require(p.calibration.kinds.size() == 3, "missing parameter kinds");
    o.detail = o.pass ? summary : o.detail + " [" + summary + "]";
    return o;
}

// ---- 5: main table

MetricBundle mean_at(const std::vector<EvalRow>& rows, Method m, ParamKind k, std::size_t delta, std::size_t* n) {
    std::vector<MetricBundle> b;
    for (const auto& r : rows) {
        if (r.method == m && r.kind == k && r.delta == delta) b.push_back(r.metrics);
    }
    if (n) *n = b.size();
    return average_metrics(b);
}

Outcome criterion_table(const Pipeline& p) {
    Outcome o;
    std::string summary;
    const std::size_t delta = p.cfg.eval.reference_delta;
    o.require(delta == 10 && p.cfg.detection.w == 100 && p.cfg.detection.s == 1 && p.cfg.simulator.segments == 12 &&
                  p.cfg.simulator.segment_length == 800 && p.cfg.simulator.eta == 0.01,
              "pipeline is not at the reference settings");
    for (ParamKind k : kAllParamKinds) {
        const std::string name(to_string(k));
        std::size_t np = 0, no = 0;
        const MetricBundle pm = mean_at(p.rows, Method::param_cpd, k, delta, &np);
        const MetricBundle om = mean_at(p.rows, Method::obs_cpd, k, delta, &no);
        o.require(np == 3 && no == 3, name + ": expected 3 sequences per method");
        o.require(pm.f1 > om.f1 && pm.f1 >= 2.0 * om.f1,
                  name + " F1 " + fmt("%.3f", pm.f1) + " vs " + fmt("%.3f", om.f1) + " (ratio " +
                      fmt("%.2f", om.f1 > 0 ? pm.f1 / om.f1 : INFINITY) + ", need 2)");
        o.require(pm.fp_per_1000 < om.fp_per_1000 && 3.0 * pm.fp_per_1000 <= om.fp_per_1000,
                  name + " FP/1000 " + fmt("%.2f", pm.fp_per_1000) + " vs " + fmt("%.2f", om.fp_per_1000) +
                      " (need a factor 3)");
        summary += (summary.empty() ? "" : ", ") + name + " F1 " + fmt("%.3f", pm.f1) + "/" + fmt("%.3f", om.f1) +
                   " FP " + fmt("%.2f", pm.fp_per_1000) + "/" + fmt("%.2f", om.fp_per_1000);
    }
    o.detail = o.pass ? summary + " (param/obs)" : o.detail + " [" + summary + " (param/obs)]";
    return o;
}

// ---- 6: F1 against delta

struct StoredDetection {
    Method method;
    ParamKind kind;
    std::vector<std::size_t> predicted, truth;
    std::size_t T;
};

std::vector<StoredDetection> load_detections(const RunLayout& layout) {
    std::vector<StoredDetection> out;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(layout.detect_dir())) {
        const std::string n = e.path().filename().string();
        if (n.rfind("seq_", 0) == 0 && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        const json j = json::parse(slurp(f));
        out.push_back({method_from_string(j.at("method").get<std::string>()),
                       param_kind_from_string(j.at("param_kind").get<std::string>()),
                       j.at("predicted").get<std::vector<std::size_t>>(),
                       j.at("ground_truth").get<std::vector<std::size_t>>(), j.at("series_length").get<std::size_t>()});
    }
    return out;
}

bool non_decreasing_f1(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth, std::size_t T,
                       std::size_t max_delta) {
    std::vector<std::size_t> deltas(max_delta + 1);
    for (std::size_t d = 0; d <= max_delta; ++d) deltas[d] = d;
    const auto curve = f1_delta_curve(pred, truth, T, deltas);
    for (std::size_t i = 1; i < curve.size(); ++i) {
        if (curve[i].metrics.f1 < curve[i - 1].metrics.f1) return false;
    }
    return true;
}

Outcome criterion_delta(const Pipeline& p) {
    Outcome o;
    const auto dets = load_detections(p.layout);
    o.require(dets.size() == 2 * 3 * p.cfg.eval.n_seeds, "unexpected number of detection results");
    std::size_t bad = 0;
    for (const auto& d : dets) bad += !non_decreasing_f1(d.predicted, d.truth, d.T, 400);
    std::mt19937_64 rng(601);
    for (int c = 0; c < 1000; ++c) {
        const std::size_t T = std::uniform_int_distribution<std::size_t>(10, 300)(rng);
        const auto pred = checks::random_sorted_points(rng, std::uniform_int_distribution<std::size_t>(0, 12)(rng), T);
        const auto truth = checks::random_sorted_points(rng, std::uniform_int_distribution<std::size_t>(0, 12)(rng), T);
        bad += !non_decreasing_f1(pred, truth, T, T);
    }
    o.require(bad == 0, std::to_string(bad) + " curves decrease somewhere");

    std::string worst;
    double worst_gap = INFINITY;
    for (ParamKind k : kAllParamKinds) {
        for (std::size_t delta = 0; delta <= 10; ++delta) {
            std::vector<MetricBundle> pb, ob;
            for (const auto& d : dets) {
                if (d.kind != k) continue;
                auto& dst = d.method == Method::param_cpd ? pb : ob;
                dst.push_back(metrics(match(d.predicted, d.truth, delta), d.T));
            }
            const double pf = average_metrics(pb).f1, of = average_metrics(ob).f1;
            o.require(pf >= of, std::string(to_string(k)) + " at delta " + std::to_string(delta) + ": " +
                                    fmt("%.3f", pf) + " < " + fmt("%.3f", of));
            if (pf - of < worst_gap) {
                worst_gap = pf - of;
                worst = std::string(to_string(k)) + " delta " + std::to_string(delta);
            }
        }
    }
    if (o.pass) {
        o.detail = "monotone on " + std::to_string(dets.size()) + " results + 1000 random instances; "
                   "smallest param-obs F1 gap over delta 0..10 " + fmt("%.3f", worst_gap) + " (" + worst + ")";
    }
    return o;
}

// ---- 7: metric layer

Outcome criterion_metrics() {
    Outcome o;
    using V = std::vector<std::size_t>;
    {
        const V pts{5, 40, 90};
        const auto m = match(pts, pts, 10);
        const auto b = metrics(m, 100);
        o.require(b.tp == 3 && b.fp == 0 && b.fn == 0 && b.mae_steps == 0.0, "predictions = truths");
    }
    {
        const auto b = metrics(match(V{}, V{3, 9}, 10), 100);
        o.require(b.tp == 0 && b.fn == 2, "empty predictions");
    }
    {
        const auto m = match(V{10, 12}, V{11}, 2);
        o.require(m.matched.size() == 1 && m.matched[0].prediction == 10 && m.matched[0].truth == 11 &&
                      m.false_positives == V{12},
                  "tie-break example");
    }
    {
        const V pts{1, 2, 3, 4, 5};
        const auto b = metrics(match(pts, pts, 0), 10);
        o.require(b.tp == 5 && b.precision == 1.0 && b.recall == 1.0 && b.f1 == 1.0, "perfect scores");
    }
    {
        const auto b = metrics(match(V{50}, V{5}, 3), 100);
        o.require(b.tp == 0 && b.fp == 1 && b.precision == 0.0 && b.recall == 0.0 && b.f1 == 0.0, "zero-TP convention");
    }
    {
        const auto b = metrics(match(V{0, 50, 99}, V{10, 20}, 100), 100);
        o.require(b.tp == 2 && b.fp == 1 && b.fn == 0, "delta >= T");
    }
    {
        std::vector<CalibrationPoint> pts;
        for (double t : {6.5, 8.0, 11.0, 15.5}) pts.push_back({t, t});
        const auto k = calibrate_points(ParamKind::sigma, pts);
        o.require(std::abs(k.fit.slope - 1.0) < 1e-12 && std::abs(k.fit.intercept) < 1e-12 &&
                      std::abs(k.fit.r2 - 1.0) < 1e-12 && k.mae == 0.0,
                  "perfect estimator");
        const auto two = calibrate_points(ParamKind::rho, {{25.0, 26.0}, {40.0, 37.0}});
        o.require(std::abs(two.fit.r2 - 1.0) < 1e-12 && std::abs(two.fit.slope - 11.0 / 15.0) < 1e-12, "two-point OLS");
    }
    const auto g = checks::greedy_vs_max_matching(1000, 701);
    o.require(g.cases == 1000 && g.not_maximal == 0 && g.invalid == 0,
              std::to_string(g.not_maximal) + " non-maximal, " + std::to_string(g.invalid) + " invalid matchings");
    if (o.pass) o.detail = "trivial examples exact; 1000/1000 random matchings of maximal cardinality";
    return o;
}

// ---- 8: CLI reproducibility

using Snapshot = std::map<std::string, std::string>;

Snapshot snapshot(const fs::path& root) {
    Snapshot s;
    if (!fs::exists(root)) return s;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) s[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return s;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(PARAMCPD_CLI_PATH) + " " + args + " >> '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion_reproducibility(const fs::path& root) {
    Outcome o;
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path work = root / "work";
    const fs::path log = root / "cli.log";
    json j = json::parse(R"({
      "seed": 5,
      "jobs": 2,
      "simulator": {"segments": 4, "segment_length": 200, "stationary_length": 300, "burn_in": 300},
      "dataset": {"n_pairs": 400, "sim_steps": 400},
      "model": {"hidden": [8], "components": 2, "epochs": 2, "batch_size": 64},
      "detection": {"w": 20, "samples": 16, "min_size": 10},
      "eval": {"n_seeds": 2, "n_stationary": 4}
    })");
    j["paths"] = {{"workdir", work.string()}};
    const fs::path config = root / "tiny.json";
    std::ofstream(config) << j.dump(2) << '\n';

    const std::string c = "-q -c '" + config.string() + "' ";
    const std::vector<std::string> commands{
        "simulate", "train", "detect", "evaluate", "calibrate", "calibrate --perfect",
        "sweep delta 2 10 40", "sweep w 10 20", "sweep eta 0 0.02", "run",
    };
    std::size_t files = 0;
    for (const auto& cmd : commands) {
        const int first = run_cli(c + "--force " + cmd, log);
        const Snapshot a = snapshot(work);
        const int second = run_cli(c + "--force " + cmd, log);
        const Snapshot b = snapshot(work);
        o.require(first == 0 && second == 0, "'" + cmd + "' exited with " + std::to_string(first) + "/" + std::to_string(second));
        if (a != b) {
            std::string which;
            for (const auto& [k, v] : a) {
                if (!b.count(k) || b.at(k) != v) {
                    which = k;
                    break;
                }
            }
            if (which.empty()) which = "file set changed";
            o.require(false, "'" + cmd + "' rerun differs (" + which + ")");
        }
        files = std::max(files, b.size());
    }
    const fs::path d1 = root / "default_a.json", d2 = root / "default_b.json";
    const int i1 = run_cli("init-config '" + d1.string() + "'", log);
    const int i2 = run_cli("init-config '" + d2.string() + "'", log);
    o.require(i1 == 0 && i2 == 0 && slurp(d1) == slurp(d2) && !slurp(d1).empty(), "init-config not repeatable");
    if (o.pass) {
        o.detail = std::to_string(commands.size() + 1) + " commands rerun with --force, " + std::to_string(files) +
                   " output files byte-identical";
    }
    return o;
}

// Background false-alarm rate on single-regime trajectories. Informational.
std::string stationary_false_alarms(const Pipeline& p, std::size_t per_kind) {
    const PosteriorModel model = load_checkpoint(p.layout.checkpoint());
    std::string out;
    for (ParamKind k : kAllParamKinds) {
        const auto corpus = load_stationary_corpus(p.layout.stationary_corpus(k));
        DetectionConfig dc = p.cfg.detection;
        dc.varying = k;
        dc.jobs = p.cfg.jobs;
        double param = 0.0, obs = 0.0, steps = 0.0;
        for (std::size_t i = 0; i < std::min(per_kind, corpus.size()); ++i) {
            dc.seed = derive_seed(derive_seed(p.cfg.seed, 51), index_of(k) * 100000 + i);
            const auto& traj = corpus[i].trajectory;
            param += static_cast<double>(detect_param_cpd(traj, model, dc).predicted.size());
            obs += static_cast<double>(detect_obs_cpd(traj, dc).predicted.size());
            steps += static_cast<double>(traj.size());
        }
        out += (out.empty() ? "" : ", ") + std::string(to_string(k)) + " " + fmt("%.2f", 1000.0 * param / steps) +
               "/" + fmt("%.2f", 1000.0 * obs / steps);
    }
    return out + " (param/obs FP per 1000 steps, " + std::to_string(per_kind) + " trajectories per kind)";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria 1-8"};
    fs::path workdir = fs::current_path() / "acceptance_run";
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    bool reuse = false;
    std::vector<int> only;
    app.add_option("--workdir", workdir, "Directory for the default pipeline run");
    app.add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--reuse", reuse, "Reuse corpus, model and detections already in the workdir");
    app.add_option("--only", only, "Run just these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
    bool all = true;
    const auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        if (!wanted(id)) return;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        all = all && o.pass;
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
    };

    report(1, "segmentation oracles", criterion_oracles);
    report(2, "gradient check", criterion_gradients);
    report(3, "integrator", criterion_integrator);

    if (wanted(4) || wanted(5) || wanted(6)) {
        std::optional<Pipeline> p;
        try {
            p = run_pipeline(workdir, jobs, reuse);
        } catch (const std::exception& e) {
            std::printf("default pipeline failed: %s\n", e.what());
        }
        const auto need = [&](const std::function<Outcome(const Pipeline&)>& fn) {
            return [&p, fn]() {
                if (!p) return Outcome{false, "default pipeline did not complete"};
                return fn(*p);
            };
        };
        report(4, "calibration", need(criterion_calibration));
        report(5, "main table", need(criterion_table));
        report(6, "F1 against delta", need(criterion_delta));
        if (p) {
            try {
                std::printf("INFO stationary false alarms: %s\n", stationary_false_alarms(*p, 10).c_str());
            } catch (const std::exception& e) {
                std::printf("INFO stationary false alarms unavailable: %s\n", e.what());
            }
        }
    }

    report(7, "metric layer", criterion_metrics);
    report(8, "reproducibility", [&] { return criterion_reproducibility(workdir.parent_path() / "acceptance_cli"); });
    return all ? 0 : 1;
}
