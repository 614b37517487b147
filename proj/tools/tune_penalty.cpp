// Penalty-constant sweep on held-out changepoint sequences. Posterior inference
// runs once per sequence; only the segmentation is repeated per value.
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "paramcpd/commands.hpp"
#include "paramcpd/errors.hpp"
#include "paramcpd/random.hpp"

using namespace paramcpd;

int main(int argc, char** argv) {
    CLI::App app{"Sweep the penalty constant on a held-out corpus"};
    std::string config_path;
    std::uint64_t corpus_seed = 20240613;
    std::size_t n = 3;
    std::vector<double> values{0.25, 0.375, 0.5, 0.625, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0};
    app.add_option("--config,-c", config_path, "Experiment config (model is read from its workdir)")->required();
    app.add_option("--corpus-seed", corpus_seed, "Seed of the held-out corpus");
    app.add_option("--sequences", n, "Sequences per parameter kind");
    app.add_option("--values", values, "Penalty constants");
    CLI11_PARSE(app, argc, argv);
    try {
        ExperimentConfig cfg = load_config(config_path);
        cfg.resolve();
        const PosteriorModel model = load_checkpoint(RunLayout{cfg.workdir}.checkpoint());
        std::cout << "penalty_scale,method,param_kind,f1,precision,recall,fp_per_1000\n";
        for (ParamKind kind : kAllParamKinds) {
            const auto corpus = build_changepoint_corpus(kind, n, corpus_seed, cfg.simulator, cfg.jobs);
            std::vector<ParamTrajectory> estimates;
            for (std::size_t i = 0; i < corpus.size(); ++i) {
                DetectionConfig dc = cfg.detection;
                dc.varying = kind;
                dc.seed = derive_seed(corpus_seed, i);
                estimates.push_back(estimate_trajectory(corpus[i].trajectory, model, dc));
            }
            for (double c : values) {
                std::map<Method, std::vector<MetricBundle>> bundles;
                for (std::size_t i = 0; i < corpus.size(); ++i) {
                    DetectionConfig dc = cfg.detection;
                    dc.varying = kind;
                    dc.detector.penalty_scale = c;
                    const std::size_t T = corpus[i].trajectory.size();
                    const auto& truth = corpus[i].changepoints;
                    const auto p = detect_on_param_trajectory(estimates[i], T, dc);
                    const auto o = detect_obs_cpd(corpus[i].trajectory, dc);
                    bundles[Method::param_cpd].push_back(metrics(match(p.predicted, truth, cfg.eval.reference_delta), T));
                    bundles[Method::obs_cpd].push_back(metrics(match(o.predicted, truth, cfg.eval.reference_delta), T));
                }
                for (const auto& [m, b] : bundles) {
                    const MetricBundle a = average_metrics(b);
                    std::cout << c << ',' << to_string(m) << ',' << to_string(kind) << ',' << a.f1 << ','
                              << a.precision << ',' << a.recall << ',' << a.fp_per_1000 << "\n";
                }
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
