#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "paramcpd/config.hpp"
#include "paramcpd/eval.hpp"
#include "paramcpd/pipeline.hpp"

namespace paramcpd {

// Workdir layout shared by every command.
struct RunLayout {
    std::filesystem::path root;

    std::filesystem::path changepoint_corpus(ParamKind k) const { return root / "corpus" / "changepoint" / std::string(to_string(k)); }
    std::filesystem::path stationary_corpus(ParamKind k) const { return root / "corpus" / "stationary" / std::string(to_string(k)); }
    std::filesystem::path model_dir() const { return root / "model"; }
    std::filesystem::path checkpoint() const { return model_dir() / "checkpoint.bin"; }
    std::filesystem::path detect_dir() const { return root / "detect"; }
    std::filesystem::path detect_dir(Method m, ParamKind k) const { return detect_dir() / std::string(to_string(m)) / std::string(to_string(k)); }
    std::filesystem::path eval_dir() const { return root / "eval"; }
    std::filesystem::path calibration_dir() const { return root / "calibration"; }
    std::filesystem::path sweep_dir() const { return root / "sweep"; }
};

enum class CorpusType { changepoint, stationary, all };
enum class SweepAxis { delta, w, eta };

CorpusType corpus_type_from_string(const std::string& name);
SweepAxis sweep_axis_from_string(const std::string& name);

struct CommandOptions {
    bool force = false;
    bool quiet = false;
};

/// Writes changepoint and/or stationary corpora plus manifests.
void cmd_simulate(const ExperimentConfig& config, CorpusType type,
                  const std::vector<ParamKind>& kinds, const CommandOptions& opts = {});

/// Builds the training set, trains, writes checkpoint.bin and train_log.csv.
PosteriorModel cmd_train(const ExperimentConfig& config, const CommandOptions& opts = {});

/// One JSON per sequence (plus a parameter-trajectory CSV for param_cpd).
void cmd_detect(const ExperimentConfig& config, const std::vector<Method>& methods,
                const std::vector<ParamKind>& kinds, const CommandOptions& opts = {});

/// One evaluation row: metrics of one detection result at one tolerance.
struct EvalRow {
    Method method;
    ParamKind kind;
    std::size_t seed;  // sequence index within the corpus
    std::size_t delta;
    MetricBundle metrics;
};

/// Reads detection JSONs under `results_dir` and writes metrics.csv,
/// metrics_summary.csv, metrics.json and f1_delta.csv into the eval dir.
std::vector<EvalRow> cmd_evaluate(const ExperimentConfig& config,
                                  const std::optional<std::filesystem::path>& results_dir = {},
                                  const CommandOptions& opts = {});

/// `perfect` injects theta_hat = theta instead of running the model.
CalibrationReport cmd_calibrate(const ExperimentConfig& config, bool perfect = false,
                                const CommandOptions& opts = {});

/// Long-format CSV across the axis values; returns its path.
std::filesystem::path cmd_sweep(const ExperimentConfig& config, SweepAxis axis,
                                const std::vector<double>& values, const CommandOptions& opts = {});

/// Detection result JSON (config snapshot, breakpoints, segmentation, ground truth).
nlohmann::json detection_to_json(const DetectionResult& result,
                                 const std::vector<std::size_t>& ground_truth, ParamKind kind,
                                 std::size_t sequence_index);

nlohmann::json metrics_to_json(const MetricBundle& m);

}  // namespace paramcpd
