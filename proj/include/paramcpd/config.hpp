#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "paramcpd/dataset.hpp"
#include "paramcpd/npe.hpp"
#include "paramcpd/pipeline.hpp"

namespace paramcpd {

struct EvalSettings {
    std::vector<std::size_t> deltas{2, 5, 10, 20, 40};
    std::size_t reference_delta = 10;
    std::size_t n_seeds = 3;        // changepoint sequences per parameter kind
    std::size_t n_stationary = 50;  // stationary trajectories per parameter kind
};

/// Everything one reproduction run needs. The window length lives in
/// `detection.w` and is shared with the training set.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    CorpusConfig simulator;
    TrainingSetConfig dataset;
    MdnConfig model;
    OptimizerParams optimizer;
    DetectionConfig detection;
    EvalSettings eval;
    std::filesystem::path workdir = "runs/default";

    /// Copies shared fields (w, dt, burn-in, eta, seed, jobs) into the
    /// per-module blocks and checks cross-block consistency.
    void resolve();
};

/// Parses and validates; unknown keys and type errors raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace paramcpd
