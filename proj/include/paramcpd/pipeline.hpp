#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "paramcpd/cpd.hpp"
#include "paramcpd/npe.hpp"
#include "paramcpd/simulator.hpp"

namespace paramcpd {

enum class Aggregator { median, mean };
enum class Method { param_cpd, obs_cpd };

std::string_view to_string(Aggregator a);
Aggregator aggregator_from_string(std::string_view name);
std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

struct DetectorSettings {
    double penalty_scale = kDefaultPenaltyScale;  // penalty = scale * log(T) * d
    std::size_t min_size = 20;
    std::optional<double> gamma;  // empty: median heuristic
};

struct DetectionConfig {
    std::size_t w = 100;
    std::size_t s = 1;
    std::size_t samples = 256;  // posterior draws per window
    Aggregator aggregator = Aggregator::median;
    ParamKind varying = ParamKind::sigma;
    DetectorSettings detector;
    std::size_t smoothing_width = 5;  // Obs-CPD moving average
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    void validate() const;
};

/// Point estimates per window; estimates[i] belongs to the window ending at
/// window_end_indices[i] = w - 1 + i * s.
struct ParamTrajectory {
    std::vector<LorenzParams> estimates;
    std::vector<std::size_t> window_end_indices;
    std::size_t w = 0;
    std::size_t s = 1;

    std::size_t size() const { return estimates.size(); }
};

struct DetectionResult {
    Method method = Method::param_cpd;
    std::vector<std::size_t> predicted;  // source-trajectory indices
    std::optional<ParamTrajectory> trajectory;
    Segmentation segmentation;
    DetectionConfig config;
    std::size_t series_length = 0;
};

/// floor((T - w) / s) + 1 for T >= w, else 0.
std::size_t window_count(std::size_t T, std::size_t w, std::size_t s);

/// Center of the window ending at `window_end_index`.
std::size_t align_to_source(std::size_t window_end_index, std::size_t w);

/// Median (mean of the two middle values for even counts) or mean. Reorders `values`.
double aggregate(std::span<double> values, Aggregator agg);

/// Centered moving average, truncated at the edges; width 1 is the identity.
std::vector<double> moving_average(std::span<const double> values, std::size_t width);

ParamTrajectory estimate_trajectory(const Trajectory& traj, const PosteriorModel& model,
                                    const DetectionConfig& config);

/// Param-CPD: kernel PELT on the varying dimension of the estimated trajectory.
DetectionResult detect_param_cpd(const Trajectory& traj, const PosteriorModel& model,
                                 const DetectionConfig& config);

/// Reuses an already estimated trajectory (e.g. across penalty or delta sweeps).
DetectionResult detect_on_param_trajectory(const ParamTrajectory& estimates, std::size_t T,
                                           const DetectionConfig& config);

/// Obs-CPD baseline: standardized, smoothed x(t) into the same detector.
DetectionResult detect_obs_cpd(const Trajectory& traj, const DetectionConfig& config);

void write_param_trajectory_csv(const ParamTrajectory& pt, const std::filesystem::path& path);

}  // namespace paramcpd
