#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "paramcpd/random.hpp"
#include "paramcpd/simulator.hpp"

namespace paramcpd {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    double width() const { return hi - lo; }
    double midpoint() const { return 0.5 * (lo + hi); }
    bool operator==(const Interval&) const = default;
};

/// Independent uniform prior over (sigma, rho, beta).
struct PriorSpec {
    std::array<Interval, 3> bounds{Interval{6.0, 16.0}, Interval{22.0, 42.0}, Interval{1.5, 4.0}};

    const Interval& operator[](std::size_t i) const { return bounds[i]; }
    bool contains(const LorenzParams& p) const;
    void validate() const;  // throws ConfigError unless lo <= hi everywhere
    bool operator==(const PriorSpec&) const = default;
};

/// Low/high value ranges a varying parameter alternates between.
struct RegimeRanges {
    std::array<Interval, 3> low{Interval{7.0, 9.0}, Interval{24.0, 28.0}, Interval{1.8, 2.4}};
    std::array<Interval, 3> high{Interval{13.0, 15.0}, Interval{36.0, 40.0}, Interval{3.2, 3.8}};
};

LorenzParams sample_prior(const PriorSpec& prior, std::uint64_t seed);
LorenzParams sample_prior(const PriorSpec& prior, Rng& rng);

inline constexpr std::size_t kChannels = 4;  // x, y, z, y - x

/// Raw 4 x w block, channel-major: value(c, i) = data[c * w + i].
struct RawWindow {
    std::size_t w = 0;
    std::vector<double> data;

    double operator()(std::size_t channel, std::size_t i) const { return data[channel * w + i]; }
};

struct ChannelStats {
    std::array<double, kChannels> mean{0.0, 0.0, 0.0, 0.0};
    std::array<double, kChannels> std{1.0, 1.0, 1.0, 1.0};
    bool operator==(const ChannelStats&) const = default;
};

/// Standardized window, same layout as RawWindow.
struct WindowFeatures {
    std::size_t w = 0;
    std::vector<double> values;
    ChannelStats stats;
};

/// Window covering [end_index - w + 1, end_index] plus the derived y - x channel.
RawWindow extract_window(const Trajectory& traj, std::size_t end_index, std::size_t w);

/// Writes the channel-major raw block for one window directly into `out` (size 4w).
void extract_window_into(const Trajectory& traj, std::size_t end_index, std::size_t w,
                         std::span<double> out);

/// Per-channel sample mean/std pooled over all windows. Throws DataError on a
/// zero-variance channel.
ChannelStats compute_channel_stats(std::span<const double> raw_blocks, std::size_t w);

WindowFeatures featurize(const RawWindow& raw, const ChannelStats& stats);
void standardize_in_place(std::span<double> block, std::size_t w, const ChannelStats& stats);

struct TrainingSetConfig {
    PriorSpec prior;
    std::size_t n_pairs = 50000;
    std::size_t w = 100;
    double dt = 0.01;
    std::size_t burn_in = 1000;
    std::size_t sim_steps = 1500;  // including burn-in
    double eta = 0.01;
    double max_rejection_fraction = 0.1;
};

/// Flattened (theta, window) pairs. Row i of `features` holds 4w standardized values.
struct TrainingSet {
    std::vector<LorenzParams> thetas;
    std::vector<double> features;
    ChannelStats stats;
    PriorSpec prior;
    std::size_t w = 0;
    std::size_t rejected = 0;

    std::size_t size() const { return thetas.size(); }
    std::size_t input_dim() const { return kChannels * w; }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * input_dim(), input_dim()};
    }
};

/// One simulated window per pair, each with its own prior draw, initial
/// perturbation and random window position. Output depends only on
/// (config, seed), never on `jobs`.
TrainingSet build_training_set(const TrainingSetConfig& config, std::uint64_t seed,
                               std::size_t jobs = 1);

void save_training_set(const TrainingSet& set, const std::filesystem::path& path);
TrainingSet load_training_set(const std::filesystem::path& path);

struct CorpusConfig {
    RegimeRanges ranges;
    std::size_t segments = 12;
    std::size_t segment_length = 800;
    std::size_t stationary_length = 3000;
    std::size_t burn_in = 1000;
    double dt = 0.01;
    double eta = 0.01;
};

struct LabeledSequence {
    Trajectory trajectory;
    std::vector<std::size_t> changepoints;
    std::vector<double> segment_values;  // varying parameter per segment
    std::uint64_t seed = 0;
};

struct StationarySequence {
    LorenzParams params;
    Trajectory trajectory;
    std::uint64_t seed = 0;
};

/// K segments alternating low/high draws of `kind`, others at classic values.
std::vector<LabeledSequence> build_changepoint_corpus(ParamKind kind, std::size_t n_sequences,
                                                      std::uint64_t seed,
                                                      const CorpusConfig& config = {},
                                                      std::size_t jobs = 1);

/// Single-regime trajectories; `kind` drawn uniformly over low U high.
std::vector<StationarySequence> build_stationary_corpus(ParamKind kind,
                                                        std::size_t n_trajectories,
                                                        std::uint64_t seed,
                                                        const CorpusConfig& config = {},
                                                        std::size_t jobs = 1);

/// Corpus directories: seq_NNN.bin trajectory records plus manifest.json.
void save_changepoint_corpus(const std::vector<LabeledSequence>& corpus, ParamKind kind,
                             const std::filesystem::path& dir);
std::vector<LabeledSequence> load_changepoint_corpus(const std::filesystem::path& dir,
                                                     ParamKind* kind = nullptr);
void save_stationary_corpus(const std::vector<StationarySequence>& corpus, ParamKind kind,
                            const std::filesystem::path& dir);
std::vector<StationarySequence> load_stationary_corpus(const std::filesystem::path& dir,
                                                       ParamKind* kind = nullptr);

}  // namespace paramcpd
