#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "paramcpd/dataset.hpp"
#include "paramcpd/simulator.hpp"

namespace paramcpd {

enum class Activation { tanh, softplus };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

/// Architecture of the mixture-density network: an MLP over the flattened
/// 4 x w window followed by a diagonal Gaussian mixture head.
struct MdnConfig {
    std::vector<std::size_t> hidden{256, 256};
    std::size_t n_components = 5;
    std::size_t input_dim = kChannels * 100;
    std::size_t theta_dim = 3;
    Activation activation = Activation::tanh;

    /// logits (K) + means (K x 3) + log-std pre-activations (K x 3)
    std::size_t output_dim() const { return n_components * (1 + 2 * theta_dim); }
    std::size_t n_weights() const;
    void validate() const;
};

inline constexpr double kStdFloor = 1e-4;

/// Diagonal Gaussian mixture over (sigma, rho, beta) in physical units.
struct MixtureDensity {
    std::vector<double> weights;
    std::vector<std::array<double, 3>> means;
    std::vector<std::array<double, 3>> stds;

    std::size_t size() const { return weights.size(); }
    double log_prob(const LorenzParams& theta) const;
    LorenzParams mean() const;
};

struct TrainingMeta {
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    double initial_val_nll = 0.0;
    double best_val_nll = 0.0;
    double final_train_nll = 0.0;
    std::uint64_t seed = 0;
};

/// Trained (or freshly initialized) estimator q(theta | window). Targets are
/// modelled in prior-normalized coordinates u = (theta - mid) / half_width and
/// mapped back to physical units on output.
class PosteriorModel {
public:
    PosteriorModel(MdnConfig config, PriorSpec prior, ChannelStats stats, std::size_t w);

    /// Glorot-uniform weights, zero biases.
    static PosteriorModel initialized(MdnConfig config, PriorSpec prior, ChannelStats stats,
                                      std::size_t w, std::uint64_t seed);

    const MdnConfig& config() const { return config_; }
    const PriorSpec& prior() const { return prior_; }
    const ChannelStats& norm_stats() const { return stats_; }
    std::size_t window_length() const { return w_; }
    std::span<const double> weights() const { return weights_; }
    std::span<double> weights() { return weights_; }
    TrainingMeta& meta() { return meta_; }
    const TrainingMeta& meta() const { return meta_; }

    double center(std::size_t d) const { return prior_[d].midpoint(); }
    double half_width(std::size_t d) const { return 0.5 * prior_[d].width(); }

    /// Mixture densities for `n` feature rows laid out contiguously (row = 4w values).
    std::vector<MixtureDensity> forward_rows(std::span<const double> rows, std::size_t n) const;

private:
    MdnConfig config_;
    PriorSpec prior_;
    ChannelStats stats_;
    std::size_t w_;
    std::vector<double> weights_;
    TrainingMeta meta_;
};

/// Non-owning view of a mini-batch: features row-major, one row per theta.
struct BatchView {
    std::span<const LorenzParams> thetas;
    std::span<const double> features;
};

MixtureDensity forward(const PosteriorModel& model, const WindowFeatures& features);

/// Mean negative log density of the true parameters, via log-sum-exp.
double nll_loss(const PosteriorModel& model, const BatchView& batch);

/// Exact gradient of nll_loss with respect to the weight vector.
std::vector<double> grad_nll(const PosteriorModel& model, const BatchView& batch,
                             double* loss = nullptr);

double log_prob(const PosteriorModel& model, const WindowFeatures& features,
                const LorenzParams& theta);

/// Ancestral sampling: component by weight, then the diagonal Gaussian.
std::vector<LorenzParams> sample_posterior(const MixtureDensity& density, std::size_t m,
                                           std::uint64_t seed);
std::vector<LorenzParams> sample_posterior(const PosteriorModel& model,
                                           const WindowFeatures& features, std::size_t m,
                                           std::uint64_t seed);

struct OptimizerParams {
    double learning_rate = 1e-3;
    std::size_t batch_size = 256;
    std::size_t epochs = 30;
    double val_fraction = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_nll = 0.0;
    double val_nll = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the NLL with a held-out validation split; returns the
/// weights of the best validation epoch (epoch 0 = initialization).
PosteriorModel train(const TrainingSet& set, const MdnConfig& config,
                     const OptimizerParams& optimizer, std::uint64_t seed,
                     std::vector<EpochRecord>* log = nullptr, const EpochCallback& on_epoch = {});

void save_checkpoint(const PosteriorModel& model, const std::filesystem::path& path);
PosteriorModel load_checkpoint(const std::filesystem::path& path);

}  // namespace paramcpd
