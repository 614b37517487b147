#include "paramcpd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "paramcpd/dataset.hpp"
#include "paramcpd/errors.hpp"
#include "paramcpd/parallel.hpp"
#include "paramcpd/random.hpp"

namespace paramcpd {

std::string_view to_string(Aggregator a) { return a == Aggregator::median ? "median" : "mean"; }

Aggregator aggregator_from_string(std::string_view name) {
    if (name == "median") return Aggregator::median;
    if (name == "mean") return Aggregator::mean;
    throw ConfigError("unknown aggregator '" + std::string(name) + "'");
}

std::string_view to_string(Method m) { return m == Method::param_cpd ? "param_cpd" : "obs_cpd"; }

Method method_from_string(std::string_view name) {
    if (name == "param_cpd") return Method::param_cpd;
    if (name == "obs_cpd") return Method::obs_cpd;
    throw ConfigError("unknown method '" + std::string(name) + "'");
}

void DetectionConfig::validate() const {
    if (w < 2) throw ConfigError("window length w must be at least 2");
    if (s < 1) throw ConfigError("stride s must be at least 1");
    if (samples < 1) throw ConfigError("posterior sample count must be at least 1");
    if (detector.min_size < 1) throw ConfigError("min_size must be at least 1");
    if (!(detector.penalty_scale >= 0.0)) throw ConfigError("penalty scale must be non-negative");
    if (detector.gamma && !(*detector.gamma > 0.0)) throw ConfigError("gamma must be positive");
    if (smoothing_width < 1) throw ConfigError("smoothing width must be at least 1");
}

std::size_t window_count(std::size_t T, std::size_t w, std::size_t s) {
    if (w == 0 || s == 0 || T < w) return 0;
    return (T - w) / s + 1;
}

std::size_t align_to_source(std::size_t window_end_index, std::size_t w) {
    return window_end_index - w / 2;
}

double aggregate(std::span<double> values, Aggregator agg) {
    if (values.empty()) throw std::invalid_argument("aggregate: no values");
    if (agg == Aggregator::mean) {
        return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    }
    const std::size_t n = values.size();
    auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    const double upper = *mid;
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

std::vector<double> moving_average(std::span<const double> values, std::size_t width) {
    if (width == 0) throw std::invalid_argument("moving_average: width must be positive");
    const std::size_t n = values.size();
    const std::size_t left = (width - 1) / 2;
    const std::size_t right = width / 2;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + values[i];
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (width == 1) {
            out[i] = values[i];
            continue;
        }
        const std::size_t a = i >= left ? i - left : 0;
        const std::size_t b = std::min(n, i + right + 1);
        out[i] = (prefix[b] - prefix[a]) / static_cast<double>(b - a);
    }
    return out;
}

ParamTrajectory estimate_trajectory(const Trajectory& traj, const PosteriorModel& model,
                                    const DetectionConfig& config) {
    config.validate();
    if (model.window_length() != config.w) {
        throw ConfigError("detection window w=" + std::to_string(config.w) +
                          " does not match the model's window length " +
                          std::to_string(model.window_length()));
    }
    const std::size_t T = traj.size();
    if (T < config.w) throw DataError("trajectory shorter than the detection window");
    const std::size_t n = window_count(T, config.w, config.s);
    const std::size_t dim = kChannels * config.w;

    ParamTrajectory pt;
    pt.w = config.w;
    pt.s = config.s;
    pt.estimates.resize(n);
    pt.window_end_indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) pt.window_end_indices[i] = config.w - 1 + i * config.s;

    constexpr std::size_t kChunk = 512;
    const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
    parallel_for(n_chunks, config.jobs, [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        const std::size_t m = std::min(kChunk, n - begin);
        std::vector<double> rows(m * dim);
        for (std::size_t j = 0; j < m; ++j) {
            std::span<double> block(rows.data() + j * dim, dim);
            extract_window_into(traj, pt.window_end_indices[begin + j], config.w, block);
            standardize_in_place(block, config.w, model.norm_stats());
        }
        const auto densities = model.forward_rows(rows, m);
        std::vector<double> column(config.samples);
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t i = begin + j;
            const auto draws = sample_posterior(densities[j], config.samples, derive_seed(config.seed, i));
            for (std::size_t d = 0; d < 3; ++d) {
                for (std::size_t k = 0; k < draws.size(); ++k) column[k] = draws[k][d];
                pt.estimates[i][d] = aggregate(column, config.aggregator);
            }
        }
    });
    for (const auto& e : pt.estimates) {
        for (std::size_t d = 0; d < 3; ++d) {
            if (!std::isfinite(e[d])) throw NumericalError("non-finite parameter estimate");
        }
    }
    return pt;
}

DetectionResult detect_on_param_trajectory(const ParamTrajectory& pt, std::size_t T,
                                           const DetectionConfig& config) {
    config.validate();
    const std::size_t d = index_of(config.varying);
    std::vector<double> values(pt.size());
    for (std::size_t i = 0; i < pt.size(); ++i) values[i] = pt.estimates[i][d];
    const Series series = Series::univariate(std::move(values));

    DetectionResult result;
    result.method = Method::param_cpd;
    result.config = config;
    result.series_length = T;
    result.segmentation = pelt(series, auto_penalty(series, config.detector.penalty_scale),
                               config.detector.min_size, config.detector.gamma);
    for (std::size_t b : result.segmentation.breakpoints) {
        result.predicted.push_back(align_to_source(pt.window_end_indices[b], pt.w));
    }
    result.trajectory = pt;
    return result;
}

DetectionResult detect_param_cpd(const Trajectory& traj, const PosteriorModel& model,
                                 const DetectionConfig& config) {
    return detect_on_param_trajectory(estimate_trajectory(traj, model, config), traj.size(), config);
}

DetectionResult detect_obs_cpd(const Trajectory& traj, const DetectionConfig& config) {
    config.validate();
    const std::size_t T = traj.size();
    if (T < config.smoothing_width || T < 2) {
        throw DataError("trajectory shorter than the smoothing width");
    }
    std::vector<double> x(T);
    for (std::size_t i = 0; i < T; ++i) x[i] = traj.states[i].x;
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(T);
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(T));
    for (double& v : x) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    const Series series = Series::univariate(moving_average(x, config.smoothing_width));

    DetectionResult result;
    result.method = Method::obs_cpd;
    result.config = config;
    result.series_length = T;
    result.segmentation = pelt(series, auto_penalty(series, config.detector.penalty_scale),
                               config.detector.min_size, config.detector.gamma);
    result.predicted = result.segmentation.breakpoints;
    return result;
}

void write_param_trajectory_csv(const ParamTrajectory& pt, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << "source_index,sigma_hat,rho_hat,beta_hat\n" << std::setprecision(17);
    for (std::size_t i = 0; i < pt.size(); ++i) {
        const auto& e = pt.estimates[i];
        out << align_to_source(pt.window_end_indices[i], pt.w) << ',' << e.sigma << ',' << e.rho
            << ',' << e.beta << '\n';
    }
}

}  // namespace paramcpd
