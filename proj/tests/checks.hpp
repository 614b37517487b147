#pragma once
// Randomized property checks shared by the unit suites and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "paramcpd/cpd.hpp"
#include "paramcpd/eval.hpp"
#include "paramcpd/npe.hpp"
#include "paramcpd/simulator.hpp"

namespace checks {

using paramcpd::Series;

inline double max_abs_diff(const paramcpd::State& a, const paramcpd::State& b) {
    return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)});
}

// End-state error at dt and dt/2 against a dt/20 reference over `horizon` time units.
struct OrderResult {
    double err_coarse;
    double err_fine;
    double ratio;
};

inline OrderResult integrator_order(double dt = 0.01, double horizon = 1.0) {
    using namespace paramcpd;
    const State start = integrate({1.0, 1.0, 1.0}, LorenzParams::classic(), 1000, 0.01).states.back();
    auto run = [&](double h) {
        const auto steps = static_cast<std::size_t>(std::llround(horizon / h));
        return integrate(start, LorenzParams::classic(), steps, h).states.back();
    };
    const State ref = run(dt / 20.0);
    OrderResult r{};
    r.err_coarse = max_abs_diff(run(dt), ref);
    r.err_fine = max_abs_diff(run(dt / 2.0), ref);
    r.ratio = r.err_coarse / r.err_fine;
    return r;
}

// Random series with occasional steps, repeated values and integer levels so
// ties and constant stretches show up.
inline Series random_series(std::mt19937_64& rng, std::size_t T, std::size_t dim = 1) {
    std::normal_distribution<double> normal;
    std::uniform_int_distribution<int> style(0, 3);
    const int st = style(rng);
    std::vector<double> v(T * dim);
    double level = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        if (std::uniform_real_distribution<double>()(rng) < 0.15) level += 3.0 * normal(rng);
        for (std::size_t j = 0; j < dim; ++j) {
            double x = level + normal(rng);
            if (st == 1) x = std::round(x);
            if (st == 2) x = level;
            v[t * dim + j] = x;
        }
    }
    if (st == 2 && T > 0) v[0] += 0.5;  // keep the series from being fully constant
    return Series::from_rows(v, dim);
}

struct OracleSummary {
    std::size_t cases = 0;
    std::size_t mismatches = 0;
    std::string first_failure;
};

// pelt and exact_dp against exhaustive enumeration, T <= 16.
inline OracleSummary pelt_vs_brute_force(std::size_t cases, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    OracleSummary out;
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t T = std::uniform_int_distribution<std::size_t>(2, 16)(rng);
        const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 2)(rng);
        const std::size_t min_size = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
        const double penalty = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
        const Series s = random_series(rng, T, dim);
        const double gamma = paramcpd::median_heuristic_gamma(s);
        const auto brute = oracle::brute_force_segmentation(s, penalty, min_size, gamma);
        const auto p = paramcpd::pelt(s, penalty, min_size, gamma);
        const auto e = paramcpd::exact_dp(s, penalty, min_size, gamma);
        ++out.cases;
        if (p.breakpoints != brute.breakpoints || e.breakpoints != brute.breakpoints ||
            std::abs(p.total_cost - brute.total_cost) > 1e-8 * std::max(1.0, std::abs(brute.total_cost))) {
            if (out.mismatches++ == 0) {
                out.first_failure = "case " + std::to_string(c) + " T=" + std::to_string(T) +
                                    " min_size=" + std::to_string(min_size);
            }
        }
    }
    return out;
}

// pelt against exact_dp on longer series.
inline OracleSummary pelt_vs_exact(std::size_t cases, std::size_t max_T, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    OracleSummary out;
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t T = std::uniform_int_distribution<std::size_t>(4, max_T)(rng);
        const std::size_t min_size = std::uniform_int_distribution<std::size_t>(1, 25)(rng);
        const Series s = random_series(rng, T);
        const double penalty = paramcpd::auto_penalty(s, std::uniform_real_distribution<double>(0.2, 5.0)(rng));
        const auto p = paramcpd::pelt(s, penalty, min_size);
        const auto e = paramcpd::exact_dp(s, penalty, min_size);
        ++out.cases;
        if (p.breakpoints != e.breakpoints || std::abs(p.total_cost - e.total_cost) > 1e-9 * std::max(1.0, std::abs(e.total_cost))) {
            if (out.mismatches++ == 0) {
                out.first_failure = "case " + std::to_string(c) + " T=" + std::to_string(T);
            }
        }
    }
    return out;
}

// Relative error with a floor on the denominator, so coordinates whose true
// gradient is ~0 are judged on absolute error instead.
inline constexpr double kGradFloor = 1e-6;

inline double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kGradFloor});
}

struct GradCase {
    paramcpd::PosteriorModel model;
    std::vector<paramcpd::LorenzParams> thetas;
    std::vector<double> features;
    paramcpd::BatchView view() const { return {thetas, features}; }
};

inline GradCase random_grad_case(std::mt19937_64& rng) {
    using namespace paramcpd;
    std::uniform_int_distribution<std::size_t> wdist(2, 4), hdist(3, 8), kdist(1, 4), bdist(1, 6);
    MdnConfig cfg;
    const std::size_t w = wdist(rng);
    cfg.input_dim = kChannels * w;
    cfg.hidden = {hdist(rng)};
    if (rng() % 2) cfg.hidden.push_back(hdist(rng));
    cfg.n_components = kdist(rng);
    cfg.activation = rng() % 2 ? Activation::tanh : Activation::softplus;
    PriorSpec prior;
    GradCase gc{PosteriorModel::initialized(cfg, prior, ChannelStats{}, w, rng()), {}, {}};
    // Perturb all weights (including zero-initialized biases) so nothing sits at a special point.
    std::normal_distribution<double> normal(0.0, 0.3);
    for (double& v : gc.model.weights()) v += normal(rng);
    const std::size_t B = bdist(rng);
    std::normal_distribution<double> feat;
    for (std::size_t b = 0; b < B; ++b) {
        gc.thetas.push_back(sample_prior(prior, rng()));
        for (std::size_t i = 0; i < cfg.input_dim; ++i) gc.features.push_back(feat(rng));
    }
    return gc;
}

// Worst relative error over all coordinates of `cases` random instances.
inline double gradient_check(std::size_t cases, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (std::size_t c = 0; c < cases; ++c) {
        const GradCase gc = random_grad_case(rng);
        const auto g = paramcpd::grad_nll(gc.model, gc.view());
        const auto fd = oracle::fd_gradient(gc.model, gc.view());
        for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, relative_error(g[i], fd[i]));
    }
    return worst;
}

inline std::vector<std::size_t> random_sorted_points(std::mt19937_64& rng, std::size_t n, std::size_t T) {
    std::uniform_int_distribution<std::size_t> pos(0, T - 1);
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(pos(rng));
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

struct MatchSummary {
    std::size_t cases = 0;
    std::size_t not_maximal = 0;
    std::size_t invalid = 0;
};

// Greedy matching against the exhaustive maximum-cardinality oracle.
inline MatchSummary greedy_vs_max_matching(std::size_t cases, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    MatchSummary out;
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t T = std::uniform_int_distribution<std::size_t>(10, 200)(rng);
        const auto preds = random_sorted_points(rng, std::uniform_int_distribution<std::size_t>(0, 7)(rng), T);
        const auto truths = random_sorted_points(rng, std::uniform_int_distribution<std::size_t>(0, 7)(rng), T);
        const std::size_t delta = std::uniform_int_distribution<std::size_t>(0, 30)(rng);
        const auto m = paramcpd::match(preds, truths, delta);
        ++out.cases;
        if (m.matched.size() != oracle::max_matching(preds, truths, delta)) ++out.not_maximal;
        std::vector<std::size_t> ps, ts;
        for (const auto& p : m.matched) {
            const std::size_t d = p.prediction > p.truth ? p.prediction - p.truth : p.truth - p.prediction;
            if (d > delta) ++out.invalid;
            ps.push_back(p.prediction);
            ts.push_back(p.truth);
        }
        std::sort(ps.begin(), ps.end());
        std::sort(ts.begin(), ts.end());
        if (std::adjacent_find(ps.begin(), ps.end()) != ps.end() ||
            std::adjacent_find(ts.begin(), ts.end()) != ts.end() ||
            m.matched.size() + m.false_positives.size() != preds.size() ||
            m.matched.size() + m.false_negatives.size() != truths.size()) {
            ++out.invalid;
        }
    }
    return out;
}

}  // namespace checks
