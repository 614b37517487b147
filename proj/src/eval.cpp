#include "paramcpd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "paramcpd/errors.hpp"

namespace paramcpd {

namespace {

std::size_t distance(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

// Maximum matching among the still-free points. Every truth sees a contiguous
// run of sorted predictions whose bounds never move left as the truth grows,
// so taking the leftmost free prediction in reach, truth by truth, is optimal.
std::size_t max_free_matching(std::span<const std::size_t> preds, std::span<const std::size_t> truths,
                              const std::vector<char>& pred_used, const std::vector<char>& truth_used,
                              std::size_t delta) {
    std::size_t count = 0;
    std::size_t pi = 0;
    for (std::size_t ti = 0; ti < truths.size(); ++ti) {
        if (truth_used[ti]) continue;
        const std::size_t t = truths[ti];
        while (pi < preds.size() && (pred_used[pi] || preds[pi] + delta < t)) ++pi;
        if (pi < preds.size() && preds[pi] <= t + delta) {
            ++count;
            ++pi;
        }
    }
    return count;
}

}  // namespace

MatchResult match(std::span<const std::size_t> preds, std::span<const std::size_t> truths,
                  std::size_t delta) {
    if (!std::is_sorted(preds.begin(), preds.end()) || !std::is_sorted(truths.begin(), truths.end())) {
        throw std::invalid_argument("match: predictions and truths must be sorted");
    }
    struct Candidate {
        std::size_t dist, ti, pi;
    };
    std::vector<Candidate> cands;
    for (std::size_t ti = 0; ti < truths.size(); ++ti) {
        for (std::size_t pi = 0; pi < preds.size(); ++pi) {
            const std::size_t dist = distance(preds[pi], truths[ti]);
            if (dist <= delta) cands.push_back({dist, ti, pi});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.dist, a.ti, a.pi) < std::tie(b.dist, b.ti, b.pi);
    });
    std::vector<char> pred_used(preds.size(), 0), truth_used(truths.size(), 0);
    // Nearest pairs first, but a pair is only taken if a maximum-cardinality
    // matching is still reachable afterwards.
    std::size_t remaining = max_free_matching(preds, truths, pred_used, truth_used, delta);
    MatchResult result;
    result.delta = delta;
    for (const auto& c : cands) {
        if (remaining == 0) break;
        if (pred_used[c.pi] || truth_used[c.ti]) continue;
        pred_used[c.pi] = truth_used[c.ti] = 1;
        const std::size_t rest = max_free_matching(preds, truths, pred_used, truth_used, delta);
        if (rest + 1 < remaining) {
            pred_used[c.pi] = truth_used[c.ti] = 0;
            continue;
        }
        remaining = rest;
        result.matched.push_back({preds[c.pi], truths[c.ti]});
    }
    std::sort(result.matched.begin(), result.matched.end(),
              [](const MatchedPair& a, const MatchedPair& b) { return a.truth < b.truth; });
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!pred_used[i]) result.false_positives.push_back(preds[i]);
    }
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (!truth_used[i]) result.false_negatives.push_back(truths[i]);
    }
    return result;
}

MetricBundle metrics(const MatchResult& m, std::size_t T) {
    MetricBundle b;
    b.tp = m.matched.size();
    b.fp = m.false_positives.size();
    b.fn = m.false_negatives.size();
    b.T = T;
    const auto tp = static_cast<double>(b.tp);
    b.precision = (b.tp + b.fp) > 0 ? tp / static_cast<double>(b.tp + b.fp) : 0.0;
    b.recall = (b.tp + b.fn) > 0 ? tp / static_cast<double>(b.tp + b.fn) : 0.0;
    const double pr = b.precision + b.recall;
    b.f1 = pr > 0.0 ? 2.0 * b.precision * b.recall / pr : 0.0;
    if (b.tp > 0) {
        double acc = 0.0;
        for (const auto& p : m.matched) {
            acc += static_cast<double>(distance(p.prediction, p.truth));
        }
        b.mae_steps = acc / tp;
    } else {
        b.mae_steps = std::numeric_limits<double>::quiet_NaN();
    }
    b.fp_per_1000 = T > 0 ? 1000.0 * static_cast<double>(b.fp) / static_cast<double>(T) : 0.0;
    return b;
}

std::vector<DeltaPoint> f1_delta_curve(std::span<const std::size_t> preds,
                                       std::span<const std::size_t> truths, std::size_t T,
                                       std::span<const std::size_t> deltas) {
    std::vector<DeltaPoint> out;
    out.reserve(deltas.size());
    for (std::size_t d : deltas) out.push_back({d, metrics(match(preds, truths, d), T)});
    return out;
}

MetricBundle average_metrics(std::span<const MetricBundle> bundles) {
    MetricBundle avg;
    if (bundles.empty()) return avg;
    const auto n = static_cast<double>(bundles.size());
    double mae = 0.0;
    std::size_t mae_n = 0;
    for (const auto& b : bundles) {
        avg.precision += b.precision / n;
        avg.recall += b.recall / n;
        avg.f1 += b.f1 / n;
        avg.fp_per_1000 += b.fp_per_1000 / n;
        avg.tp += b.tp;
        avg.fp += b.fp;
        avg.fn += b.fn;
        avg.T += b.T;
        if (b.tp > 0) {
            mae += b.mae_steps;
            ++mae_n;
        }
    }
    avg.mae_steps = mae_n > 0 ? mae / static_cast<double>(mae_n)
                              : std::numeric_limits<double>::quiet_NaN();
    return avg;
}

OlsFit ols(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw DataError("OLS needs at least two paired points");
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw DataError("OLS regressor has zero variance");
    OlsFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (fit.slope * x[i] + fit.intercept);
        ss_res += r * r;
    }
    if (syy > 0.0) {
        fit.r2 = 1.0 - ss_res / syy;
    } else {
        fit.r2 = ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    }
    // Two points are always interpolated exactly.
    if (x.size() == 2) fit.r2 = 1.0;
    return fit;
}

KindCalibration calibrate_points(ParamKind kind, std::vector<CalibrationPoint> points) {
    KindCalibration cal;
    cal.kind = kind;
    std::vector<double> xs, ys;
    double abs_err = 0.0;
    for (const auto& p : points) {
        xs.push_back(p.theta_true);
        ys.push_back(p.theta_hat);
        abs_err += std::abs(p.theta_hat - p.theta_true);
    }
    cal.fit = ols(xs, ys);
    cal.mae = abs_err / static_cast<double>(points.size());
    cal.points = std::move(points);
    return cal;
}

double stationary_estimate(const Trajectory& traj, const PosteriorModel& model,
                           const DetectionConfig& config, ParamKind kind) {
    const ParamTrajectory pt = estimate_trajectory(traj, model, config);
    const std::size_t skip = config.w / 2;
    if (pt.size() <= 2 * skip) {
        throw DataError("trajectory too short to exclude w/2 boundary windows on each side");
    }
    std::vector<double> central;
    central.reserve(pt.size() - 2 * skip);
    for (std::size_t i = skip; i + skip < pt.size(); ++i) central.push_back(pt.estimates[i][index_of(kind)]);
    return aggregate(central, Aggregator::median);
}

KindCalibration calibrate(std::span<const StationarySequence> corpus, ParamKind kind,
                          const PosteriorModel& model, const DetectionConfig& config) {
    if (corpus.empty()) throw DataError("calibration corpus is empty");
    std::vector<CalibrationPoint> points;
    points.reserve(corpus.size());
    for (const auto& seq : corpus) {
        points.push_back({seq.params[index_of(kind)],
                          stationary_estimate(seq.trajectory, model, config, kind)});
    }
    return calibrate_points(kind, std::move(points));
}

}  // namespace paramcpd
