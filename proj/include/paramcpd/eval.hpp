#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "paramcpd/dataset.hpp"
#include "paramcpd/npe.hpp"
#include "paramcpd/pipeline.hpp"

namespace paramcpd {

struct MatchedPair {
    std::size_t prediction;
    std::size_t truth;
};

struct MatchResult {
    std::vector<MatchedPair> matched;             // ordered by truth
    std::vector<std::size_t> false_positives;     // unmatched predictions
    std::vector<std::size_t> false_negatives;     // unmatched truths
    std::size_t delta = 0;
};

/// One-to-one greedy matching within |p - t| <= delta, nearest pairs first;
/// ties go to the earlier truth, then the earlier prediction. A pair is skipped
/// when taking it would make a maximum-cardinality matching unreachable, so the
/// result always has maximal size. Both inputs must be sorted.
MatchResult match(std::span<const std::size_t> predictions, std::span<const std::size_t> truths,
                  std::size_t delta);

struct MetricBundle {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mae_steps = 0.0;  // NaN when nothing matched
    double fp_per_1000 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t T = 0;
};

/// Zero denominators give 0 for precision, recall and F1.
MetricBundle metrics(const MatchResult& match, std::size_t T);

struct DeltaPoint {
    std::size_t delta;
    MetricBundle metrics;
};

std::vector<DeltaPoint> f1_delta_curve(std::span<const std::size_t> predictions,
                                       std::span<const std::size_t> truths, std::size_t T,
                                       std::span<const std::size_t> deltas);

/// Mean over sequences; MAE averages only sequences with at least one match.
MetricBundle average_metrics(std::span<const MetricBundle> bundles);

struct OlsFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Least-squares line y = slope * x + intercept.
OlsFit ols(std::span<const double> x, std::span<const double> y);

struct CalibrationPoint {
    double theta_true;
    double theta_hat;
};

struct KindCalibration {
    ParamKind kind = ParamKind::sigma;
    OlsFit fit;
    double mae = 0.0;
    std::vector<CalibrationPoint> points;
};

struct CalibrationReport {
    std::vector<KindCalibration> kinds;
};

KindCalibration calibrate_points(ParamKind kind, std::vector<CalibrationPoint> points);

/// Single estimate for a stationary trajectory: median over central windows
/// (first and last w/2 estimates dropped) of the per-window aggregates.
double stationary_estimate(const Trajectory& traj, const PosteriorModel& model,
                           const DetectionConfig& config, ParamKind kind);

KindCalibration calibrate(std::span<const StationarySequence> corpus, ParamKind kind,
                          const PosteriorModel& model, const DetectionConfig& config);

}  // namespace paramcpd
