#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace paramcpd {

/// T x d row-major series.
struct Series {
    std::size_t length = 0;
    std::size_t dim = 1;
    std::vector<double> values;

    static Series univariate(std::vector<double> v);
    static Series from_rows(std::span<const double> rows, std::size_t dim);
    double at(std::size_t t, std::size_t j) const { return values[t * dim + j]; }
    const double* row(std::size_t t) const { return values.data() + t * dim; }
};

struct Segmentation {
    std::vector<std::size_t> breakpoints;  // strictly increasing, in (0, T)
    double penalty = 0.0;
    double gamma = 0.0;
    std::size_t min_size = 1;
    double total_cost = 0.0;  // sum of segment costs + penalty * #breakpoints
};

/// gamma = 1 / (2 median^2) over pairwise distances of an evenly spaced
/// subsample of at most `max_points` rows.
double median_heuristic_gamma(const Series& series, std::size_t max_points = 512);

/// Gram matrix of the RBF kernel plus its 2-D prefix sums; answers arbitrary
/// segment-cost queries in O(1). Memory is O(T^2), so this is meant for
/// moderate T (the detectors themselves use an O(T) incremental form).
class KernelCostModel {
public:
    KernelCostModel(const Series& series, double gamma);

    std::size_t size() const { return n_; }
    double gamma() const { return gamma_; }
    double kernel(std::size_t i, std::size_t j) const;
    /// Sum of k(y_i, y_j) over i, j in [a, b).
    double block_sum(std::size_t a, std::size_t b) const;

private:
    std::size_t n_;
    double gamma_;
    std::vector<double> gram_;
    std::vector<double> prefix_;  // (n+1) x (n+1)
};

/// c(y[a..b)) = (b - a) - (1 / (b - a)) sum_{i,j in [a,b)} k(y_i, y_j), clamped at 0.
double rbf_cost(const KernelCostModel& model, std::size_t a, std::size_t b);

/// Penalized optimal partition with PELT pruning. Ties go to fewer
/// breakpoints, then to the lexicographically earlier set.
Segmentation pelt(const Series& series, double penalty, std::size_t min_size = 20,
                  std::optional<double> gamma = std::nullopt);

/// Same contract as pelt without pruning, O(T^2).
Segmentation exact_dp(const Series& series, double penalty, std::size_t min_size = 20,
                      std::optional<double> gamma = std::nullopt);

/// scale * log(T) * d.
/// Default constant, fixed by a sweep on held-out synthetic sequences.
inline constexpr double kDefaultPenaltyScale = 0.625;

double auto_penalty(const Series& series, double scale = kDefaultPenaltyScale);

}  // namespace paramcpd
