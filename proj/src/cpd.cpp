#include "paramcpd/cpd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace paramcpd {

Series Series::univariate(std::vector<double> v) {
    Series s;
    s.length = v.size();
    s.dim = 1;
    s.values = std::move(v);
    return s;
}

Series Series::from_rows(std::span<const double> rows, std::size_t dim) {
    if (dim == 0 || rows.size() % dim != 0) throw std::invalid_argument("Series: bad row layout");
    Series s;
    s.dim = dim;
    s.length = rows.size() / dim;
    s.values.assign(rows.begin(), rows.end());
    return s;
}

namespace {

double sq_dist(const Series& s, std::size_t i, std::size_t j) {
    double acc = 0.0;
    const double* a = s.row(i);
    const double* b = s.row(j);
    for (std::size_t k = 0; k < s.dim; ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    return acc;
}

void check_series(const Series& s) {
    if (s.dim == 0 || s.values.size() != s.length * s.dim) {
        throw std::invalid_argument("series shape does not match its values");
    }
    for (double v : s.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("series contains non-finite values");
    }
}

}  // namespace

double median_heuristic_gamma(const Series& s, std::size_t max_points) {
    check_series(s);
    const std::size_t n = std::min(s.length, std::max<std::size_t>(2, max_points));
    if (s.length < 2) return 1.0;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = (n == 1) ? 0 : i * (s.length - 1) / (n - 1);
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) dists.push_back(std::sqrt(sq_dist(s, idx[i], idx[j])));
    }
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    double med = *mid;
    if (!(med > 0.0)) {
        // Mostly-constant series: fall back to the mean nonzero distance.
        double sum = 0.0;
        std::size_t cnt = 0;
        for (double d : dists) {
            if (d > 0.0) {
                sum += d;
                ++cnt;
            }
        }
        if (cnt == 0) return 1.0;
        med = sum / static_cast<double>(cnt);
    }
    return 1.0 / (2.0 * med * med);
}

KernelCostModel::KernelCostModel(const Series& series, double gamma)
    : n_(series.length), gamma_(gamma), gram_(n_ * n_), prefix_((n_ + 1) * (n_ + 1), 0.0) {
    check_series(series);
    if (!(gamma > 0.0)) throw std::invalid_argument("kernel bandwidth must be positive");
    for (std::size_t i = 0; i < n_; ++i) {
        gram_[i * n_ + i] = 1.0;
        for (std::size_t j = i + 1; j < n_; ++j) {
            const double k = std::exp(-gamma_ * sq_dist(series, i, j));
            gram_[i * n_ + j] = k;
            gram_[j * n_ + i] = k;
        }
    }
    const std::size_t m = n_ + 1;
    for (std::size_t i = 1; i <= n_; ++i) {
        double row = 0.0;
        for (std::size_t j = 1; j <= n_; ++j) {
            row += gram_[(i - 1) * n_ + (j - 1)];
            prefix_[i * m + j] = prefix_[(i - 1) * m + j] + row;
        }
    }
}

double KernelCostModel::kernel(std::size_t i, std::size_t j) const { return gram_[i * n_ + j]; }

double KernelCostModel::block_sum(std::size_t a, std::size_t b) const {
    const std::size_t m = n_ + 1;
    return prefix_[b * m + b] - prefix_[a * m + b] - prefix_[b * m + a] + prefix_[a * m + a];
}

double rbf_cost(const KernelCostModel& model, std::size_t a, std::size_t b) {
    if (!(a < b) || b > model.size()) throw std::out_of_range("rbf_cost: need 0 <= a < b <= T");
    const double len = static_cast<double>(b - a);
    return std::max(0.0, len - model.block_sum(a, b) / len);
}

double auto_penalty(const Series& series, double scale) {
    if (series.length < 2) return 0.0;
    return scale * std::log(static_cast<double>(series.length)) * static_cast<double>(series.dim);
}

namespace {

bool nearly_equal(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

// Incremental optimal-partition solver. For every live candidate start tau it
// keeps W(tau, t) = sum of kernel values over [tau, t)^2, updated in O(t - min tau)
// per step from one fresh kernel column, so memory stays O(T).
class PartitionSolver {
public:
    PartitionSolver(const Series& s, double penalty, std::size_t min_size, double gamma, bool prune)
        : s_(s), pen_(penalty), min_size_(min_size), gamma_(gamma), prune_(prune) {}

    Segmentation run() {
        const std::size_t T = s_.length;
        Segmentation out;
        out.penalty = pen_;
        out.gamma = gamma_;
        out.min_size = min_size_;

        F_.assign(T + 1, std::numeric_limits<double>::infinity());
        count_.assign(T + 1, 0);
        back_.assign(T + 1, 0);
        F_[0] = -pen_;
        count_[0] = -1;
        cands_.push_back({0, 0.0, std::numeric_limits<std::size_t>::max()});

        for (std::size_t t = 1; t <= T; ++t) {
            absorb_point(t - 1);
            if (t == T || t >= min_size_) evaluate(t);
            if (prune_) {
                std::erase_if(cands_, [t](const Candidate& c) { return c.expire <= t + 1; });
            }
            if (t >= min_size_ && t + min_size_ <= T && std::isfinite(F_[t])) {
                cands_.push_back({t, 0.0, std::numeric_limits<std::size_t>::max()});
            }
        }

        if (!std::isfinite(F_[T])) {
            // Shorter than one minimum-size segment: a single segment.
            out.total_cost = whole_series_cost();
            return out;
        }
        out.breakpoints = path_to(T);
        out.total_cost = F_[T];
        return out;
    }

private:
    struct Candidate {
        std::size_t tau;
        double within;  // W(tau, t)
        std::size_t expire;
    };

    double kernel(std::size_t i, std::size_t j) const {
        return std::exp(-gamma_ * sq_dist(s_, i, j));
    }

    // Extend every candidate segment by point p.
    void absorb_point(std::size_t p) {
        double suffix = 0.0;
        std::size_t i = p;
        for (auto it = cands_.rbegin(); it != cands_.rend(); ++it) {
            while (i > it->tau) {
                --i;
                suffix += kernel(i, p);
            }
            it->within += 2.0 * suffix + 1.0;
        }
    }

    double segment_cost(const Candidate& c, std::size_t t) const {
        const double len = static_cast<double>(t - c.tau);
        return std::max(0.0, len - c.within / len);
    }

    std::vector<std::size_t> path_to(std::size_t t) const {
        std::vector<std::size_t> path;
        while (t > 0) {
            const std::size_t tau = back_[t];
            if (tau > 0) path.push_back(tau);
            t = tau;
        }
        std::reverse(path.begin(), path.end());
        return path;
    }

    // True when (value, count, path via tau) beats the incumbent.
    bool better(double value, long count, std::size_t tau, double best_value, long best_count,
                std::size_t best_tau) const {
        if (!nearly_equal(value, best_value)) return value < best_value;
        if (count != best_count) return count < best_count;
        auto a = path_to(tau);
        if (tau > 0) a.push_back(tau);
        auto b = path_to(best_tau);
        if (best_tau > 0) b.push_back(best_tau);
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
    }

    void evaluate(std::size_t t) {
        double best = std::numeric_limits<double>::infinity();
        long best_count = 0;
        std::size_t best_tau = 0;
        bool found = false;
        for (const Candidate& c : cands_) {
            if (t - c.tau < min_size_ || !std::isfinite(F_[c.tau])) continue;
            const double v = F_[c.tau] + segment_cost(c, t) + pen_;
            const long cnt = count_[c.tau] + 1;
            if (!found || better(v, cnt, c.tau, best, best_count, best_tau)) {
                best = v;
                best_count = cnt;
                best_tau = c.tau;
                found = true;
            }
        }
        if (!found) return;
        F_[t] = best;
        count_[t] = best_count;
        back_[t] = best_tau;
        if (!prune_) return;
        // F(tau) + c(tau, t) > F(t) implies tau loses to t for every end
        // t' >= t + min_size, because the kernel cost is superadditive.
        for (Candidate& c : cands_) {
            if (t - c.tau < min_size_ || !std::isfinite(F_[c.tau])) continue;
            const double v = F_[c.tau] + segment_cost(c, t);
            if (v > best && !nearly_equal(v, best)) c.expire = std::min(c.expire, t + min_size_);
        }
    }

    double whole_series_cost() const {
        const std::size_t T = s_.length;
        double w = 0.0;
        for (std::size_t i = 0; i < T; ++i) {
            w += 1.0;
            for (std::size_t j = i + 1; j < T; ++j) w += 2.0 * kernel(i, j);
        }
        const double len = static_cast<double>(T);
        return T == 0 ? 0.0 : std::max(0.0, len - w / len);
    }

    const Series& s_;
    double pen_;
    std::size_t min_size_;
    double gamma_;
    bool prune_;
    std::vector<double> F_;
    std::vector<long> count_;
    std::vector<std::size_t> back_;
    std::vector<Candidate> cands_;
};

Segmentation solve(const Series& series, double penalty, std::size_t min_size,
                   std::optional<double> gamma, bool prune) {
    check_series(series);
    if (!(penalty >= 0.0) || !std::isfinite(penalty)) {
        throw std::invalid_argument("penalty must be finite and non-negative");
    }
    if (min_size < 1) throw std::invalid_argument("min_size must be at least 1");
    if (series.length < 1) throw std::invalid_argument("cannot segment an empty series");
    const double g = gamma ? *gamma : median_heuristic_gamma(series);
    if (!(g > 0.0) || !std::isfinite(g)) throw std::invalid_argument("gamma must be positive");
    return PartitionSolver(series, penalty, min_size, g, prune).run();
}

}  // namespace

Segmentation pelt(const Series& series, double penalty, std::size_t min_size,
                  std::optional<double> gamma) {
    return solve(series, penalty, min_size, gamma, true);
}

Segmentation exact_dp(const Series& series, double penalty, std::size_t min_size,
                      std::optional<double> gamma) {
    return solve(series, penalty, min_size, gamma, false);
}

}  // namespace paramcpd
