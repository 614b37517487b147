#include "paramcpd/npe.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "paramcpd/errors.hpp"
#include "paramcpd/random.hpp"
#include "paramcpd/record_io.hpp"

namespace paramcpd {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMatMap = Eigen::Map<const MatrixXd>;
using ConstVecMap = Eigen::Map<const VectorXd>;

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr std::size_t kEvalChunk = 1024;
}  // namespace

std::string_view to_string(Activation a) {
    return a == Activation::tanh ? "tanh" : "softplus";
}

Activation activation_from_string(std::string_view name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "softplus") return Activation::softplus;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::size_t MdnConfig::n_weights() const {
    std::size_t n = 0;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        n += h * in + h;
        in = h;
    }
    return n + output_dim() * in + output_dim();
}

void MdnConfig::validate() const {
    if (n_components < 1) throw ConfigError("mixture needs at least one component");
    if (theta_dim != 3) throw ConfigError("theta_dim must be 3");
    if (input_dim == 0) throw ConfigError("input_dim must be positive");
    for (std::size_t h : hidden) {
        if (h == 0) throw ConfigError("hidden layer sizes must be positive");
    }
}

double MixtureDensity::log_prob(const LorenzParams& theta) const {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(size());
    for (std::size_t k = 0; k < size(); ++k) {
        double lp = std::log(weights[k]);
        for (std::size_t d = 0; d < 3; ++d) {
            const double z = (theta[d] - means[k][d]) / stds[k][d];
            lp += -0.5 * z * z - std::log(stds[k][d]) - kHalfLog2Pi;
        }
        terms[k] = lp;
        best = std::max(best, lp);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
}

LorenzParams MixtureDensity::mean() const {
    LorenzParams p{0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < size(); ++k) {
        for (std::size_t d = 0; d < 3; ++d) p[d] += weights[k] * means[k][d];
    }
    return p;
}

PosteriorModel::PosteriorModel(MdnConfig config, PriorSpec prior, ChannelStats stats,
                               std::size_t w)
    : config_(std::move(config)), prior_(prior), stats_(stats), w_(w) {
    config_.validate();
    prior_.validate();
    if (config_.input_dim != kChannels * w_) {
        throw ConfigError("model input_dim must equal 4 * window length");
    }
    for (std::size_t d = 0; d < 3; ++d) {
        if (!(prior_[d].width() > 0.0)) throw ConfigError("model prior must have positive width");
    }
    weights_.assign(config_.n_weights(), 0.0);
}

PosteriorModel PosteriorModel::initialized(MdnConfig config, PriorSpec prior, ChannelStats stats,
                                           std::size_t w, std::uint64_t seed) {
    PosteriorModel model(std::move(config), prior, stats, w);
    Rng rng(seed);
    std::size_t offset = 0;
    std::size_t in = model.config_.input_dim;
    auto fill_layer = [&](std::size_t out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (std::size_t i = 0; i < out * in; ++i) model.weights_[offset + i] = u(rng);
        offset += out * in + out;  // biases stay zero
        in = out;
    };
    for (std::size_t h : model.config_.hidden) fill_layer(h);
    fill_layer(model.config_.output_dim());
    return model;
}

namespace {

struct Layer {
    const double* w;
    const double* b;
    std::size_t in;
    std::size_t out;
    std::size_t offset;
};

std::vector<Layer> layers_of(const PosteriorModel& model) {
    const auto& cfg = model.config();
    std::vector<Layer> layers;
    const double* base = model.weights().data();
    std::size_t offset = 0;
    std::size_t in = cfg.input_dim;
    auto add = [&](std::size_t out) {
        layers.push_back({base + offset, base + offset + out * in, in, out, offset});
        offset += out * in + out;
        in = out;
    };
    for (std::size_t h : cfg.hidden) add(h);
    add(cfg.output_dim());
    return layers;
}

void activate(MatrixXd& z, Activation a) {
    if (a == Activation::tanh) {
        z = z.array().tanh().matrix();
    } else {
        // softplus, stable for large |z|
        z = z.unaryExpr([](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
    }
}

// Derivative of the activation expressed through its output (tanh) or input (softplus).
MatrixXd activation_grad(const MatrixXd& pre, const MatrixXd& post, Activation a) {
    if (a == Activation::tanh) return (1.0 - post.array().square()).matrix();
    return pre.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

struct ForwardCache {
    std::vector<MatrixXd> pre;   // per layer pre-activations (hidden only, softplus needs them)
    std::vector<MatrixXd> post;  // post[0] = input, post[l] = output of hidden layer l
    MatrixXd output;
};

ForwardCache run_network(const PosteriorModel& model, const double* rows, std::size_t n,
                         bool keep_pre) {
    const auto layers = layers_of(model);
    const auto act = model.config().activation;
    ForwardCache cache;
    cache.post.emplace_back(ConstMatMap(rows, static_cast<Eigen::Index>(model.config().input_dim),
                                        static_cast<Eigen::Index>(n)));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& L = layers[l];
        // Owned copies: Eigen's kernels peel unaligned heads, so products on
        // raw maps would round differently depending on heap placement.
        const MatrixXd W = ConstMatMap(L.w, static_cast<Eigen::Index>(L.out), static_cast<Eigen::Index>(L.in));
        const VectorXd b = ConstVecMap(L.b, static_cast<Eigen::Index>(L.out));
        MatrixXd z = W * cache.post.back();
        z.colwise() += b;
        if (l + 1 == layers.size()) {
            cache.output = std::move(z);
        } else {
            if (keep_pre && act == Activation::softplus) cache.pre.push_back(z);
            activate(z, act);
            cache.post.push_back(std::move(z));
        }
    }
    return cache;
}

// Per-column head decoding in normalized coordinates.
struct Head {
    std::size_t K;
    const double* col;
    double logit(std::size_t k) const { return col[k]; }
    double mean(std::size_t k, std::size_t d) const { return col[K + 3 * k + d]; }
    double log_std_pre(std::size_t k, std::size_t d) const { return col[4 * K + 3 * k + d]; }
};

void log_softmax(const Head& h, std::vector<double>& out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < h.K; ++k) mx = std::max(mx, h.logit(k));
    double acc = 0.0;
    for (std::size_t k = 0; k < h.K; ++k) acc += std::exp(h.logit(k) - mx);
    const double lse = mx + std::log(acc);
    for (std::size_t k = 0; k < h.K; ++k) out[k] = h.logit(k) - lse;
}

void check_batch(const PosteriorModel& model, const BatchView& batch) {
    if (batch.thetas.empty()) throw std::invalid_argument("nll_loss: empty batch");
    if (batch.features.size() != batch.thetas.size() * model.config().input_dim) {
        throw std::invalid_argument("nll_loss: feature dimension mismatch");
    }
}

// Loss over one chunk and (optionally) d(sum of per-sample losses)/d(output).
double head_loss(const PosteriorModel& model, const MatrixXd& output,
                 std::span<const LorenzParams> thetas, MatrixXd* d_output) {
    const std::size_t K = model.config().n_components;
    std::array<double, 3> half{}, mid{}, floor_norm{};
    double log_half_sum = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
        half[d] = model.half_width(d);
        mid[d] = model.center(d);
        floor_norm[d] = kStdFloor / half[d];
        log_half_sum += std::log(half[d]);
    }
    if (d_output) d_output->resize(output.rows(), output.cols());
    std::vector<double> logw(K), lp(K);
    double total = 0.0;
    for (Eigen::Index b = 0; b < output.cols(); ++b) {
        const Head h{K, output.col(b).data()};
        log_softmax(h, logw);
        std::array<double, 3> u{};
        for (std::size_t d = 0; d < 3; ++d) u[d] = (thetas[b][d] - mid[d]) / half[d];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            double acc = logw[k];
            for (std::size_t d = 0; d < 3; ++d) {
                const double s = std::max(std::exp(h.log_std_pre(k, d)), floor_norm[d]);
                const double z = (u[d] - h.mean(k, d)) / s;
                acc += -0.5 * z * z - std::log(s) - kHalfLog2Pi;
            }
            lp[k] = acc;
            mx = std::max(mx, acc);
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += std::exp(lp[k] - mx);
        const double lse = mx + std::log(sum);
        total += -lse + log_half_sum;
        if (!d_output) continue;
        double* g = d_output->col(b).data();
        for (std::size_t k = 0; k < K; ++k) {
            const double r = std::exp(lp[k] - lse);
            g[k] = std::exp(logw[k]) - r;
            for (std::size_t d = 0; d < 3; ++d) {
                const double raw = std::exp(h.log_std_pre(k, d));
                const double s = std::max(raw, floor_norm[d]);
                const double diff = u[d] - h.mean(k, d);
                g[K + 3 * k + d] = -r * diff / (s * s);
                g[4 * K + 3 * k + d] = raw > floor_norm[d] ? -r * (diff * diff / (s * s) - 1.0) : 0.0;
            }
        }
    }
    return total;
}

}  // namespace

std::vector<MixtureDensity> PosteriorModel::forward_rows(std::span<const double> rows,
                                                         std::size_t n) const {
    if (rows.size() != n * config_.input_dim) {
        throw std::invalid_argument("forward: feature dimension mismatch");
    }
    const std::size_t K = config_.n_components;
    std::vector<MixtureDensity> out;
    out.reserve(n);
    std::vector<double> logw(K);
    for (std::size_t start = 0; start < n; start += kEvalChunk) {
        const std::size_t m = std::min(kEvalChunk, n - start);
        const ForwardCache cache =
            run_network(*this, rows.data() + start * config_.input_dim, m, false);
        for (std::size_t b = 0; b < m; ++b) {
            const Head h{K, cache.output.col(static_cast<Eigen::Index>(b)).data()};
            log_softmax(h, logw);
            MixtureDensity md;
            md.weights.resize(K);
            md.means.resize(K);
            md.stds.resize(K);
            for (std::size_t k = 0; k < K; ++k) {
                md.weights[k] = std::exp(logw[k]);
                for (std::size_t d = 0; d < 3; ++d) {
                    const double hw = half_width(d);
                    md.means[k][d] = center(d) + hw * h.mean(k, d);
                    md.stds[k][d] = std::max(hw * std::exp(h.log_std_pre(k, d)), kStdFloor);
                }
            }
            out.push_back(std::move(md));
        }
    }
    return out;
}

MixtureDensity forward(const PosteriorModel& model, const WindowFeatures& features) {
    if (features.values.size() != model.config().input_dim) {
        throw std::invalid_argument("forward: feature dimension mismatch");
    }
    return std::move(model.forward_rows(features.values, 1).front());
}

double nll_loss(const PosteriorModel& model, const BatchView& batch) {
    check_batch(model, batch);
    const std::size_t n = batch.thetas.size();
    const std::size_t dim = model.config().input_dim;
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += kEvalChunk) {
        const std::size_t m = std::min(kEvalChunk, n - start);
        const ForwardCache cache = run_network(model, batch.features.data() + start * dim, m, false);
        total += head_loss(model, cache.output, batch.thetas.subspan(start, m), nullptr);
    }
    const double loss = total / static_cast<double>(n);
    if (!std::isfinite(loss)) throw NumericalError("non-finite NLL");
    return loss;
}

std::vector<double> grad_nll(const PosteriorModel& model, const BatchView& batch, double* loss) {
    check_batch(model, batch);
    const std::size_t n = batch.thetas.size();
    const auto layers = layers_of(model);
    const auto act = model.config().activation;
    const ForwardCache cache = run_network(model, batch.features.data(), n, true);
    MatrixXd g;
    const double total = head_loss(model, cache.output, batch.thetas, &g);
    const double inv_n = 1.0 / static_cast<double>(n);
    if (!std::isfinite(total)) throw NumericalError("non-finite NLL");
    if (loss) *loss = total * inv_n;
    g *= inv_n;

    std::vector<double> grad(model.weights().size(), 0.0);
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Layer& L = layers[l];
        const MatrixXd& input = cache.post[l];
        const MatrixXd gW = g * input.transpose();
        const VectorXd gb = g.rowwise().sum();
        std::copy(gW.data(), gW.data() + gW.size(), grad.begin() + static_cast<std::ptrdiff_t>(L.offset));
        std::copy(gb.data(), gb.data() + gb.size(),
                  grad.begin() + static_cast<std::ptrdiff_t>(L.offset + L.out * L.in));
        if (l == 0) break;
        const MatrixXd W = ConstMatMap(L.w, static_cast<Eigen::Index>(L.out), static_cast<Eigen::Index>(L.in));
        MatrixXd d_in = W.transpose() * g;
        const MatrixXd empty;
        const MatrixXd& pre = act == Activation::softplus ? cache.pre[l - 1] : empty;
        g = d_in.cwiseProduct(activation_grad(pre, cache.post[l], act));
    }
    return grad;
}

double log_prob(const PosteriorModel& model, const WindowFeatures& features,
                const LorenzParams& theta) {
    return -nll_loss(model, BatchView{std::span<const LorenzParams>(&theta, 1), features.values});
}

std::vector<LorenzParams> sample_posterior(const MixtureDensity& density, std::size_t m,
                                           std::uint64_t seed) {
    if (m == 0) throw std::invalid_argument("sample_posterior: M must be at least 1");
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> cumulative(density.size());
    std::partial_sum(density.weights.begin(), density.weights.end(), cumulative.begin());
    std::vector<LorenzParams> draws(m);
    for (auto& draw : draws) {
        const double u = unit(rng) * cumulative.back();
        std::size_t k = 0;
        while (k + 1 < cumulative.size() && u >= cumulative[k]) ++k;
        for (std::size_t d = 0; d < 3; ++d) {
            draw[d] = density.means[k][d] + density.stds[k][d] * normal(rng);
        }
    }
    return draws;
}

std::vector<LorenzParams> sample_posterior(const PosteriorModel& model,
                                           const WindowFeatures& features, std::size_t m,
                                           std::uint64_t seed) {
    return sample_posterior(forward(model, features), m, seed);
}

namespace {

double mean_nll(const PosteriorModel& model, const TrainingSet& set,
                std::span<const std::size_t> idx) {
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t dim = set.input_dim();
    std::vector<double> features;
    std::vector<LorenzParams> thetas;
    double total = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += kEvalChunk) {
        const std::size_t m = std::min(kEvalChunk, idx.size() - start);
        features.resize(m * dim);
        thetas.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
            const auto row = set.row(idx[start + j]);
            std::copy(row.begin(), row.end(), features.begin() + static_cast<std::ptrdiff_t>(j * dim));
            thetas[j] = set.thetas[idx[start + j]];
        }
        total += nll_loss(model, {thetas, features}) * static_cast<double>(m);
    }
    return total / static_cast<double>(idx.size());
}

}  // namespace

PosteriorModel train(const TrainingSet& set, const MdnConfig& config_in,
                     const OptimizerParams& opt, std::uint64_t seed,
                     std::vector<EpochRecord>* log, const EpochCallback& on_epoch) {
    if (set.size() == 0) throw DataError("cannot train on an empty training set");
    if (opt.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(opt.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (opt.val_fraction < 0.0 || opt.val_fraction >= 1.0) {
        throw ConfigError("val_fraction must lie in [0, 1)");
    }
    MdnConfig config = config_in;
    config.input_dim = set.input_dim();
    PosteriorModel model =
        PosteriorModel::initialized(config, set.prior, set.stats, set.w, derive_seed(seed, 1));

    Rng rng(derive_seed(seed, 2));
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::floor(opt.val_fraction * static_cast<double>(set.size())));
    std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    // Tiny sets: select the checkpoint on the training split instead.
    const std::vector<std::size_t>& select = val.empty() ? tr : val;

    const std::size_t n_w = model.weights().size();
    std::vector<double> m1(n_w, 0.0), m2(n_w, 0.0);
    std::vector<double> best = std::vector<double>(model.weights().begin(), model.weights().end());
    double best_val = mean_nll(model, set, select);
    model.meta().initial_val_nll = best_val;
    std::size_t best_epoch = 0;
    const EpochRecord initial{0, mean_nll(model, set, tr), best_val};
    if (log) log->push_back(initial);
    if (on_epoch) on_epoch(initial);

    const std::size_t dim = set.input_dim();
    std::vector<double> features;
    std::vector<LorenzParams> thetas;
    std::size_t step = 0;
    std::size_t batch_index = 0;
    double last_train = initial.train_nll;
    for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        std::shuffle(tr.begin(), tr.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < tr.size(); start += opt.batch_size, ++batch_index) {
            const std::size_t m = std::min(opt.batch_size, tr.size() - start);
            features.resize(m * dim);
            thetas.resize(m);
            for (std::size_t j = 0; j < m; ++j) {
                const auto row = set.row(tr[start + j]);
                std::copy(row.begin(), row.end(), features.begin() + static_cast<std::ptrdiff_t>(j * dim));
                thetas[j] = set.thetas[tr[start + j]];
            }
            double loss = 0.0;
            std::vector<double> g;
            try {
                g = grad_nll(model, {thetas, features}, &loss);
            } catch (const NumericalError&) {
                throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) +
                                        " at batch " + std::to_string(batch_index),
                                    batch_index);
            }
            epoch_loss += loss * static_cast<double>(m);
            ++step;
            const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
            auto w = model.weights();
            for (std::size_t i = 0; i < n_w; ++i) {
                m1[i] = opt.beta1 * m1[i] + (1.0 - opt.beta1) * g[i];
                m2[i] = opt.beta2 * m2[i] + (1.0 - opt.beta2) * g[i] * g[i];
                w[i] -= opt.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + opt.epsilon);
            }
        }
        last_train = epoch_loss / static_cast<double>(tr.size());
        double v;
        try {
            v = mean_nll(model, set, select);
        } catch (const NumericalError&) {
            throw TrainingError("non-finite validation loss after epoch " + std::to_string(epoch),
                                batch_index);
        }
        const EpochRecord rec{epoch, last_train, v};
        if (log) log->push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (v < best_val) {
            best_val = v;
            best_epoch = epoch;
            best.assign(model.weights().begin(), model.weights().end());
        }
    }
    std::copy(best.begin(), best.end(), model.weights().begin());
    auto& meta = model.meta();
    meta.epochs = opt.epochs;
    meta.best_epoch = best_epoch;
    meta.best_val_nll = best_val;
    meta.final_train_nll = last_train;
    meta.seed = seed;
    return model;
}

namespace {
constexpr char kModelMagic[8] = {'P', 'C', 'P', 'D', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

void save_checkpoint(const PosteriorModel& model, const std::filesystem::path& path) {
    BinaryWriter w(path);
    const auto& cfg = model.config();
    w.bytes(kModelMagic, sizeof kModelMagic);
    w.u32(kModelVersion);
    w.u64(cfg.hidden.size());
    for (std::size_t h : cfg.hidden) w.u64(h);
    w.u64(cfg.n_components);
    w.u64(cfg.input_dim);
    w.u64(cfg.theta_dim);
    w.u32(cfg.activation == Activation::tanh ? 0 : 1);
    w.u64(model.window_length());
    write_channel_stats(w, model.norm_stats());
    write_prior(w, model.prior());
    const auto& meta = model.meta();
    w.u64(meta.epochs);
    w.u64(meta.best_epoch);
    w.f64(meta.initial_val_nll);
    w.f64(meta.best_val_nll);
    w.f64(meta.final_train_nll);
    w.u64(meta.seed);
    w.u64(model.weights().size());
    for (double v : model.weights()) w.f64(v);
    w.finish();
}

PosteriorModel load_checkpoint(const std::filesystem::path& path) {
    BinaryReader r(path);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kModelMagic, sizeof magic) != 0) {
        throw DataError(path.string() + ": not a model checkpoint");
    }
    if (const auto v = r.u32(); v != kModelVersion) {
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
    }
    MdnConfig cfg;
    const std::uint64_t n_hidden = r.u64();
    if (n_hidden > 64) throw DataError(path.string() + ": implausible layer count");
    cfg.hidden.resize(n_hidden);
    for (auto& h : cfg.hidden) h = r.u64();
    cfg.n_components = r.u64();
    cfg.input_dim = r.u64();
    cfg.theta_dim = r.u64();
    const std::uint32_t act = r.u32();
    if (act > 1) throw DataError(path.string() + ": unknown activation code");
    cfg.activation = act == 0 ? Activation::tanh : Activation::softplus;
    const std::size_t w = r.u64();
    const ChannelStats stats = read_channel_stats(r);
    const PriorSpec prior = read_prior(r);
    TrainingMeta meta;
    meta.epochs = r.u64();
    meta.best_epoch = r.u64();
    meta.initial_val_nll = r.f64();
    meta.best_val_nll = r.f64();
    meta.final_train_nll = r.f64();
    meta.seed = r.u64();
    const std::uint64_t n_weights = r.u64();
    if (cfg.theta_dim != 3 || cfg.input_dim != kChannels * w) {
        throw DataError(path.string() + ": checkpoint dimensions are inconsistent");
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    if (n_weights != cfg.n_weights()) {
        throw DataError(path.string() + ": weight count does not match architecture");
    }
    PosteriorModel model(cfg, prior, stats, w);
    for (double& v : model.weights()) v = r.f64();
    r.expect_end();
    model.meta() = meta;
    return model;
}

}  // namespace paramcpd
