#include "paramcpd/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "paramcpd/record_io.hpp"
#include "paramcpd/errors.hpp"
#include "paramcpd/parallel.hpp"
#include "paramcpd/random.hpp"

namespace paramcpd {

namespace fs = std::filesystem;
using nlohmann::json;

bool PriorSpec::contains(const LorenzParams& p) const {
    for (std::size_t d = 0; d < 3; ++d) {
        if (!bounds[d].contains(p[d])) return false;
    }
    return true;
}

void PriorSpec::validate() const {
    for (std::size_t d = 0; d < 3; ++d) {
        const auto& b = bounds[d];
        if (!(b.lo <= b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.lo > 0.0)) {
            throw ConfigError("prior bounds for " +
                              std::string(to_string(static_cast<ParamKind>(d))) +
                              " must satisfy 0 < lo <= hi");
        }
    }
}

LorenzParams sample_prior(const PriorSpec& prior, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    LorenzParams p;
    for (std::size_t d = 0; d < 3; ++d) p[d] = prior[d].lo + prior[d].width() * unit(rng);
    return p;
}

LorenzParams sample_prior(const PriorSpec& prior, std::uint64_t seed) {
    Rng rng(seed);
    return sample_prior(prior, rng);
}

void extract_window_into(const Trajectory& traj, std::size_t end_index, std::size_t w,
                         std::span<double> out) {
    if (w == 0 || end_index + 1 < w || end_index >= traj.size()) {
        std::ostringstream msg;
        msg << "window end " << end_index << " with w=" << w << " outside trajectory of length "
            << traj.size();
        throw std::out_of_range(msg.str());
    }
    if (out.size() != kChannels * w) throw std::invalid_argument("window buffer size mismatch");
    const std::size_t start = end_index + 1 - w;
    for (std::size_t i = 0; i < w; ++i) {
        const State& s = traj.states[start + i];
        out[i] = s.x;
        out[w + i] = s.y;
        out[2 * w + i] = s.z;
        out[3 * w + i] = s.y - s.x;
    }
}

RawWindow extract_window(const Trajectory& traj, std::size_t end_index, std::size_t w) {
    RawWindow raw;
    raw.w = w;
    raw.data.resize(kChannels * w);
    extract_window_into(traj, end_index, w, raw.data);
    return raw;
}

ChannelStats compute_channel_stats(std::span<const double> blocks, std::size_t w) {
    const std::size_t block = kChannels * w;
    if (w == 0 || blocks.empty() || blocks.size() % block != 0) {
        throw std::invalid_argument("compute_channel_stats: malformed window buffer");
    }
    const std::size_t n_blocks = blocks.size() / block;
    const double count = static_cast<double>(n_blocks * w);
    ChannelStats stats;
    for (std::size_t c = 0; c < kChannels; ++c) {
        double sum = 0.0;
        for (std::size_t b = 0; b < n_blocks; ++b) {
            const double* p = blocks.data() + b * block + c * w;
            for (std::size_t i = 0; i < w; ++i) sum += p[i];
        }
        const double mean = sum / count;
        double ss = 0.0;
        for (std::size_t b = 0; b < n_blocks; ++b) {
            const double* p = blocks.data() + b * block + c * w;
            for (std::size_t i = 0; i < w; ++i) ss += (p[i] - mean) * (p[i] - mean);
        }
        const double sd = std::sqrt(ss / count);
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            throw DataError("channel " + std::to_string(c) +
                            " has zero variance; corpus is degenerate");
        }
        stats.mean[c] = mean;
        stats.std[c] = sd;
    }
    return stats;
}

void standardize_in_place(std::span<double> block, std::size_t w, const ChannelStats& stats) {
    if (block.size() != kChannels * w) throw std::invalid_argument("block size mismatch");
    for (std::size_t c = 0; c < kChannels; ++c) {
        if (!(stats.std[c] > 0.0)) throw DataError("normalization std must be positive");
        const double inv = 1.0 / stats.std[c];
        for (std::size_t i = 0; i < w; ++i) {
            double& v = block[c * w + i];
            v = (v - stats.mean[c]) * inv;
        }
    }
}

WindowFeatures featurize(const RawWindow& raw, const ChannelStats& stats) {
    WindowFeatures f;
    f.w = raw.w;
    f.values = raw.data;
    f.stats = stats;
    standardize_in_place(f.values, f.w, stats);
    for (double v : f.values) {
        if (!std::isfinite(v)) throw DataError("non-finite feature after standardization");
    }
    return f;
}

TrainingSet build_training_set(const TrainingSetConfig& cfg, std::uint64_t seed,
                               std::size_t jobs) {
    cfg.prior.validate();
    if (cfg.n_pairs == 0) throw ConfigError("training set needs at least one pair");
    if (cfg.w < 2) throw ConfigError("window length must be at least 2");
    if (cfg.sim_steps < cfg.w + cfg.burn_in) {
        throw ConfigError("sim_steps must be at least w + burn_in");
    }
    const std::size_t dim = kChannels * cfg.w;
    TrainingSet set;
    set.prior = cfg.prior;
    set.w = cfg.w;
    set.thetas.resize(cfg.n_pairs);
    set.features.resize(cfg.n_pairs * dim);
    std::vector<std::size_t> rejections(cfg.n_pairs, 0);
    const std::size_t kMaxAttempts = 100;

    parallel_for(cfg.n_pairs, jobs, [&](std::size_t i) {
        const std::uint64_t pair_seed = derive_seed(seed, i);
        for (std::size_t attempt = 0;; ++attempt) {
            if (attempt == kMaxAttempts) {
                throw DataError("training pair " + std::to_string(i) +
                                " diverged on every prior draw");
            }
            Rng rng(derive_seed(pair_seed, attempt));
            const LorenzParams theta = sample_prior(cfg.prior, rng);
            const State init = perturbed_initial_state(rng());
            const std::uint64_t noise_seed = rng();
            try {
                Trajectory full = integrate(init, theta, cfg.sim_steps, cfg.dt);
                Trajectory post;
                post.dt = cfg.dt;
                post.t0 = static_cast<double>(cfg.burn_in) * cfg.dt;
                post.states.assign(full.states.begin() + static_cast<std::ptrdiff_t>(cfg.burn_in),
                                   full.states.end());
                post = add_noise(post, {cfg.eta, noise_seed});
                std::uniform_int_distribution<std::size_t> pick(cfg.w - 1, post.size() - 1);
                extract_window_into(post, pick(rng), cfg.w,
                                    std::span<double>(set.features.data() + i * dim, dim));
                set.thetas[i] = theta;
                return;
            } catch (const DivergenceError&) {
                ++rejections[i];
            }
        }
    });

    for (std::size_t r : rejections) set.rejected += r;
    if (static_cast<double>(set.rejected) >
        cfg.max_rejection_fraction * static_cast<double>(cfg.n_pairs)) {
        throw DataError("prior produced " + std::to_string(set.rejected) +
                        " divergent simulations (over budget); prior covers non-viable dynamics");
    }
    set.stats = compute_channel_stats(set.features, cfg.w);
    for (std::size_t i = 0; i < cfg.n_pairs; ++i) {
        standardize_in_place(std::span<double>(set.features.data() + i * dim, dim), cfg.w,
                             set.stats);
    }
    return set;
}

namespace {

constexpr char kTrainingMagic[8] = {'P', 'C', 'P', 'D', 'T', 'S', 'E', 'T'};
constexpr std::uint32_t kTrainingVersion = 1;

void write_stats(BinaryWriter& w, const ChannelStats& s) {
    for (double v : s.mean) w.f64(v);
    for (double v : s.std) w.f64(v);
}

ChannelStats read_stats(BinaryReader& r) {
    ChannelStats s;
    for (double& v : s.mean) v = r.f64();
    for (double& v : s.std) v = r.f64();
    return s;
}

}  // namespace

void write_prior(BinaryWriter& w, const PriorSpec& p) {
    for (const auto& b : p.bounds) {
        w.f64(b.lo);
        w.f64(b.hi);
    }
}

PriorSpec read_prior(BinaryReader& r) {
    PriorSpec p;
    for (auto& b : p.bounds) {
        b.lo = r.f64();
        b.hi = r.f64();
    }
    return p;
}

void write_channel_stats(BinaryWriter& w, const ChannelStats& s) { write_stats(w, s); }
ChannelStats read_channel_stats(BinaryReader& r) { return read_stats(r); }

void save_training_set(const TrainingSet& set, const fs::path& path) {
    BinaryWriter w(path);
    w.bytes(kTrainingMagic, sizeof kTrainingMagic);
    w.u32(kTrainingVersion);
    w.u64(set.w);
    w.u64(set.size());
    w.u64(set.rejected);
    write_prior(w, set.prior);
    write_stats(w, set.stats);
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (std::size_t d = 0; d < 3; ++d) w.f64(set.thetas[i][d]);
        for (double v : set.row(i)) w.f64(v);
    }
    w.finish();
}

TrainingSet load_training_set(const fs::path& path) {
    BinaryReader r(path);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kTrainingMagic, sizeof magic) != 0) {
        throw DataError(path.string() + ": not a training-set file");
    }
    if (const auto v = r.u32(); v != kTrainingVersion) {
        throw DataError(path.string() + ": unsupported training-set version " + std::to_string(v));
    }
    TrainingSet set;
    set.w = r.u64();
    const std::size_t n = r.u64();
    set.rejected = r.u64();
    set.prior = read_prior(r);
    set.stats = read_stats(r);
    set.thetas.resize(n);
    set.features.resize(n * set.input_dim());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < 3; ++d) set.thetas[i][d] = r.f64();
        for (std::size_t j = 0; j < set.input_dim(); ++j) set.features[i * set.input_dim() + j] = r.f64();
    }
    r.expect_end();
    return set;
}

namespace {

LorenzParams with_value(ParamKind kind, double value) {
    LorenzParams p = LorenzParams::classic();
    p[index_of(kind)] = value;
    return p;
}

double uniform_in(const Interval& iv, Rng& rng) {
    return iv.lo + iv.width() * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

void check_corpus_config(const CorpusConfig& cfg) {
    if (cfg.segments == 0 || cfg.segment_length == 0) {
        throw ConfigError("corpus needs at least one non-empty segment");
    }
    if (cfg.stationary_length == 0) throw ConfigError("stationary length must be positive");
    if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
    if (cfg.eta < 0.0) throw ConfigError("eta must be non-negative");
}

}  // namespace

std::vector<LabeledSequence> build_changepoint_corpus(ParamKind kind, std::size_t n_sequences,
                                                      std::uint64_t seed,
                                                      const CorpusConfig& cfg, std::size_t jobs) {
    check_corpus_config(cfg);
    const std::size_t d = index_of(kind);
    std::vector<LabeledSequence> corpus(n_sequences);
    parallel_for(n_sequences, jobs, [&](std::size_t n) {
        const std::uint64_t seq_seed = derive_seed(derive_seed(seed, 1000 + d), n);
        Rng rng(seq_seed);
        SegmentSchedule schedule;
        schedule.burn_in = cfg.burn_in;
        LabeledSequence& seq = corpus[n];
        for (std::size_t k = 0; k < cfg.segments; ++k) {
            const Interval& iv = (k % 2 == 0) ? cfg.ranges.low[d] : cfg.ranges.high[d];
            const double v = uniform_in(iv, rng);
            schedule.segments.push_back({with_value(kind, v), cfg.segment_length});
            seq.segment_values.push_back(v);
        }
        const State init = perturbed_initial_state(rng());
        const NoiseSpec noise{cfg.eta, rng()};
        ScheduleRun run = simulate_schedule(schedule, init, cfg.dt, noise);
        seq.trajectory = std::move(run.trajectory);
        seq.changepoints = std::move(run.changepoints);
        seq.seed = seq_seed;
    });
    return corpus;
}

std::vector<StationarySequence> build_stationary_corpus(ParamKind kind,
                                                        std::size_t n_trajectories,
                                                        std::uint64_t seed,
                                                        const CorpusConfig& cfg,
                                                        std::size_t jobs) {
    check_corpus_config(cfg);
    const std::size_t d = index_of(kind);
    const Interval low = cfg.ranges.low[d];
    const Interval high = cfg.ranges.high[d];
    std::vector<StationarySequence> corpus(n_trajectories);
    parallel_for(n_trajectories, jobs, [&](std::size_t n) {
        const std::uint64_t seq_seed = derive_seed(derive_seed(seed, 2000 + d), n);
        Rng rng(seq_seed);
        // Uniform over the union of the two ranges.
        const double u = std::uniform_real_distribution<double>(0.0, low.width() + high.width())(rng);
        const double v = (u < low.width()) ? low.lo + u : high.lo + (u - low.width());
        SegmentSchedule schedule;
        schedule.burn_in = cfg.burn_in;
        schedule.segments.push_back({with_value(kind, v), cfg.stationary_length});
        const State init = perturbed_initial_state(rng());
        const NoiseSpec noise{cfg.eta, rng()};
        StationarySequence& out = corpus[n];
        out.params = schedule.segments.front().params;
        out.trajectory = simulate_schedule(schedule, init, cfg.dt, noise).trajectory;
        out.seed = seq_seed;
    });
    return corpus;
}

namespace {

std::string seq_name(std::size_t i) {
    std::ostringstream s;
    s << "seq_" << std::setw(3) << std::setfill('0') << i << ".bin";
    return s.str();
}

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

json params_json(const LorenzParams& p) {
    return {{"sigma", p.sigma}, {"rho", p.rho}, {"beta", p.beta}};
}

}  // namespace

void save_changepoint_corpus(const std::vector<LabeledSequence>& corpus, ParamKind kind,
                             const fs::path& dir) {
    fs::create_directories(dir);
    json manifest{{"type", "changepoint"}, {"param_kind", to_string(kind)}, {"version", 1}};
    json seqs = json::array();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& s = corpus[i];
        write_trajectory_binary(s.trajectory, dir / seq_name(i));
        seqs.push_back({{"file", seq_name(i)},
                        {"seed", s.seed},
                        {"length", s.trajectory.size()},
                        {"changepoints", s.changepoints},
                        {"segment_values", s.segment_values}});
    }
    manifest["sequences"] = std::move(seqs);
    write_json(manifest, dir / "manifest.json");
}

std::vector<LabeledSequence> load_changepoint_corpus(const fs::path& dir, ParamKind* kind) {
    const json m = read_json(dir / "manifest.json");
    try {
        if (m.at("type") != "changepoint") throw DataError(dir.string() + ": not a changepoint corpus");
        if (kind) *kind = param_kind_from_string(m.at("param_kind").get<std::string>());
        std::vector<LabeledSequence> corpus;
        for (const auto& e : m.at("sequences")) {
            LabeledSequence s;
            s.trajectory = read_trajectory_binary(dir / e.at("file").get<std::string>());
            s.changepoints = e.at("changepoints").get<std::vector<std::size_t>>();
            s.segment_values = e.at("segment_values").get<std::vector<double>>();
            s.seed = e.at("seed").get<std::uint64_t>();
            if (s.trajectory.size() != e.at("length").get<std::size_t>()) {
                throw DataError(dir.string() + ": manifest length disagrees with trajectory file");
            }
            corpus.push_back(std::move(s));
        }
        return corpus;
    } catch (const json::exception& e) {
        throw DataError(dir.string() + "/manifest.json: " + e.what());
    }
}

void save_stationary_corpus(const std::vector<StationarySequence>& corpus, ParamKind kind,
                            const fs::path& dir) {
    fs::create_directories(dir);
    json manifest{{"type", "stationary"}, {"param_kind", to_string(kind)}, {"version", 1}};
    json seqs = json::array();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& s = corpus[i];
        write_trajectory_binary(s.trajectory, dir / seq_name(i));
        seqs.push_back({{"file", seq_name(i)},
                        {"seed", s.seed},
                        {"length", s.trajectory.size()},
                        {"params", params_json(s.params)}});
    }
    manifest["sequences"] = std::move(seqs);
    write_json(manifest, dir / "manifest.json");
}

std::vector<StationarySequence> load_stationary_corpus(const fs::path& dir, ParamKind* kind) {
    const json m = read_json(dir / "manifest.json");
    try {
        if (m.at("type") != "stationary") throw DataError(dir.string() + ": not a stationary corpus");
        if (kind) *kind = param_kind_from_string(m.at("param_kind").get<std::string>());
        std::vector<StationarySequence> corpus;
        for (const auto& e : m.at("sequences")) {
            StationarySequence s;
            s.trajectory = read_trajectory_binary(dir / e.at("file").get<std::string>());
            const auto& p = e.at("params");
            s.params = {p.at("sigma").get<double>(), p.at("rho").get<double>(),
                        p.at("beta").get<double>()};
            s.seed = e.at("seed").get<std::uint64_t>();
            corpus.push_back(std::move(s));
        }
        return corpus;
    } catch (const json::exception& e) {
        throw DataError(dir.string() + "/manifest.json: " + e.what());
    }
}

}  // namespace paramcpd
