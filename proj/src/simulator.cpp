#include "paramcpd/simulator.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "paramcpd/errors.hpp"
#include "paramcpd/random.hpp"

namespace paramcpd {

std::string_view to_string(ParamKind kind) {
    switch (kind) {
        case ParamKind::sigma: return "sigma";
        case ParamKind::rho: return "rho";
        case ParamKind::beta: return "beta";
    }
    return "unknown";
}

ParamKind param_kind_from_string(std::string_view name) {
    for (ParamKind k : kAllParamKinds) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown parameter kind '" + std::string(name) +
                      "' (expected sigma, rho or beta)");
}

std::size_t SegmentSchedule::total_length() const {
    return std::accumulate(segments.begin(), segments.end(), std::size_t{0},
                           [](std::size_t acc, const Segment& s) { return acc + s.length; });
}

std::vector<std::size_t> SegmentSchedule::changepoints() const {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    for (std::size_t k = 0; k + 1 < segments.size(); ++k) {
        pos += segments[k].length;
        out.push_back(pos);
    }
    return out;
}

State lorenz_rhs(const State& s, const LorenzParams& p) {
    return {p.sigma * (s.y - s.x), s.x * (p.rho - s.z) - s.y, s.x * s.y - p.beta * s.z};
}

namespace {

State axpy(const State& s, double a, const State& d) {
    return {s.x + a * d.x, s.y + a * d.y, s.z + a * d.z};
}

void check_bounded(const State& s, double bound, std::size_t step) {
    for (std::size_t i = 0; i < 3; ++i) {
        if (!std::isfinite(s[i]) || std::abs(s[i]) > bound) {
            std::ostringstream msg;
            msg << "Lorenz integration diverged at step " << step << " (|state| > " << bound
                << " or non-finite)";
            throw DivergenceError(msg.str());
        }
    }
}

}  // namespace

State rk4_step(const State& s, const LorenzParams& p, double dt) {
    const State k1 = lorenz_rhs(s, p);
    const State k2 = lorenz_rhs(axpy(s, 0.5 * dt, k1), p);
    const State k3 = lorenz_rhs(axpy(s, 0.5 * dt, k2), p);
    const State k4 = lorenz_rhs(axpy(s, dt, k3), p);
    const double h = dt / 6.0;
    return {s.x + h * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            s.y + h * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
            s.z + h * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z)};
}

Trajectory integrate(const State& initial, const LorenzParams& params, std::size_t steps, double dt,
                     double bound) {
    if (!(dt > 0.0)) throw std::invalid_argument("integrate: dt must be positive");
    check_bounded(initial, bound, 0);
    Trajectory traj;
    traj.dt = dt;
    traj.states.reserve(steps + 1);
    traj.states.push_back(initial);
    State s = initial;
    for (std::size_t i = 1; i <= steps; ++i) {
        s = rk4_step(s, params, dt);
        check_bounded(s, bound, i);
        traj.states.push_back(s);
    }
    return traj;
}

ScheduleRun simulate_schedule(const SegmentSchedule& schedule, const State& initial, double dt,
                              const NoiseSpec& noise, double bound) {
    if (schedule.segments.empty()) throw std::invalid_argument("schedule has no segments");
    for (const auto& seg : schedule.segments) {
        if (seg.length == 0) throw std::invalid_argument("schedule segment of length 0");
    }
    if (!(dt > 0.0)) throw std::invalid_argument("simulate_schedule: dt must be positive");

    const auto& first = schedule.segments.front().params;
    State s = initial;
    check_bounded(s, bound, 0);
    for (std::size_t i = 0; i < schedule.burn_in; ++i) {
        s = rk4_step(s, first, dt);
        check_bounded(s, bound, i + 1);
    }

    ScheduleRun run;
    run.trajectory.dt = dt;
    run.trajectory.t0 = static_cast<double>(schedule.burn_in) * dt;
    auto& states = run.trajectory.states;
    states.reserve(schedule.total_length());
    states.push_back(s);
    std::size_t step = schedule.burn_in;
    for (std::size_t k = 0; k < schedule.segments.size(); ++k) {
        const auto& seg = schedule.segments[k];
        // Index 0 of the first segment is the burn-in end state itself.
        const std::size_t n = (k == 0) ? seg.length - 1 : seg.length;
        for (std::size_t i = 0; i < n; ++i) {
            s = rk4_step(s, seg.params, dt);
            check_bounded(s, bound, ++step);
            states.push_back(s);
        }
    }
    run.changepoints = schedule.changepoints();
    run.trajectory = add_noise(run.trajectory, noise);
    return run;
}

Trajectory add_noise(const Trajectory& traj, const NoiseSpec& spec) {
    if (traj.states.empty()) throw std::invalid_argument("add_noise: empty trajectory");
    if (spec.eta < 0.0) throw std::invalid_argument("add_noise: eta must be non-negative");
    if (spec.eta == 0.0) return traj;

    std::array<double, 3> rms{};
    for (const State& s : traj.states) {
        for (std::size_t c = 0; c < 3; ++c) rms[c] += s[c] * s[c];
    }
    const double n = static_cast<double>(traj.states.size());
    for (double& r : rms) r = std::sqrt(r / n);

    Trajectory out = traj;
    out.seed = spec.seed;
    Rng rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (State& s : out.states) {
        for (std::size_t c = 0; c < 3; ++c) s[c] += spec.eta * rms[c] * normal(rng);
    }
    return out;
}

State perturbed_initial_state(std::uint64_t seed, double scale) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    State s{1.0, 1.0, 1.0};
    for (std::size_t c = 0; c < 3; ++c) s[c] += normal(rng);
    return s;
}

}  // namespace paramcpd
