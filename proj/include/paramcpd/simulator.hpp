#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace paramcpd {

/// Governing coefficients of the Lorenz-63 system.
struct LorenzParams {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;

    double& operator[](std::size_t i) { return i == 0 ? sigma : (i == 1 ? rho : beta); }
    double operator[](std::size_t i) const { return i == 0 ? sigma : (i == 1 ? rho : beta); }
    bool operator==(const LorenzParams&) const = default;

    static LorenzParams classic() { return {}; }
};

/// Which coefficient varies in a corpus. The underlying value doubles as the
/// coordinate index into LorenzParams.
enum class ParamKind : std::size_t { sigma = 0, rho = 1, beta = 2 };

inline constexpr std::array<ParamKind, 3> kAllParamKinds{ParamKind::sigma, ParamKind::rho,
                                                         ParamKind::beta};

std::string_view to_string(ParamKind kind);
ParamKind param_kind_from_string(std::string_view name);
inline std::size_t index_of(ParamKind kind) { return static_cast<std::size_t>(kind); }

struct State {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
    bool operator==(const State&) const = default;
};

/// Uniformly sampled state series: index i sits at time t0 + i * dt.
struct Trajectory {
    std::vector<State> states;
    double dt = 0.01;
    double t0 = 0.0;
    std::uint64_t seed = 0;  // noise seed, 0 for clean series

    std::size_t size() const { return states.size(); }
    double time_at(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
};

struct Segment {
    LorenzParams params;
    std::size_t length = 0;
};

/// Piecewise-constant parameter plan. The burn-in runs under the first
/// segment's parameters and is dropped from the output.
struct SegmentSchedule {
    std::vector<Segment> segments;
    std::size_t burn_in = 1000;

    std::size_t total_length() const;
    /// Cumulative segment boundaries, K-1 of them for K segments.
    std::vector<std::size_t> changepoints() const;
};

struct NoiseSpec {
    double eta = 0.0;  // noise std as a fraction of per-coordinate RMS
    std::uint64_t seed = 0;
};

inline constexpr double kDefaultDivergenceBound = 1e6;

State lorenz_rhs(const State& state, const LorenzParams& params);

/// One classical fourth-order Runge-Kutta step.
State rk4_step(const State& state, const LorenzParams& params, double dt);

/// Fixed-step RK4 integration. Returns steps + 1 states, starting with
/// `initial`. Throws DivergenceError when a coordinate leaves [-bound, bound]
/// or becomes non-finite.
Trajectory integrate(const State& initial, const LorenzParams& params, std::size_t steps, double dt,
                     double bound = kDefaultDivergenceBound);

struct ScheduleRun {
    Trajectory trajectory;
    std::vector<std::size_t> changepoints;
};

/// Integrates the schedule continuously across segment boundaries. The state
/// entering index i is produced under the parameters of the segment that owns
/// index i. Noise is applied to the whole post-burn-in series.
ScheduleRun simulate_schedule(const SegmentSchedule& schedule, const State& initial, double dt,
                              const NoiseSpec& noise, double bound = kDefaultDivergenceBound);

/// Adds i.i.d. Gaussian noise with per-coordinate std eta * RMS(coordinate).
Trajectory add_noise(const Trajectory& traj, const NoiseSpec& spec);

/// Starting point used throughout: (1, 1, 1) plus a small seeded perturbation.
State perturbed_initial_state(std::uint64_t seed, double scale = 0.1);

// Trajectory persistence. CSV carries columns t,x,y,z. The binary record
// stores a header (magic, version, dt, t0, length, seed) followed by raw
// 64-bit states and round-trips exactly.
void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);
void write_trajectory_binary(const Trajectory& traj, const std::filesystem::path& path);
Trajectory read_trajectory_binary(const std::filesystem::path& path);

}  // namespace paramcpd
