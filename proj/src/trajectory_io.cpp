#include <cstring>
#include <fstream>
#include <iomanip>

#include "paramcpd/binary_io.hpp"
#include "paramcpd/errors.hpp"
#include "paramcpd/simulator.hpp"

namespace paramcpd {

namespace {
constexpr char kTrajectoryMagic[8] = {'P', 'C', 'P', 'D', 'T', 'R', 'A', 'J'};
constexpr std::uint32_t kTrajectoryVersion = 1;
}  // namespace

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << "t,x,y,z\n" << std::setprecision(17);
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const State& s = traj.states[i];
        out << traj.time_at(i) << ',' << s.x << ',' << s.y << ',' << s.z << '\n';
    }
}

void write_trajectory_binary(const Trajectory& traj, const std::filesystem::path& path) {
    BinaryWriter w(path);
    w.bytes(kTrajectoryMagic, sizeof kTrajectoryMagic);
    w.u32(kTrajectoryVersion);
    w.f64(traj.dt);
    w.f64(traj.t0);
    w.u64(traj.size());
    w.u64(traj.seed);
    for (const State& s : traj.states) {
        w.f64(s.x);
        w.f64(s.y);
        w.f64(s.z);
    }
    w.finish();
}

Trajectory read_trajectory_binary(const std::filesystem::path& path) {
    BinaryReader r(path);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kTrajectoryMagic, sizeof magic) != 0) {
        throw DataError(path.string() + ": not a trajectory file");
    }
    if (const auto v = r.u32(); v != kTrajectoryVersion) {
        throw DataError(path.string() + ": unsupported trajectory version " + std::to_string(v));
    }
    Trajectory traj;
    traj.dt = r.f64();
    traj.t0 = r.f64();
    const std::uint64_t n = r.u64();
    traj.seed = r.u64();
    traj.states.resize(n);
    for (State& s : traj.states) {
        s.x = r.f64();
        s.y = r.f64();
        s.z = r.f64();
    }
    r.expect_end();
    return traj;
}

}  // namespace paramcpd
