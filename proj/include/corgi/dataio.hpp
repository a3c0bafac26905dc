#pragma once

// Trajectory container, CORG1 binary format, dataset statistics, and the
// synthetic Taylor-Green data source.

#include <cstdint>
#include <string>
#include <vector>

#include "corgi/common.hpp"

namespace corgi {

// Time-indexed particle positions with domain metadata. Positions are stored
// in 32-bit floats, matching the on-disk format bit for bit.
struct Trajectory {
    int dim = 0;
    std::int64_t n_particles = 0;
    std::int64_t n_frames = 0;
    double dt = 0.0;
    Domain domain;
    std::vector<double> external_force;  // per axis
    std::uint32_t n_types = 1;
    std::vector<std::int32_t> types;  // [N], values in [1, n_types]
    std::vector<float> positions;     // [T][N][d] row-major

    const float* frame(std::int64_t t) const {
        return positions.data() + static_cast<std::size_t>(t) * n_particles * dim;
    }
    double pos(std::int64_t t, std::int64_t i, int axis) const {
        return positions[(static_cast<std::size_t>(t) * n_particles + i) * dim + axis];
    }
    std::vector<double> frame_d(std::int64_t t) const {
        const float* p = frame(t);
        return std::vector<double>(p, p + n_particles * dim);
    }
    void validate() const;
};

Trajectory read_trajectory(const std::string& path);
void write_trajectory(const Trajectory& traj, const std::string& path);

// Per-axis mean/std of finite-difference velocities and accelerations,
// computed with minimum-image displacements. Stds are floored at 1e-12.
struct DatasetStats {
    std::vector<double> vel_mean, vel_std;
    std::vector<double> accel_mean, accel_std;
};

DatasetStats compute_stats(const std::vector<const Trajectory*>& trajectories, int history);
inline DatasetStats compute_stats(const Trajectory& traj, int history) {
    return compute_stats(std::vector<const Trajectory*>{&traj}, history);
}

// Particles on a jittered lattice in [0,2pi)^2, advected through the decaying
// Taylor-Green velocity field u = (-cos x sin y, sin x cos y) e^{-2 nu t}
// with RK4 substeps, wrapped periodically.
Trajectory generate_tgv(int n_side, double nu, double dt, int n_frames, std::uint64_t seed);

}  // namespace corgi
