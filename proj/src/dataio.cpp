#include "corgi/dataio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "CORG1 I/O assumes a little-endian host");

namespace corgi {

namespace {

constexpr char kMagic[6] = {'C', 'O', 'R', 'G', '1', '\0'};

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const char* what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw TruncatedFileError(std::string("CORG1: truncated while reading ") + what);
    return v;
}

template <class T>
void get_n(std::istream& is, T* dst, std::size_t n, const char* what) {
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is) throw TruncatedFileError(std::string("CORG1: truncated while reading ") + what);
}

}  // namespace

void Trajectory::validate() const {
    if (dim < 1 || dim > 3) throw ValidationError("trajectory: dim must be 1..3");
    if (n_particles < 1 || n_frames < 1) throw ValidationError("trajectory: empty");
    if (!(dt > 0.0)) throw ValidationError("trajectory: dt must be positive");
    domain.validate();
    if (static_cast<std::size_t>(domain.dim()) != static_cast<std::size_t>(dim))
        throw ValidationError("trajectory: domain dimension mismatch");
    if (types.size() != static_cast<std::size_t>(n_particles))
        throw ValidationError("trajectory: types length mismatch");
    for (std::int32_t t : types)
        if (t < 1 || static_cast<std::uint32_t>(t) > n_types)
            throw ValidationError("trajectory: type id " + std::to_string(t) +
                                  " outside [1," + std::to_string(n_types) + "]");
    if (positions.size() !=
        static_cast<std::size_t>(n_frames) * static_cast<std::size_t>(n_particles) * dim)
        throw ValidationError("trajectory: positions length mismatch");
}

void write_trajectory(const Trajectory& traj, const std::string& path) {
    traj.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, 1u);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(traj.dim));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(traj.n_particles));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(traj.n_frames));
    put<double>(os, traj.dt);
    for (int a = 0; a < traj.dim; ++a) put<double>(os, traj.domain.lo[a]);
    for (int a = 0; a < traj.dim; ++a) put<double>(os, traj.domain.hi[a]);
    for (int a = 0; a < traj.dim; ++a) put<std::uint8_t>(os, traj.domain.periodic[a]);
    for (int a = 0; a < traj.dim; ++a) put<double>(os, traj.external_force[a]);
    put<std::uint32_t>(os, traj.n_types);
    os.write(reinterpret_cast<const char*>(traj.types.data()),
             static_cast<std::streamsize>(traj.types.size() * sizeof(std::int32_t)));
    os.write(reinterpret_cast<const char*>(traj.positions.data()),
             static_cast<std::streamsize>(traj.positions.size() * sizeof(float)));
    if (!os) throw Error("write failed for '" + path + "'");
}

Trajectory read_trajectory(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open '" + path + "' for reading");

    char magic[6];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw BadMagicError("CORG1: bad magic in '" + path + "'");
    const auto version = get<std::uint32_t>(is, "version");
    if (version != 1)
        throw FormatError("CORG1: unsupported version " + std::to_string(version));

    Trajectory traj;
    traj.dim = static_cast<int>(get<std::uint32_t>(is, "dim"));
    if (traj.dim < 1 || traj.dim > 3)
        throw FormatError("CORG1: dim " + std::to_string(traj.dim) + " out of range");
    traj.n_particles = static_cast<std::int64_t>(get<std::uint64_t>(is, "N"));
    traj.n_frames = static_cast<std::int64_t>(get<std::uint64_t>(is, "T"));
    traj.dt = get<double>(is, "dt");
    traj.domain.lo.resize(traj.dim);
    traj.domain.hi.resize(traj.dim);
    traj.domain.periodic.resize(traj.dim);
    traj.external_force.resize(traj.dim);
    get_n<double>(is, traj.domain.lo.data(), traj.dim, "bounds_min");
    get_n<double>(is, traj.domain.hi.data(), traj.dim, "bounds_max");
    get_n<std::uint8_t>(is, traj.domain.periodic.data(), traj.dim, "periodic");
    get_n<double>(is, traj.external_force.data(), traj.dim, "external_force");
    traj.n_types = get<std::uint32_t>(is, "n_types");
    traj.types.resize(static_cast<std::size_t>(traj.n_particles));
    get_n<std::int32_t>(is, traj.types.data(), traj.types.size(), "types");
    traj.positions.resize(static_cast<std::size_t>(traj.n_frames) *
                          static_cast<std::size_t>(traj.n_particles) * traj.dim);
    get_n<float>(is, traj.positions.data(), traj.positions.size(), "positions");

    for (std::size_t k = 0; k < traj.positions.size(); ++k)
        if (!std::isfinite(traj.positions[k]))
            throw NanDataError("CORG1: non-finite position at flat index " + std::to_string(k));
    traj.validate();
    return traj;
}

DatasetStats compute_stats(const std::vector<const Trajectory*>& trajectories, int history) {
    if (trajectories.empty()) throw ValidationError("compute_stats: no trajectories");
    if (history < 2) throw ValidationError("compute_stats: history must be >= 2");
    const int d = trajectories.front()->dim;

    // Running sums per axis; velocities from consecutive frame pairs,
    // accelerations from consecutive velocity pairs.
    std::vector<double> vs(d, 0.0), vs2(d, 0.0), as(d, 0.0), as2(d, 0.0);
    std::int64_t nv = 0, na = 0;
    for (const Trajectory* tr : trajectories) {
        if (tr->dim != d) throw ValidationError("compute_stats: mixed dimensions");
        if (tr->n_frames < history)
            throw ValidationError("compute_stats: trajectory shorter than history");
        const double inv_dt = 1.0 / tr->dt;
        for (std::int64_t t = 0; t + 1 < tr->n_frames; ++t) {
            for (std::int64_t i = 0; i < tr->n_particles; ++i) {
                for (int a = 0; a < d; ++a) {
                    const double v =
                        tr->domain.min_image(tr->pos(t + 1, i, a) - tr->pos(t, i, a), a) * inv_dt;
                    vs[a] += v;
                    vs2[a] += v * v;
                    if (t > 0) {
                        const double vp =
                            tr->domain.min_image(tr->pos(t, i, a) - tr->pos(t - 1, i, a), a) *
                            inv_dt;
                        const double acc = (v - vp) * inv_dt;
                        as[a] += acc;
                        as2[a] += acc * acc;
                    }
                }
                ++nv;
                if (t > 0) ++na;
            }
        }
    }
    if (nv == 0) throw ValidationError("compute_stats: no velocity samples");

    DatasetStats st;
    st.vel_mean.resize(d);
    st.vel_std.resize(d);
    st.accel_mean.assign(d, 0.0);
    st.accel_std.assign(d, 1e-12);
    for (int a = 0; a < d; ++a) {
        const double m = vs[a] / static_cast<double>(nv);
        st.vel_mean[a] = m;
        st.vel_std[a] =
            std::max(1e-12, std::sqrt(std::max(0.0, vs2[a] / static_cast<double>(nv) - m * m)));
        if (na > 0) {
            const double ma = as[a] / static_cast<double>(na);
            st.accel_mean[a] = ma;
            st.accel_std[a] = std::max(
                1e-12, std::sqrt(std::max(0.0, as2[a] / static_cast<double>(na) - ma * ma)));
        }
    }
    return st;
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void tgv_velocity(double x, double y, double t, double nu, double* u) {
    const double decay = std::exp(-2.0 * nu * t);
    u[0] = -std::cos(x) * std::sin(y) * decay;
    u[1] = std::sin(x) * std::cos(y) * decay;
}

}  // namespace

Trajectory generate_tgv(int n_side, double nu, double dt, int n_frames, std::uint64_t seed) {
    if (n_side < 2) throw ValidationError("generate_tgv: n_side must be >= 2");
    if (!(nu >= 0.0)) throw ValidationError("generate_tgv: nu must be >= 0");
    if (!(dt > 0.0)) throw ValidationError("generate_tgv: dt must be positive");
    if (n_frames < 2) throw ValidationError("generate_tgv: need at least 2 frames");

    const std::int64_t n = static_cast<std::int64_t>(n_side) * n_side;
    Trajectory traj;
    traj.dim = 2;
    traj.n_particles = n;
    traj.n_frames = n_frames;
    traj.dt = dt;
    traj.domain.lo = {0.0, 0.0};
    traj.domain.hi = {kTwoPi, kTwoPi};
    traj.domain.periodic = {1, 1};
    traj.external_force = {0.0, 0.0};
    traj.n_types = 1;
    traj.types.assign(n, 1);
    traj.positions.resize(static_cast<std::size_t>(n_frames) * n * 2);

    const double spacing = kTwoPi / n_side;
    Rng rng(seed);
    std::vector<double> pos(2 * n);
    for (int iy = 0; iy < n_side; ++iy) {
        for (int ix = 0; ix < n_side; ++ix) {
            const std::int64_t i = static_cast<std::int64_t>(iy) * n_side + ix;
            pos[2 * i + 0] = traj.domain.wrap((ix + 0.5) * spacing +
                                              rng.uniform(-0.2 * spacing, 0.2 * spacing), 0);
            pos[2 * i + 1] = traj.domain.wrap((iy + 0.5) * spacing +
                                              rng.uniform(-0.2 * spacing, 0.2 * spacing), 1);
        }
    }

    const int substeps = std::max(1, static_cast<int>(std::ceil(dt / 0.01)));
    const double h = dt / substeps;

    auto store_frame = [&](int t) {
        float* dst = traj.positions.data() + static_cast<std::size_t>(t) * n * 2;
        for (std::int64_t i = 0; i < 2 * n; ++i) {
            float v = static_cast<float>(pos[i]);
            const int axis = static_cast<int>(i & 1);
            const float len = static_cast<float>(traj.domain.extent(axis));
            // float rounding can land exactly on the upper bound
            if (v >= len) v -= len;
            if (v < 0.0f) v += len;
            dst[i] = v;
        }
    };

    store_frame(0);
    double time = 0.0;
    for (int t = 1; t < n_frames; ++t) {
        for (int s = 0; s < substeps; ++s) {
            for (std::int64_t i = 0; i < n; ++i) {
                double* p = pos.data() + 2 * i;
                double k1[2], k2[2], k3[2], k4[2];
                tgv_velocity(p[0], p[1], time, nu, k1);
                tgv_velocity(p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1], time + 0.5 * h, nu,
                             k2);
                tgv_velocity(p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1], time + 0.5 * h, nu,
                             k3);
                tgv_velocity(p[0] + h * k3[0], p[1] + h * k3[1], time + h, nu, k4);
                for (int a = 0; a < 2; ++a) {
                    p[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                    p[a] = traj.domain.wrap(p[a], a);
                }
            }
            time += h;
        }
        store_frame(t);
    }
    return traj;
}

}  // namespace corgi
