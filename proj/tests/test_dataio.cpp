#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "corgi/dataio.hpp"

using namespace corgi;

namespace {

Trajectory make_random_traj(std::uint64_t seed, int d = 2, std::int64_t n = 7,
                            std::int64_t frames = 5) {
    Rng rng(seed);
    Trajectory t;
    t.dim = d;
    t.n_particles = n;
    t.n_frames = frames;
    t.dt = 0.05;
    t.domain.lo.assign(d, 0.0);
    t.domain.hi.assign(d, 1.0);
    t.domain.periodic.assign(d, 1);
    t.external_force.assign(d, 0.0);
    t.n_types = 2;
    t.types.resize(n);
    for (auto& ty : t.types) ty = 1 + static_cast<std::int32_t>(rng.index(2));
    t.positions.resize(static_cast<std::size_t>(frames) * n * d);
    for (auto& p : t.positions) p = static_cast<float>(rng.uniform(0.0, 0.999));
    return t;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/corgi_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_SUITE_BEGIN("dataio");

TEST_CASE("CORG1 round trip is bitwise lossless") {
    TempFile f("roundtrip.corg1");
    const Trajectory t = make_random_traj(4);
    write_trajectory(t, f.path);
    const Trajectory r = read_trajectory(f.path);
    CHECK(r.dim == t.dim);
    CHECK(r.n_particles == t.n_particles);
    CHECK(r.n_frames == t.n_frames);
    CHECK(r.dt == t.dt);
    CHECK(r.types == t.types);
    REQUIRE(r.positions.size() == t.positions.size());
    CHECK(std::memcmp(r.positions.data(), t.positions.data(),
                      t.positions.size() * sizeof(float)) == 0);
    CHECK(r.domain.lo == t.domain.lo);
    CHECK(r.domain.hi == t.domain.hi);
    CHECK(r.domain.periodic == t.domain.periodic);
}

TEST_CASE("CORG1 distinct read errors") {
    TempFile f("badmagic.corg1");
    {
        std::ofstream os(f.path, std::ios::binary);
        os << "NOTCORG-and-some-padding-bytes";
    }
    CHECK_THROWS_AS(read_trajectory(f.path), BadMagicError);

    const Trajectory t = make_random_traj(5);
    TempFile g("trunc.corg1");
    write_trajectory(t, g.path);
    {
        std::ifstream is(g.path, std::ios::binary | std::ios::ate);
        const auto full = static_cast<std::size_t>(is.tellg());
        is.seekg(0);
        std::vector<char> buf(full - 13);
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        std::ofstream os(g.path, std::ios::binary | std::ios::trunc);
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    CHECK_THROWS_AS(read_trajectory(g.path), TruncatedFileError);

    Trajectory bad = make_random_traj(6);
    TempFile h("nan.corg1");
    write_trajectory(bad, h.path);
    {
        // Poke a NaN into the first position value in place.
        std::fstream io(h.path, std::ios::binary | std::ios::in | std::ios::out);
        io.seekg(0, std::ios::end);
        const auto full = static_cast<std::size_t>(io.tellg());
        const std::size_t pos_bytes = bad.positions.size() * sizeof(float);
        io.seekp(static_cast<std::streamoff>(full - pos_bytes));
        const float nan = std::numeric_limits<float>::quiet_NaN();
        io.write(reinterpret_cast<const char*>(&nan), sizeof(nan));
    }
    CHECK_THROWS_AS(read_trajectory(h.path), NanDataError);
}

TEST_CASE("minimal N=1 T=2 d=2 file parses") {
    TempFile f("minimal.corg1");
    Trajectory t = make_random_traj(7, 2, 1, 2);
    t.n_types = 1;
    t.types = {1};
    write_trajectory(t, f.path);
    const Trajectory r = read_trajectory(f.path);
    CHECK(r.n_particles == 1);
    CHECK(r.n_frames == 2);
    CHECK(r.positions.size() == 4);
}

TEST_CASE("TGV decayed-field and stagnation-point behavior") {
    // Effectively infinite viscosity: the field is dead after frame 0.
    const Trajectory t = generate_tgv(4, 1e9, 0.05, 4, 3);
    for (std::int64_t i = 0; i < t.n_particles * t.dim; ++i) {
        CHECK(t.positions[1 * t.n_particles * t.dim + i] ==
              t.positions[2 * t.n_particles * t.dim + i]);
        CHECK(t.positions[2 * t.n_particles * t.dim + i] ==
              t.positions[3 * t.n_particles * t.dim + i]);
    }

    // A particle placed at the stagnation point (pi/2, pi/2) does not move.
    const double half_pi = 1.5707963267948966;
    Domain dom{{0, 0}, {6.283185307179586, 6.283185307179586}, {1, 1}};
    double p[2] = {half_pi, half_pi};
    // advect manually through the generator's field at full strength
    for (int s = 0; s < 10; ++s) {
        const double u = -std::cos(p[0]) * std::sin(p[1]);
        const double v = std::sin(p[0]) * std::cos(p[1]);
        p[0] += 0.01 * u;
        p[1] += 0.01 * v;
    }
    CHECK(p[0] == doctest::Approx(half_pi));
    CHECK(p[1] == doctest::Approx(half_pi));
    (void)dom;
}

TEST_CASE("TGV frames stay inside the periodic box") {
    const Trajectory t = generate_tgv(6, 0.01, 0.08, 10, 11);
    const float hi = static_cast<float>(t.domain.hi[0]);
    for (float p : t.positions) {
        CHECK(p >= 0.0f);
        CHECK(p < hi);
    }
}

TEST_CASE("TGV periodic crossing has no velocity spike") {
    const Trajectory t = generate_tgv(8, 0.005, 0.1, 30, 2);
    double vmax = 0.0;
    for (std::int64_t f = 0; f + 1 < t.n_frames; ++f)
        for (std::int64_t i = 0; i < t.n_particles; ++i)
            for (int a = 0; a < 2; ++a) {
                const double dv =
                    t.domain.min_image(t.pos(f + 1, i, a) - t.pos(f, i, a), a) / t.dt;
                vmax = std::max(vmax, std::fabs(dv));
            }
    CHECK(vmax < 2.0);  // |u| <= 1 for the analytic field
}

TEST_CASE("compute_stats: constant velocity and single pair") {
    Trajectory t;
    t.dim = 2;
    t.n_particles = 1;
    t.n_frames = 4;
    t.dt = 1.0;
    t.domain.lo = {0, 0};
    t.domain.hi = {100, 100};
    t.domain.periodic = {0, 0};
    t.external_force = {0, 0};
    t.n_types = 1;
    t.types = {1};
    for (int f = 0; f < 4; ++f) {
        t.positions.push_back(static_cast<float>(f));  // vx = 1
        t.positions.push_back(0.0f);
    }
    const DatasetStats st = compute_stats(t, 2);
    CHECK(st.vel_mean[0] == doctest::Approx(1.0));
    CHECK(st.vel_mean[1] == doctest::Approx(0.0));
    CHECK(st.accel_mean[0] == doctest::Approx(0.0));
    CHECK(st.accel_std[0] == doctest::Approx(1e-12));  // floor applies

    Trajectory two = t;
    two.n_frames = 2;
    two.positions = {0.0f, 0.0f, 1.0f, 0.0f};
    const DatasetStats st2 = compute_stats(two, 2);
    CHECK(st2.vel_mean[0] == doctest::Approx(1.0));
}

TEST_CASE("compute_stats matches a naive double-loop oracle") {
    const Trajectory t = make_random_traj(21, 2, 3, 6);
    const DatasetStats st = compute_stats(t, 2);

    // Oracle: explicit loops in the same arithmetic.
    std::vector<double> vel, acc;
    std::vector<std::vector<double>> vels(2), accs(2);
    for (std::int64_t f = 0; f + 1 < t.n_frames; ++f)
        for (std::int64_t i = 0; i < t.n_particles; ++i)
            for (int a = 0; a < 2; ++a)
                vels[a].push_back(t.domain.min_image(t.pos(f + 1, i, a) - t.pos(f, i, a), a) /
                                  t.dt);
    for (std::int64_t f = 1; f + 1 < t.n_frames; ++f)
        for (std::int64_t i = 0; i < t.n_particles; ++i)
            for (int a = 0; a < 2; ++a) {
                const double v1 =
                    t.domain.min_image(t.pos(f + 1, i, a) - t.pos(f, i, a), a) / t.dt;
                const double v0 =
                    t.domain.min_image(t.pos(f, i, a) - t.pos(f - 1, i, a), a) / t.dt;
                accs[a].push_back((v1 - v0) / t.dt);
            }
    for (int a = 0; a < 2; ++a) {
        double m = 0;
        for (double v : vels[a]) m += v;
        m /= static_cast<double>(vels[a].size());
        double s2 = 0;
        for (double v : vels[a]) s2 += (v - m) * (v - m);
        const double sd = std::sqrt(s2 / static_cast<double>(vels[a].size()));
        CHECK(st.vel_mean[a] == doctest::Approx(m).epsilon(1e-9));
        CHECK(st.vel_std[a] == doctest::Approx(sd).epsilon(1e-6));
        double ma = 0;
        for (double v : accs[a]) ma += v;
        ma /= static_cast<double>(accs[a].size());
        CHECK(st.accel_mean[a] == doctest::Approx(ma).epsilon(1e-9));
    }
}

TEST_SUITE_END();
