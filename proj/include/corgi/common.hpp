#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace corgi {

// Validation failures (bad arguments, malformed files, shape mismatches) are
// distinguished from runtime failures so the CLI can map them to exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};
struct FormatError : ValidationError {
    explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};
struct BadMagicError : FormatError {
    explicit BadMagicError(const std::string& msg) : FormatError(msg) {}
};
struct TruncatedFileError : FormatError {
    explicit TruncatedFileError(const std::string& msg) : FormatError(msg) {}
};
struct NanDataError : FormatError {
    explicit NanDataError(const std::string& msg) : FormatError(msg) {}
};

// Axis-aligned simulation box. Periodic axes wrap; bounded axes have walls.
struct Domain {
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<std::uint8_t> periodic;

    int dim() const { return static_cast<int>(lo.size()); }
    double extent(int axis) const { return hi[axis] - lo[axis]; }

    double diagonal() const {
        double s = 0.0;
        for (int a = 0; a < dim(); ++a) s += extent(a) * extent(a);
        return std::sqrt(s);
    }

    void validate() const {
        if (lo.empty() || lo.size() != hi.size() || lo.size() != periodic.size())
            throw ValidationError("domain: inconsistent axis counts");
        for (std::size_t a = 0; a < lo.size(); ++a)
            if (!(hi[a] > lo[a]))
                throw ValidationError("domain: bounds_max must exceed bounds_min on axis " +
                                      std::to_string(a));
    }

    // Wrap a coordinate into [lo, hi) on a periodic axis; identity otherwise.
    double wrap(double x, int axis) const {
        if (!periodic[axis]) return x;
        const double len = extent(axis);
        double y = std::fmod(x - lo[axis], len);
        if (y < 0.0) y += len;
        if (y >= len) y = 0.0;  // fmod can land exactly on len after rounding
        return y + lo[axis];
    }

    // Minimum-image difference component: result in (-len/2, len/2] on
    // periodic axes, raw difference otherwise.
    double min_image(double delta, int axis) const {
        if (!periodic[axis]) return delta;
        const double len = extent(axis);
        double y = std::remainder(delta, len);
        if (y <= -0.5 * len) y += len;
        return y;
    }
};

// Deterministic RNG with hand-rolled transforms so sampled streams do not
// depend on the standard library's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(static_cast<std::mt19937::result_type>(seed)) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        const std::uint64_t a = gen_() >> 5;  // 27 bits
        const std::uint64_t b = gen_() >> 6;  // 26 bits
        return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) *
               (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; caches the second variate.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    std::uint64_t next_u64() {
        const std::uint64_t a = gen_();
        const std::uint64_t b = gen_();
        return (a << 32) | b;
    }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

  private:
    std::mt19937 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace corgi
