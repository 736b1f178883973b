#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace sdfgan {

// Deterministic random source. The normal/uniform transforms are written out
// here instead of using std:: distributions so that streams are stable across
// standard library versions; mt19937_64 itself is specified exactly.
class Rng {
public:
    Rng() : engine_(0x5d7fb1e2c3a49ULL) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi_inclusive) {
        // Modulo bias is irrelevant at the ranges used here (< 2^32).
        auto span = static_cast<std::uint64_t>(hi_inclusive - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

    // Standard normal via Box-Muller. One draw per call; the sine branch is
    // discarded to keep the stream position independent of call pairing.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derive an independent child stream; used to give parallel work items
    // their own engines in a schedule-independent way.
    Rng fork() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

    friend std::ostream& operator<<(std::ostream& os, const Rng& r) { return os << r.engine_; }
    friend std::istream& operator>>(std::istream& is, Rng& r) { return is >> r.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace sdfgan
