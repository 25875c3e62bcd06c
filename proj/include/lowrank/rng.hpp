#pragma once

#include <cmath>
#include <cstdint>

#include "lowrank/matrix.hpp"

namespace lowrank {

/// Counter-based 64-bit generator (splitmix64). The n-th output is a pure
/// function of seed + n * gamma, so streams are reproducible bit-for-bit
/// across platforms; no platform RNG is involved anywhere in the library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal (Box-Muller; one fresh pair per call for a
    /// stateless-per-call stream).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    DenseMatrix normal_matrix(Index rows, Index cols) {
        DenseMatrix a(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) a(i, j) = normal();
        return a;
    }

    Vector normal_vector(Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

private:
    std::uint64_t state_;
};

}  // namespace lowrank
