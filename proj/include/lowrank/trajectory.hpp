#pragma once

#include <vector>

#include "lowrank/manifold.hpp"

namespace lowrank {

/// One accepted step of a factored-point integration, with the diagnostics
/// the producing routine can evaluate. Unused slots stay zero.
struct TrajectorySample {
    double t = 0.0;
    FixedRankPoint point;
    double sigma_r = 0.0;                ///< gap diagnostics of the source matrix
    double sigma_r1 = 0.0;
    double residual_norm = 0.0;          ///< context-dependent residual
    double reconstruction_error = 0.0;   ///< error vs a dense oracle, when available
    double do_residual = 0.0;            ///< |U^T U'| (dynamically orthogonal condition)
    double gauge_drift = 0.0;            ///< |U^T U - I|
};

struct Trajectory {
    std::vector<TrajectorySample> samples;

    const TrajectorySample& front() const { return samples.front(); }
    const TrajectorySample& back() const { return samples.back(); }
    std::size_t size() const { return samples.size(); }
};

}  // namespace lowrank
