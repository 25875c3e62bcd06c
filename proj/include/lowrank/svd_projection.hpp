#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "lowrank/manifold.hpp"
#include "lowrank/trajectory.hpp"

namespace lowrank {

namespace defaults {
/// Relative-gap floor under which the rank-r truncation is rejected.
inline constexpr double eps_gap = 1e-10;
/// Normal triplets below sigma_skip * sigma_1 are dropped from the
/// curvature-correction sums (their contribution is of that order).
inline constexpr double sigma_skip = 1e-14;
}  // namespace defaults

/// Spectral-gap diagnostics of a truncation.
struct GapReport {
    double sigma_r = 0.0;
    double sigma_r1 = 0.0;
    double relative_gap = 0.0;  ///< (sigma_r - sigma_r1) / sigma_1, 0 when sigma_1 = 0
};

GapReport spectral_gap(const Vector& sigma, Index r);

struct TruncationResult {
    FixedRankPoint point;
    GapReport gap;
};

/// Best rank-r approximation (truncated SVD), the orthogonal projection
/// onto the fixed-rank manifold. Throws SkeletonProximityError when the
/// relative gap is at or below eps_gap, RankDeficientError when the input
/// has numerical rank below r.
TruncationResult truncate(const DenseMatrix& amb, Index r,
                          double eps_gap = defaults::eps_gap);

/// Differential of the rank-r truncation at `amb` applied to `dir`:
/// the tangent projection of dir at the truncated point plus the
/// closed-form curvature correction driven by the discarded triplets.
/// Output is tangent at truncate(amb, r).point.
TangentVector truncate_differential(const DenseMatrix& amb, Index r,
                                    const DenseMatrix& dir,
                                    double eps_gap = defaults::eps_gap);

/// Upper bound sigma_{r+1} / (sigma_r - sigma_{r+1}) * |dir| on the
/// deviation between the truncation differential and the plain tangent
/// projection.
double deviation_bound(const DenseMatrix& amb, Index r, const DenseMatrix& dir,
                       double eps_gap = defaults::eps_gap);

/// Singular triplet of the discarded (normal) part of a source matrix.
struct NormalTriplet {
    double sigma;
    Vector u;  ///< length l
    Vector v;  ///< length m
};

/// A tracked best-rank-r factorization: the factored point plus the
/// discarded singular triplets of the source matrix it approximates.
struct TrackedFactors {
    FixedRankPoint point;
    std::vector<NormalTriplet> normal_triplets;
};

/// Builds TrackedFactors from a dense source matrix (truncation plus the
/// discarded triplets above the sigma_skip floor).
TrackedFactors tracked_from_dense(const DenseMatrix& amb, Index r,
                                  double eps_gap = defaults::eps_gap);

struct FactorRates {
    DenseMatrix du;  ///< horizontal: U^T du = 0
    DenseMatrix dz;
};

/// Right-hand side of the best-rank-r tracking system: the factor rates
/// (dU, dZ) whose assembly dU Z^T + U dZ^T equals the truncation
/// differential applied to amb_dot.
FactorRates best_rank_rhs(const TrackedFactors& tracked,
                          const DenseMatrix& amb_dot);

/// Time-parameterized source matrix: returns (value, time derivative).
using MatrixPath =
    std::function<std::pair<DenseMatrix, DenseMatrix>(double t)>;

/// Integrates the best-rank tracking system with classical RK4 on the
/// factors, gauge-fixing every step. Gap collapse along the path raises
/// SkeletonProximityError carrying the failing time.
Trajectory track_best_rank(const MatrixPath& path, double t0, double t1,
                           double dt, Index r,
                           double eps_gap = defaults::eps_gap,
                           int record_stride = 1);

}  // namespace lowrank
