#pragma once

#include <cstdint>
#include <vector>

#include "lowrank/manifold.hpp"
#include "lowrank/trajectory.hpp"

namespace lowrank {

enum class StepRuleKind { fixed, armijo };

/// Step-size rule: fixed alpha, or Armijo backtracking from alpha0 with
/// contraction beta and sufficient-decrease constant c.
struct StepRule {
    StepRuleKind kind = StepRuleKind::armijo;
    double alpha = 0.5;   // fixed step
    double alpha0 = 1.0;  // armijo start
    double beta = 0.5;    // armijo contraction
    double c = 1e-4;      // armijo sufficient decrease

    static StepRule fixed_step(double a) {
        StepRule rule;
        rule.kind = StepRuleKind::fixed;
        rule.alpha = a;
        return rule;
    }
    static StepRule armijo(double a0 = 1.0, double b = 0.5, double cc = 1e-4) {
        StepRule rule;
        rule.kind = StepRuleKind::armijo;
        rule.alpha0 = a0;
        rule.beta = b;
        rule.c = cc;
        return rule;
    }
};

enum class OptimMethod { gd, cg, newton };
enum class OptimStatus { converged, max_iters, stalled, saddle_detected };

struct OptimConfig {
    int max_iters = 10000;
    double grad_tol = 1e-8;
    StepRule step_rule = StepRule::armijo();
    OptimMethod method = OptimMethod::gd;
    bool record_trace = true;
    int retraction_steps = 16;  ///< geodesic sub-steps per iterate update
};

struct OptimIterRecord {
    int iter;
    double j;
    double grad_norm;
    double step_size;
};

struct OptimTrace {
    std::vector<OptimIterRecord> records;
    OptimStatus status = OptimStatus::max_iters;
};

const char* to_string(OptimStatus status);

/// Distance functional J(R) = 1/2 |R - target|^2.
double distance_value(const FixedRankPoint& p, const DenseMatrix& target);

/// Covariant gradient of J: the tangent projection of (R - target).
TangentVector distance_gradient(const FixedRankPoint& p,
                                const DenseMatrix& target);

/// Covariant Hessian of J applied to a tangent vector:
/// (X_U, X_Z) -> (X_U - N X_Z (Z^T Z)^{-1}, X_Z - N^T X_U) with
/// N = (I - U U^T) target (I - Z (Z^T Z)^{-1} Z^T). At a critical point this
/// is identity minus the shape operator in the residual direction.
TangentVector distance_hessian_apply(const FixedRankPoint& p,
                                     const DenseMatrix& target,
                                     const TangentVector& x);

/// Newton direction: solves Hess J (X) = -grad J through the Sylvester
/// equation X_U A - B B^T X_U = E - B F (A = Z^T Z, B = -N,
/// E = (I - U U^T) target Z, F = -Z + target^T U), then X_Z = F - B^T X_U.
/// Propagates NearSingularSylvesterError when the spectra collide.
TangentVector newton_direction(const FixedRankPoint& p,
                               const DenseMatrix& target,
                               double sep_tol = defaults::sylvester_separation);

struct MinimizeResult {
    FixedRankPoint point;
    OptimTrace trace;
};

/// Minimizes J over the rank-r manifold from an explicit starting point.
/// Iterates move along geodesics; CG transports the previous direction by
/// tangent re-projection (Fletcher-Reeves, periodic restart); Newton takes
/// unit steps and falls back to a gradient step when the Sylvester solve is
/// near-singular. On convergence of Newton, the Hessian is probed with 10
/// random Rayleigh quotients and saddle_detected is reported when one is
/// negative.
MinimizeResult minimize(const DenseMatrix& target, Index r,
                        const FixedRankPoint& init, const OptimConfig& cfg);

/// Same, starting from a seeded scale-matched random point.
MinimizeResult minimize(const DenseMatrix& target, Index r, std::uint64_t seed,
                        const OptimConfig& cfg);

/// Scale-matched random initialization: U from the QR of a seeded normal
/// draw, Z seeded normal rescaled to |Z| = |target| / sqrt(r).
FixedRankPoint random_point(const DenseMatrix& target, Index r, Rng& rng);

/// Continuous steepest descent of J (RK4 on the factors): converges to the
/// best rank-r approximation of the target for almost every start.
Trajectory gradient_flow(const DenseMatrix& target, Index r,
                         const FixedRankPoint& init, double dt, double t1,
                         int record_stride = 1);

}  // namespace lowrank
