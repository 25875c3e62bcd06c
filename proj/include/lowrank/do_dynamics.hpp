#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "lowrank/svd_projection.hpp"
#include "lowrank/trajectory.hpp"

namespace lowrank {

/// Time-dependent vector field on the ambient matrix space. `eval` must be
/// deterministic per (t, R) and preserve the shape of its input.
struct VectorField {
    std::function<DenseMatrix(double, const DenseMatrix&)> eval;
    std::optional<double> lipschitz_k;
};

enum class Scheme { euler, heun_rk2, rk4 };
enum class DoMode { factor_ode, projected_step };

struct DoRunConfig {
    double t0 = 0.0;
    double t1 = 1.0;
    double dt = 1e-2;
    Scheme scheme = Scheme::rk4;
    DoMode mode = DoMode::factor_ode;
    int gauge_every = 1;
    int record_stride = 1;
    double eps_gap = defaults::eps_gap;
    double eps_rank = defaults::eps_rank;
};

/// Velocity of the reduced (dynamically orthogonal) system: the tangent
/// projection of the ambient field evaluated at the current point.
TangentVector do_rhs(const FixedRankPoint& p, double t, const VectorField& f);

/// Integrates the reduced dynamics. factor_ode steps the coupled (U, Z)
/// system with the configured scheme and periodic gauge fixes;
/// projected_step forms R + dt * increment densely and re-truncates after
/// each step. Rank collapse raises RankCollapseError; skeleton proximity
/// (projected mode) raises SkeletonProximityError, both carrying the time.
Trajectory integrate_do(const FixedRankPoint& p0, const VectorField& f,
                        const DoRunConfig& cfg);

struct TimedMatrix {
    double t;
    DenseMatrix value;
};

/// Full-space reference: classical RK4 on the ambient ODE over the same
/// time grid (record stride included) as integrate_do.
std::vector<TimedMatrix> dense_reference(const DenseMatrix& r0,
                                         const VectorField& f,
                                         const DoRunConfig& cfg);

/// A-posteriori error budget of a reduced trajectory against a full-space
/// reference. `bound` is the Gronwall envelope
///   integral_0^t best(s) (K + |L(s)| / (sigma_r - sigma_r1)) e^{eta (t-s)} ds
/// with eta = K + sup_t 2 |L(t)| / sigma_r(t), evaluated by trapezoidal
/// quadrature over the sample grid (the supremum is taken over the samples,
/// a lower-bound approximation of the continuous constant).
struct ErrorBoundReport {
    std::vector<double> times;
    std::vector<double> do_error;    ///< |R(t) - truncate(ref(t))|
    std::vector<double> best_error;  ///< |ref(t) - truncate(ref(t))|
    std::vector<double> bound;
    double eta = 0.0;
    double lipschitz_k = 0.0;
    bool k_certified = true;      ///< false when K was estimated by sampling
    bool crossed_skeleton = false;
    double crossing_time = 0.0;   ///< valid when crossed_skeleton
};

/// Evaluates the error bound along matching grids. When `k` is not given,
/// it is estimated from trajectory-adjacent samples and the report is
/// flagged non-certified. A singular-value crossing truncates the report at
/// the crossing and sets the flag.
ErrorBoundReport evaluate_error_bound(const Trajectory& do_traj,
                                      const std::vector<TimedMatrix>& ref,
                                      const VectorField& f,
                                      std::optional<double> k = std::nullopt,
                                      double eps_gap = defaults::eps_gap);

/// Sampled Lipschitz estimate max |f(t_i, A_i) - f(t_i, A_j)| / |A_i - A_j|
/// over adjacent reference samples (a non-certified lower bound).
double estimate_lipschitz(const VectorField& f,
                          const std::vector<TimedMatrix>& ref);

}  // namespace lowrank
