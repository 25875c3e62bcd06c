#pragma once

#include <vector>

#include "lowrank/linalg.hpp"

namespace lowrank {

namespace defaults {
/// Rank floor: sigma_r(Z) must stay above eps_rank * sigma_1(Z).
inline constexpr double eps_rank = 1e-12;
/// Orthonormality tolerance of a valid point, |U^T U - I|_F.
inline constexpr double point_ortho = 1e-10;
/// Horizontality tolerance of a valid tangent vector, |U^T X_U|_F.
inline constexpr double horizontality = 1e-10;
/// Geodesic integration steps over [0, 1].
inline constexpr int geodesic_steps = 64;
}  // namespace defaults

/// Rank-r matrix R = U Z^T with U (l x r) column-orthonormal and Z (m x r)
/// of full rank. The factors are unique up to (U, Z) -> (U P, Z P) for an
/// orthogonal r x r matrix P (the gauge).
struct FixedRankPoint {
    DenseMatrix u;  ///< l x r, U^T U = I
    DenseMatrix z;  ///< m x r, sigma_r(Z) > eps_rank * sigma_1(Z)

    Index rows() const { return u.rows(); }
    Index cols() const { return z.rows(); }
    Index rank() const { return u.cols(); }
    DenseMatrix dense() const { return u * z.transpose(); }
};

/// Tangent vector X = X_U Z^T + U X_Z^T in the horizontal representation
/// U^T X_U = 0 (the dynamically orthogonal gauge condition), anchored at
/// `base`.
struct TangentVector {
    FixedRankPoint base;
    DenseMatrix xu;  ///< l x r, U^T xu = 0
    DenseMatrix xz;  ///< m x r

    DenseMatrix dense() const {
        return xu * base.z.transpose() + base.u * xz.transpose();
    }
};

/// Normal vector at `base`: an l x m matrix N with U^T N = 0 and N Z = 0.
struct NormalVector {
    FixedRankPoint base;
    DenseMatrix n;
};

struct CurvatureEntry {
    double kappa;            ///< principal curvature
    TangentVector direction; ///< unit-norm principal direction
};

/// Principal curvatures/directions of the shape operator at (base, N).
/// `entries` holds the 2 * rank(N) * r nonzero pairs; they come in
/// +/- pairs sigma_{r+j}(N) / sigma_i(R) with mutually orthonormal
/// directions. The remaining principal curvatures are zero.
struct CurvatureSpectrum {
    std::vector<CurvatureEntry> entries;
    int nonzero_count = 0;
};

bool is_valid_point(const FixedRankPoint& p,
                    double ortho_tol = defaults::point_ortho,
                    double eps_rank = defaults::eps_rank);
void require_valid_point(const FixedRankPoint& p, const char* what,
                         double ortho_tol = defaults::point_ortho,
                         double eps_rank = defaults::eps_rank);

bool same_base(const FixedRankPoint& a, const FixedRankPoint& b,
               double tol = 1e-10);
void require_same_base(const FixedRankPoint& a, const FixedRankPoint& b,
                       const char* what);

/// Factors the best rank-r part of a dense matrix: U = first r left
/// singular vectors, Z = V_r diag(sigma_1..sigma_r). Throws
/// RankDeficientError when sigma_r(R) <= eps_rank * sigma_1(R).
FixedRankPoint factor_from_dense(const DenseMatrix& r_dense, Index r,
                                 double eps_rank = defaults::eps_rank);

/// Orthogonal projection of an ambient matrix onto the tangent space at
/// `base`: X_U = (I - U U^T) amb Z (Z^T Z)^{-1}, X_Z = amb^T U.
TangentVector project_tangent(const FixedRankPoint& base,
                              const DenseMatrix& amb);

/// Orthogonal projection onto the normal space:
/// N = (I - U U^T) amb (I - Z (Z^T Z)^{-1} Z^T).
NormalVector project_normal(const FixedRankPoint& base, const DenseMatrix& amb);

/// Metric inherited from the ambient Frobenius product:
/// g(X, Y) = Tr(Z^T Z X_U^T Y_U + X_Z^T Y_Z).
double metric(const TangentVector& x, const TangentVector& y);

inline double metric_norm(const TangentVector& x) {
    return std::sqrt(std::max(0.0, metric(x, x)));
}

/// Christoffel symbol Gamma(X, Y) = -(I - P_T)(X_U Y_Z^T + Y_U X_Z^T);
/// the normal correction separating covariant from ambient differentiation.
NormalVector christoffel(const TangentVector& x, const TangentVector& y);

/// Shape (Weingarten) operator in the normal direction N:
/// (X_U, X_Z) -> (N X_Z (Z^T Z)^{-1}, N^T X_U). Symmetric under the metric.
TangentVector weingarten(const FixedRankPoint& base, const NormalVector& n,
                         const TangentVector& x);

/// Nonzero principal curvatures +/- sigma_{r+j}(N)/sigma_i(R) with their
/// unit directions (u_{r+j} v_i^T +/- u_i v_{r+j}^T)/sqrt(2). Triplets of N
/// below eps_rank * sigma_1(N) contribute zero curvature and are omitted.
CurvatureSpectrum curvature_spectrum(const FixedRankPoint& base,
                                     const NormalVector& n,
                                     double eps_rank = defaults::eps_rank);

/// Covariant derivative of a tangent field Y along X. The caller supplies
/// the ambient directional derivatives dy_u = D_X Y_U and dy_z = D_X Y_Z of
/// the horizontal components; the result is re-horizontalized.
TangentVector covariant_derivative(const TangentVector& x,
                                   const TangentVector& y,
                                   const DenseMatrix& dy_u,
                                   const DenseMatrix& dy_z);

/// Dense symmetric matrix of the shape operator on a metric-orthonormal
/// basis of the horizontal space, of size (l + m) r - r^2. Its eigenvalues
/// are the full principal-curvature spectrum (including the zeros).
DenseMatrix assemble_weingarten_operator(const FixedRankPoint& base,
                                         const NormalVector& n);

struct ExpMapResult {
    FixedRankPoint point;     ///< geodesic endpoint at unit time
    TangentVector velocity;   ///< endpoint velocity = transported initial vector
};

/// Walks the geodesic from `base` with initial velocity `x` to time 1 by
/// integrating the second-order factor system (classical RK4 on
/// (U, U', Z, Z')), with per-step horizontal re-projection of U' and a
/// final gauge fix. Throws RankCollapseError when sigma_min(Z(t)) falls
/// under the rank floor.
ExpMapResult exp_map(const FixedRankPoint& base, const TangentVector& x,
                     int n_steps = defaults::geodesic_steps);

/// Restores U^T U = I after numerical drift (QR with nonnegative diagonal,
/// Z absorbing the triangular factor); the dense value is unchanged.
FixedRankPoint gauge_fix(const FixedRankPoint& p);

}  // namespace lowrank
