#pragma once

#include "lowrank/matrix.hpp"
#include "lowrank/rng.hpp"

namespace lowrank {

namespace defaults {
/// Contract tolerance of the SVD kernel (orthonormality and reconstruction).
inline constexpr double svd_residual = 1e-12;
/// Relative spectral-separation floor of the Sylvester solver.
inline constexpr double sylvester_separation = 1e-12;
}  // namespace defaults

/// Thin SVD A = U diag(sigma) V^T with p = min(l, m) columns.
///
/// Sign convention (fixed for bit-stable regression tests): in each column
/// of U the entry of largest magnitude (lowest index on ties) is
/// nonnegative, and the matching column of V is flipped together with it.
struct SvdFactorization {
    DenseMatrix u;  ///< l x p, column-orthonormal
    Vector sigma;   ///< length p, nonnegative, descending
    DenseMatrix v;  ///< m x p, column-orthonormal
};

/// Computes the thin SVD. Deterministic for a fixed input. Throws
/// SvdConvergenceError when the kernel misses its residual contract.
SvdFactorization svd(const DenseMatrix& a);

/// Thin QR A = Q R with Q column-orthonormal and diag(R) >= 0
/// (deterministic sign fix). Requires cols <= rows; rank deficiency is
/// permitted (R may be singular).
struct QrFactorization {
    DenseMatrix q;  ///< rows x cols, column-orthonormal
    DenseMatrix r;  ///< cols x cols, upper triangular, nonnegative diagonal
};

QrFactorization thin_qr(const DenseMatrix& a);

/// Solves X A - M X = C for X, with A symmetric positive definite and M
/// symmetric positive semidefinite, via the eigendecompositions of both
/// operands. Throws NearSingularSylvesterError (naming the two closest
/// eigenvalues) when min_ij |eig_j(A) - eig_i(M)| falls below
/// sep_tol * max(1, |eig(A)|, |eig(M)|).
DenseMatrix solve_sylvester(const DenseMatrix& a_spd, const DenseMatrix& m_psd,
                            const DenseMatrix& c,
                            double sep_tol = defaults::sylvester_separation);

/// Column-orthonormal matrix from the QR of a seeded standard-normal draw.
DenseMatrix random_orthonormal(Rng& rng, Index rows, Index cols);

}  // namespace lowrank
