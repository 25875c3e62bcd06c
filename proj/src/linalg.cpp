#include "lowrank/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace lowrank {

namespace {

// Largest-magnitude entry of a column, lowest index on ties.
Index dominant_row(const DenseMatrix& m, Index col) {
    Index best = 0;
    double best_abs = std::abs(m(0, col));
    for (Index i = 1; i < m.rows(); ++i) {
        const double a = std::abs(m(i, col));
        if (a > best_abs) {
            best = i;
            best_abs = a;
        }
    }
    return best;
}

void apply_sign_convention(DenseMatrix& u, DenseMatrix& v) {
    for (Index j = 0; j < u.cols(); ++j) {
        if (u(dominant_row(u, j), j) < 0.0) {
            u.col(j) *= -1.0;
            v.col(j) *= -1.0;
        }
    }
}

}  // namespace

SvdFactorization svd(const DenseMatrix& a) {
    require_finite(a, "svd");
    Eigen::JacobiSVD<DenseMatrix> solver(a,
                                         Eigen::ComputeThinU | Eigen::ComputeThinV);
    SvdFactorization f;
    f.u = solver.matrixU();
    f.sigma = solver.singularValues();
    f.v = solver.matrixV();
    apply_sign_convention(f.u, f.v);

    const Index p = f.sigma.size();
    const double scale = std::max(1.0, a.norm());
    const double ortho =
        std::max((f.u.transpose() * f.u - DenseMatrix::Identity(p, p)).norm(),
                 (f.v.transpose() * f.v - DenseMatrix::Identity(p, p)).norm());
    const double recon =
        (a - f.u * f.sigma.asDiagonal() * f.v.transpose()).norm();
    const double residual = std::max(ortho, recon / scale);
    if (residual > defaults::svd_residual) {
        throw SvdConvergenceError(
            "svd: kernel missed its residual contract (residual " +
                std::to_string(residual) + ")",
            residual);
    }
    return f;
}

QrFactorization thin_qr(const DenseMatrix& a) {
    require_finite(a, "thin_qr");
    if (a.cols() > a.rows()) {
        throw ShapeError("thin_qr: requires cols <= rows");
    }
    Eigen::HouseholderQR<DenseMatrix> qr(a);
    const Index n = a.cols();
    DenseMatrix q = qr.householderQ() * DenseMatrix::Identity(a.rows(), n);
    DenseMatrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    for (Index k = 0; k < n; ++k) {
        if (r(k, k) < 0.0) {
            r.row(k) *= -1.0;
            q.col(k) *= -1.0;
        }
    }
    return {std::move(q), std::move(r)};
}

DenseMatrix solve_sylvester(const DenseMatrix& a_spd, const DenseMatrix& m_psd,
                            const DenseMatrix& c, double sep_tol) {
    if (a_spd.rows() != a_spd.cols() || m_psd.rows() != m_psd.cols()) {
        throw ShapeError("solve_sylvester: operands must be square");
    }
    if (c.rows() != m_psd.rows() || c.cols() != a_spd.rows()) {
        throw ShapeError("solve_sylvester: C must be " +
                         std::to_string(m_psd.rows()) + "x" +
                         std::to_string(a_spd.rows()));
    }
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig_a(a_spd);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig_m(m_psd);
    const Vector& lam_a = eig_a.eigenvalues();
    const Vector& lam_m = eig_m.eigenvalues();

    double closest_a = lam_a(0);
    double closest_m = lam_m(0);
    double separation = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < lam_a.size(); ++j) {
        for (Index i = 0; i < lam_m.size(); ++i) {
            const double d = std::abs(lam_a(j) - lam_m(i));
            if (d < separation) {
                separation = d;
                closest_a = lam_a(j);
                closest_m = lam_m(i);
            }
        }
    }
    const double scale = std::max({1.0, lam_a.cwiseAbs().maxCoeff(),
                                   lam_m.cwiseAbs().maxCoeff()});
    if (separation <= sep_tol * scale) {
        throw NearSingularSylvesterError(
            "solve_sylvester: near-singular Sylvester equation, closest "
            "eigenvalues " +
                std::to_string(closest_a) + " (A) and " +
                std::to_string(closest_m) + " (M)",
            closest_a, closest_m);
    }

    // X = Q_M Y Q_A^T with Y_ij = (Q_M^T C Q_A)_ij / (a_j - m_i).
    DenseMatrix y = eig_m.eigenvectors().transpose() * c * eig_a.eigenvectors();
    for (Index i = 0; i < y.rows(); ++i) {
        for (Index j = 0; j < y.cols(); ++j) {
            y(i, j) /= lam_a(j) - lam_m(i);
        }
    }
    return eig_m.eigenvectors() * y * eig_a.eigenvectors().transpose();
}

DenseMatrix random_orthonormal(Rng& rng, Index rows, Index cols) {
    return thin_qr(rng.normal_matrix(rows, cols)).q;
}

}  // namespace lowrank
