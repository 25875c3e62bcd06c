#include "lowrank/manifold.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace lowrank {

namespace {

// Singular values only.
Vector singular_values(const DenseMatrix& a) {
    return Eigen::JacobiSVD<DenseMatrix>(a).singularValues();
}

// Right-multiplication by (Z^T Z)^{-1} through a Cholesky solve.
DenseMatrix apply_gram_inverse(const Eigen::LLT<DenseMatrix>& llt,
                               const DenseMatrix& a) {
    return llt.solve(a.transpose()).transpose();
}

void require_tangent_at(const TangentVector& x, const FixedRankPoint& base,
                        const char* what) {
    require_same_base(x.base, base, what);
    const double scale = std::max(1.0, x.xu.norm());
    if ((base.u.transpose() * x.xu).norm() > 1e-8 * scale) {
        throw Error(std::string(what) + ": tangent vector is not horizontal");
    }
}

void require_normal_at(const NormalVector& n, const FixedRankPoint& base,
                       const char* what) {
    require_same_base(n.base, base, what);
    const double scale = std::max(1.0, n.n.norm());
    if ((base.u.transpose() * n.n).norm() > 1e-8 * scale ||
        (n.n * base.z).norm() > 1e-8 * scale) {
        throw Error(std::string(what) + ": vector is not normal at the base");
    }
}

}  // namespace

bool is_valid_point(const FixedRankPoint& p, double ortho_tol,
                    double eps_rank) {
    if (p.u.cols() != p.z.cols() || p.u.cols() < 1) return false;
    if (!p.u.allFinite() || !p.z.allFinite()) return false;
    const Index r = p.rank();
    if ((p.u.transpose() * p.u - DenseMatrix::Identity(r, r)).norm() >
        ortho_tol) {
        return false;
    }
    const Vector sz = singular_values(p.z);
    return sz(0) > 0.0 && sz(r - 1) > eps_rank * sz(0);
}

void require_valid_point(const FixedRankPoint& p, const char* what,
                         double ortho_tol, double eps_rank) {
    if (!is_valid_point(p, ortho_tol, eps_rank)) {
        throw Error(std::string(what) +
                    ": invalid factored point (orthonormality or rank floor)");
    }
}

bool same_base(const FixedRankPoint& a, const FixedRankPoint& b, double tol) {
    if (a.u.rows() != b.u.rows() || a.z.rows() != b.z.rows() ||
        a.rank() != b.rank()) {
        return false;
    }
    const double scale =
        std::max({1.0, a.u.norm(), a.z.norm(), b.u.norm(), b.z.norm()});
    return (a.u - b.u).norm() <= tol * scale && (a.z - b.z).norm() <= tol * scale;
}

void require_same_base(const FixedRankPoint& a, const FixedRankPoint& b,
                       const char* what) {
    if (!same_base(a, b)) {
        throw BaseMismatchError(std::string(what) +
                                ": operands anchored at different base points");
    }
}

FixedRankPoint factor_from_dense(const DenseMatrix& r_dense, Index r,
                                 double eps_rank) {
    if (r < 1 || r > std::min(r_dense.rows(), r_dense.cols())) {
        throw ShapeError("factor_from_dense: rank out of range");
    }
    const SvdFactorization f = svd(r_dense);
    if (f.sigma(0) <= 0.0 || f.sigma(r - 1) <= eps_rank * f.sigma(0)) {
        throw RankDeficientError(
            "factor_from_dense: rank-deficient input (sigma_" +
            std::to_string(r) + " = " + std::to_string(f.sigma(r - 1)) + ")");
    }
    FixedRankPoint p;
    p.u = f.u.leftCols(r);
    p.z = f.v.leftCols(r) * f.sigma.head(r).asDiagonal();
    return p;
}

TangentVector project_tangent(const FixedRankPoint& base,
                              const DenseMatrix& amb) {
    if (amb.rows() != base.rows() || amb.cols() != base.cols()) {
        throw ShapeError("project_tangent: ambient shape mismatch");
    }
    const DenseMatrix gram = base.z.transpose() * base.z;
    Eigen::LLT<DenseMatrix> llt(gram);
    DenseMatrix w = amb * base.z;
    w -= base.u * (base.u.transpose() * w);
    TangentVector x;
    x.base = base;
    x.xu = apply_gram_inverse(llt, w);
    x.xz = amb.transpose() * base.u;
    return x;
}

NormalVector project_normal(const FixedRankPoint& base,
                            const DenseMatrix& amb) {
    if (amb.rows() != base.rows() || amb.cols() != base.cols()) {
        throw ShapeError("project_normal: ambient shape mismatch");
    }
    const DenseMatrix gram = base.z.transpose() * base.z;
    Eigen::LLT<DenseMatrix> llt(gram);
    DenseMatrix a = amb - base.u * (base.u.transpose() * amb);
    const DenseMatrix az = apply_gram_inverse(llt, a * base.z);
    NormalVector n;
    n.base = base;
    n.n = a - az * base.z.transpose();
    return n;
}

double metric(const TangentVector& x, const TangentVector& y) {
    require_same_base(x.base, y.base, "metric");
    const DenseMatrix gram = x.base.z.transpose() * x.base.z;
    return (x.xu * gram).cwiseProduct(y.xu).sum() +
           x.xz.cwiseProduct(y.xz).sum();
}

NormalVector christoffel(const TangentVector& x, const TangentVector& y) {
    require_same_base(x.base, y.base, "christoffel");
    const DenseMatrix s =
        x.xu * y.xz.transpose() + y.xu * x.xz.transpose();
    NormalVector n = project_normal(x.base, s);
    n.n = -n.n;
    return n;
}

TangentVector weingarten(const FixedRankPoint& base, const NormalVector& n,
                         const TangentVector& x) {
    require_normal_at(n, base, "weingarten");
    require_tangent_at(x, base, "weingarten");
    const DenseMatrix gram = base.z.transpose() * base.z;
    Eigen::LLT<DenseMatrix> llt(gram);
    TangentVector out;
    out.base = base;
    out.xu = apply_gram_inverse(llt, n.n * x.xz);
    out.xz = n.n.transpose() * x.xu;
    return out;
}

CurvatureSpectrum curvature_spectrum(const FixedRankPoint& base,
                                     const NormalVector& n, double eps_rank) {
    require_normal_at(n, base, "curvature_spectrum");
    require_valid_point(base, "curvature_spectrum");
    const Index r = base.rank();
    const SvdFactorization sr = svd(base.dense());
    const SvdFactorization sn = svd(n.n);

    Index k = 0;
    const double floor = eps_rank * (sn.sigma.size() ? sn.sigma(0) : 0.0);
    while (k < sn.sigma.size() && sn.sigma(k) > floor && sn.sigma(k) > 0.0) ++k;

    CurvatureSpectrum spectrum;
    spectrum.nonzero_count = static_cast<int>(2 * k * r);
    spectrum.entries.reserve(static_cast<std::size_t>(2 * k * r));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (Index i = 0; i < r; ++i) {
        for (Index j = 0; j < k; ++j) {
            const double kappa = sn.sigma(j) / sr.sigma(i);
            const DenseMatrix cross_a =
                sn.u.col(j) * sr.v.col(i).transpose();
            const DenseMatrix cross_b =
                sr.u.col(i) * sn.v.col(j).transpose();
            spectrum.entries.push_back(
                {kappa,
                 project_tangent(base, inv_sqrt2 * (cross_a + cross_b))});
            spectrum.entries.push_back(
                {-kappa,
                 project_tangent(base, inv_sqrt2 * (cross_a - cross_b))});
        }
    }
    return spectrum;
}

DenseMatrix assemble_weingarten_operator(const FixedRankPoint& base,
                                         const NormalVector& n) {
    require_normal_at(n, base, "assemble_weingarten_operator");
    const Index l = base.rows();
    const Index m = base.cols();
    const Index r = base.rank();
    const Index dim = (l + m) * r - r * r;

    // Orthonormal completion of U and the inverse square root of Z^T Z make
    // the enumerated basis orthonormal under the inherited metric:
    // type-1 vectors (U_perp e_a e_b^T G^{-1/2}, 0), type-2 vectors (0, E_cd).
    Eigen::HouseholderQR<DenseMatrix> qr(base.u);
    const DenseMatrix full_q =
        qr.householderQ() * DenseMatrix::Identity(l, l);
    const DenseMatrix u_perp = full_q.rightCols(l - r);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> gram_eig(base.z.transpose() *
                                                        base.z);
    const DenseMatrix gram_inv_sqrt = gram_eig.operatorInverseSqrt();

    auto basis_vector = [&](Index idx) {
        TangentVector x;
        x.base = base;
        x.xu = DenseMatrix::Zero(l, r);
        x.xz = DenseMatrix::Zero(m, r);
        if (idx < (l - r) * r) {
            const Index a = idx / r;
            const Index b = idx % r;
            x.xu = u_perp.col(a) * gram_inv_sqrt.row(b);
        } else {
            const Index j = idx - (l - r) * r;
            x.xz(j / r, j % r) = 1.0;
        }
        return x;
    };

    DenseMatrix op(dim, dim);
    std::vector<TangentVector> basis;
    basis.reserve(static_cast<std::size_t>(dim));
    for (Index i = 0; i < dim; ++i) basis.push_back(basis_vector(i));
    for (Index a = 0; a < dim; ++a) {
        const TangentVector image = weingarten(base, n, basis[a]);
        for (Index b = 0; b <= a; ++b) {
            const double value = metric(basis[b], image);
            op(b, a) = value;
            op(a, b) = value;
        }
    }
    return op;
}

TangentVector covariant_derivative(const TangentVector& x,
                                   const TangentVector& y,
                                   const DenseMatrix& dy_u,
                                   const DenseMatrix& dy_z) {
    require_same_base(x.base, y.base, "covariant_derivative");
    if (dy_u.rows() != x.xu.rows() || dy_u.cols() != x.xu.cols() ||
        dy_z.rows() != x.xz.rows() || dy_z.cols() != x.xz.cols()) {
        throw ShapeError("covariant_derivative: derivative shape mismatch");
    }
    const FixedRankPoint& base = x.base;
    const DenseMatrix gram = base.z.transpose() * base.z;
    Eigen::LLT<DenseMatrix> llt(gram);

    const DenseMatrix mixed =
        (x.xu * y.xz.transpose() + y.xu * x.xz.transpose()) * base.z;
    TangentVector out;
    out.base = base;
    out.xu = dy_u + base.u * (x.xu.transpose() * y.xu) +
             apply_gram_inverse(llt, mixed);
    out.xz = dy_z - base.z * (y.xu.transpose() * x.xu);
    out.xu -= base.u * (base.u.transpose() * out.xu);
    return out;
}

ExpMapResult exp_map(const FixedRankPoint& base, const TangentVector& x,
                     int n_steps) {
    require_valid_point(base, "exp_map");
    require_tangent_at(x, base, "exp_map");
    if (n_steps < 1) throw Error("exp_map: n_steps must be positive");

    struct State {
        DenseMatrix u, vu, z, vz;
    };
    State s{base.u, x.xu, base.z, x.xz};
    const double h = 1.0 / n_steps;
    const double initial_scale = singular_values(base.z)(0);

    auto rhs = [](const State& y) {
        State d;
        const DenseMatrix gram = y.z.transpose() * y.z;
        Eigen::LLT<DenseMatrix> llt(gram);
        const DenseMatrix vutvu = y.vu.transpose() * y.vu;
        const DenseMatrix w = y.vz.transpose() * y.z;  // Z'^T Z
        d.u = y.vu;
        d.vu = -y.u * vutvu -
               2.0 * y.vu * llt.solve(w.transpose()).transpose();
        d.z = y.vz;
        d.vz = y.z * vutvu;
        return d;
    };

    auto axpy = [](const State& y, double a, const State& d) {
        return State{y.u + a * d.u, y.vu + a * d.vu, y.z + a * d.z,
                     y.vz + a * d.vz};
    };

    for (int step = 0; step < n_steps; ++step) {
        const State k1 = rhs(s);
        const State k2 = rhs(axpy(s, 0.5 * h, k1));
        const State k3 = rhs(axpy(s, 0.5 * h, k2));
        const State k4 = rhs(axpy(s, h, k3));
        s.u += (h / 6.0) * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u);
        s.vu += (h / 6.0) * (k1.vu + 2.0 * k2.vu + 2.0 * k3.vu + k4.vu);
        s.z += (h / 6.0) * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z);
        s.vz += (h / 6.0) * (k1.vz + 2.0 * k2.vz + 2.0 * k3.vz + k4.vz);

        // The gauge constraint U^T U' = 0 is only propagated approximately
        // by an explicit scheme; re-project the velocity each step.
        s.vu -= s.u * (s.u.transpose() * s.vu);

        const double t = (step + 1) * h;
        const Vector sz = singular_values(s.z);
        // Collapse is measured against both the current and the initial
        // scale; a uniform shrink toward the zero matrix must trip it too.
        if (!(sz(0) > 0.0) ||
            sz(sz.size() - 1) <=
                defaults::eps_rank * std::max(sz(0), initial_scale)) {
            throw RankCollapseError(
                "exp_map: geodesic left the manifold at t = " +
                    std::to_string(t),
                t);
        }
        const Index r = base.rank();
        if ((s.u.transpose() * s.u - DenseMatrix::Identity(r, r)).norm() >
            0.05) {
            throw Error("exp_map: gauge drift exceeded the monitor threshold");
        }
    }

    ExpMapResult out;
    const DenseMatrix velocity_dense =
        s.vu * s.z.transpose() + s.u * s.vz.transpose();
    out.point = gauge_fix(FixedRankPoint{s.u, s.z});
    out.velocity = project_tangent(out.point, velocity_dense);
    return out;
}

FixedRankPoint gauge_fix(const FixedRankPoint& p) {
    const Index r = p.rank();
    const double drift =
        (p.u.transpose() * p.u - DenseMatrix::Identity(r, r)).norm();
    if (!(drift <= 0.1)) {
        throw Error("gauge_fix: drift too large (" + std::to_string(drift) +
                    ")");
    }
    const QrFactorization qr = thin_qr(p.u);
    for (Index i = 0; i < r; ++i) {
        if (qr.r(i, i) <= 1e-8) {
            throw RankDeficientError("gauge_fix: U numerically rank-deficient");
        }
    }
    return FixedRankPoint{qr.q, p.z * qr.r.transpose()};
}

}  // namespace lowrank
