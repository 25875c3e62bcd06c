#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace lowrank;
using namespace lowrank_test;

namespace {

DenseMatrix reconstruct(const SvdFactorization& f) {
    return f.u * f.sigma.asDiagonal() * f.v.transpose();
}

}  // namespace

TEST_CASE("rng matches the splitmix64 reference vectors") {
    Rng rng(0);
    CHECK(rng.next_u64() == 0xE220A8397B1DCDAFULL);
    CHECK(rng.next_u64() == 0x6E789E6AA1B965F4ULL);
    CHECK(rng.next_u64() == 0x06C45D188009454FULL);
    Rng again(0);
    again.next_u64();
    CHECK(again.next_u64() == 0x6E789E6AA1B965F4ULL);

    Rng u(42);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("svd of a diagonal matrix is the identity factorization") {
    DenseMatrix a = DenseMatrix::Zero(2, 2);
    a(0, 0) = 3.0;
    a(1, 1) = 1.0;
    const SvdFactorization f = svd(a);
    CHECK(f.sigma(0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(f.sigma(1) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK((f.u - DenseMatrix::Identity(2, 2)).norm() < 1e-14);
    CHECK((f.v - DenseMatrix::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("svd of the zero matrix keeps the contract") {
    const DenseMatrix a = DenseMatrix::Zero(2, 3);
    const SvdFactorization f = svd(a);
    CHECK(f.sigma.size() == 2);
    CHECK(f.sigma(0) == 0.0);
    CHECK(f.sigma(1) == 0.0);
    CHECK((f.u.transpose() * f.u - DenseMatrix::Identity(2, 2)).norm() < 1e-12);
    CHECK((f.v.transpose() * f.v - DenseMatrix::Identity(2, 2)).norm() < 1e-12);
    // Sign convention: the dominant entry of each U column is nonnegative.
    for (Index j = 0; j < f.u.cols(); ++j) {
        Index arg = 0;
        f.u.col(j).cwiseAbs().maxCoeff(&arg);
        CHECK(f.u(arg, j) >= 0.0);
    }
}

TEST_CASE("svd reconstruction, orthonormality, ordering on random inputs") {
    Rng rng(7);
    for (int instance = 0; instance < 20; ++instance) {
        const Index l = 3 + static_cast<Index>(rng.next_u64() % 6);
        const Index m = 3 + static_cast<Index>(rng.next_u64() % 6);
        const DenseMatrix a = rng.normal_matrix(l, m);
        const SvdFactorization f = svd(a);
        const Index p = std::min(l, m);
        CHECK(f.sigma.size() == p);
        CHECK((reconstruct(f) - a).norm() <= 1e-12 * std::max(1.0, a.norm()));
        CHECK((f.u.transpose() * f.u - DenseMatrix::Identity(p, p)).norm() <
              1e-12);
        CHECK((f.v.transpose() * f.v - DenseMatrix::Identity(p, p)).norm() <
              1e-12);
        for (Index i = 0; i + 1 < p; ++i) CHECK(f.sigma(i) >= f.sigma(i + 1));
    }
}

TEST_CASE("svd is deterministic and reproduces a planted spectrum") {
    Rng rng(11);
    Vector sigma(4);
    sigma << 5.0, 2.5, 1.0, 0.25;
    const DenseMatrix a = matrix_with_spectrum(rng, 6, 5, sigma);
    const SvdFactorization f1 = svd(a);
    const SvdFactorization f2 = svd(a);
    CHECK(f1.u == f2.u);
    CHECK(f1.v == f2.v);
    CHECK(f1.sigma == f2.sigma);
    for (Index i = 0; i < 4; ++i) {
        CHECK(std::abs(f1.sigma(i) - sigma(i)) <= 1e-12);
    }
    CHECK(f1.sigma(4) <= 1e-12);
}

TEST_CASE("thin_qr identity and hand-checked 2x1 case") {
    const DenseMatrix eye = DenseMatrix::Identity(3, 3);
    const QrFactorization qf = thin_qr(eye);
    CHECK((qf.q - eye).norm() < 1e-14);
    CHECK((qf.r - eye).norm() < 1e-14);

    DenseMatrix col(2, 1);
    col << 1.0, 1.0;
    const QrFactorization qc = thin_qr(col);
    CHECK(qc.q(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(qc.q(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(qc.r(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    CHECK((qc.q * qc.r - col).norm() < 1e-14);
}

TEST_CASE("thin_qr random reconstruction and sign determinism") {
    Rng rng(13);
    for (int instance = 0; instance < 20; ++instance) {
        const DenseMatrix a = rng.normal_matrix(6, 3);
        const QrFactorization qf = thin_qr(a);
        CHECK((qf.q * qf.r - a).norm() <= 1e-12 * std::max(1.0, a.norm()));
        CHECK((qf.q.transpose() * qf.q - DenseMatrix::Identity(3, 3)).norm() <
              1e-12);
        for (Index i = 0; i < 3; ++i) {
            CHECK(qf.r(i, i) >= 0.0);
            for (Index j = 0; j < i; ++j) CHECK(qf.r(i, j) == 0.0);
        }
    }
}

TEST_CASE("thin_qr permits rank deficiency and rejects wide inputs") {
    DenseMatrix a(4, 2);
    a.col(0) << 1.0, 2.0, 3.0, 4.0;
    a.col(1) = 2.0 * a.col(0);
    const QrFactorization qf = thin_qr(a);
    CHECK((qf.q * qf.r - a).norm() <= 1e-12 * a.norm());

    const DenseMatrix wide = DenseMatrix::Ones(2, 4);
    CHECK_THROWS_AS((void)thin_qr(wide), ShapeError);
}

TEST_CASE("frobenius_inner matches hand values and rejects shape mismatch") {
    const DenseMatrix eye = DenseMatrix::Identity(2, 2);
    CHECK(frobenius_inner(eye, eye) == doctest::Approx(2.0));

    DenseMatrix a(2, 2), b(2, 2);
    a << 1.0, 2.0, 3.0, 4.0;
    b << 0.0, 1.0, 1.0, 0.0;
    CHECK(frobenius_inner(a, b) == doctest::Approx(5.0));
    CHECK(frobenius_inner(a, DenseMatrix::Zero(2, 2)) == 0.0);
    CHECK_THROWS_AS((void)frobenius_inner(a, DenseMatrix::Zero(2, 3)),
                    ShapeError);
}

TEST_CASE("solve_sylvester decoupled scalar case") {
    const DenseMatrix a = 2.0 * DenseMatrix::Identity(3, 3);
    const DenseMatrix m = DenseMatrix::Zero(4, 4);
    Rng rng(17);
    const DenseMatrix c = rng.normal_matrix(4, 3);
    const DenseMatrix x = solve_sylvester(a, m, c);
    CHECK((x - 0.5 * c).norm() < 1e-13);
}

TEST_CASE("solve_sylvester entrywise 1x2 case") {
    DenseMatrix a(2, 2);
    a << 4.0, 0.0, 0.0, 1.0;
    DenseMatrix m(1, 1);
    m << 2.0;
    DenseMatrix c(1, 2);
    c << 6.0, 3.0;
    const DenseMatrix x = solve_sylvester(a, m, c);
    CHECK(x(0, 0) == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(x(0, 1) == doctest::Approx(-3.0).epsilon(1e-13));
}

TEST_CASE("solve_sylvester rejects colliding spectra naming the eigenvalues") {
    DenseMatrix a(2, 2);
    a << 2.0, 0.0, 0.0, 5.0;
    DenseMatrix m(1, 1);
    m << 2.0;
    const DenseMatrix c = DenseMatrix::Ones(1, 2);
    try {
        (void)solve_sylvester(a, m, c);
        FAIL("expected NearSingularSylvesterError");
    } catch (const NearSingularSylvesterError& e) {
        CHECK(e.eig_a == doctest::Approx(2.0));
        CHECK(e.eig_m == doctest::Approx(2.0));
    }
}

TEST_CASE("solve_sylvester residual on separated random SPD/PSD instances") {
    Rng rng(19);
    for (int instance = 0; instance < 20; ++instance) {
        const Index ra = 3, rm = 5;
        const DenseMatrix qa = random_orthonormal(rng, ra, ra);
        const DenseMatrix qm = random_orthonormal(rng, rm, rm);
        Vector eig_a(ra), eig_m(rm);
        for (Index i = 0; i < ra; ++i) eig_a(i) = rng.uniform(2.0, 4.0);
        for (Index i = 0; i < rm; ++i) eig_m(i) = rng.uniform(0.0, 1.9);
        const DenseMatrix a = qa * eig_a.asDiagonal() * qa.transpose();
        const DenseMatrix m = qm * eig_m.asDiagonal() * qm.transpose();
        const DenseMatrix c = rng.normal_matrix(rm, ra);
        const DenseMatrix x = solve_sylvester(a, m, c);
        CHECK((x * a - m * x - c).norm() <= 1e-10 * c.norm());
    }
}
