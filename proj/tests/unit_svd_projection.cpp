#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lowrank/svd_projection.hpp"
#include "test_support.hpp"

using namespace lowrank;
using namespace lowrank_test;

namespace {

DenseMatrix diag_matrix(std::initializer_list<double> values, Index rows,
                        Index cols) {
    DenseMatrix m = DenseMatrix::Zero(rows, cols);
    Index i = 0;
    for (const double v : values) {
        m(i, i) = v;
        ++i;
    }
    return m;
}

}  // namespace

TEST_CASE("truncate drops the trailing spectrum of a diagonal matrix") {
    const DenseMatrix amb = diag_matrix({3.0, 1.0}, 2, 2);
    const TruncationResult result = truncate(amb, 1);
    CHECK((result.point.dense() - diag_matrix({3.0}, 2, 2)).norm() < 1e-14);
    CHECK(result.gap.sigma_r == doctest::Approx(3.0));
    CHECK(result.gap.sigma_r1 == doctest::Approx(1.0));
    CHECK(result.gap.relative_gap == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("truncate fixes exact-rank inputs") {
    Rng rng(113);
    Vector sigma(3);
    sigma << 2.5, 1.2, 0.4;
    const DenseMatrix amb = matrix_with_spectrum(rng, 7, 5, sigma);
    const TruncationResult result = truncate(amb, 3);
    CHECK((result.point.dense() - amb).norm() <= 1e-10 * amb.norm());
    CHECK(result.gap.sigma_r1 <= 1e-12);
}

TEST_CASE("truncate residual is normal and optimal among random competitors") {
    Rng rng(127);
    const Index l = 8, m = 6, r = 3;
    const DenseMatrix amb = rng.normal_matrix(l, m);
    const SvdFactorization sv = svd(amb);
    const TruncationResult result = truncate(amb, r);

    double tail = 0.0;
    for (Index i = r; i < sv.sigma.size(); ++i) tail += sv.sigma(i) * sv.sigma(i);
    const DenseMatrix residual = amb - result.point.dense();
    CHECK(residual.squaredNorm() ==
          doctest::Approx(tail).epsilon(1e-10));
    CHECK(project_tangent(result.point, residual).dense().norm() <=
          1e-10 * amb.norm());

    for (int competitor = 0; competitor < 100; ++competitor) {
        const FixedRankPoint w = random_rank_point(rng, l, m, r);
        CHECK(residual.norm() <= (amb - w.dense()).norm() + 1e-10);
    }
}

TEST_CASE("principal curvatures at a truncation stay below one") {
    // The projection is differentiable at amb precisely because every
    // curvature in the residual direction is below 1 (sigma_{r+j} < sigma_i).
    Rng rng(359);
    for (int instance = 0; instance < 10; ++instance) {
        const Vector sigma = gap_spectrum(rng, 6, 2, 0.05);
        const DenseMatrix amb = matrix_with_spectrum(rng, 8, 6, sigma);
        const FixedRankPoint point = truncate(amb, 2).point;
        const NormalVector residual{point, amb - point.dense()};
        const CurvatureSpectrum spectrum = curvature_spectrum(point, residual);
        CHECK(!spectrum.entries.empty());
        for (const CurvatureEntry& entry : spectrum.entries) {
            CHECK(entry.kappa < 1.0 - 1e-12);
        }
    }
}

TEST_CASE("truncate rejects skeleton proximity and rank deficiency") {
    const DenseMatrix equal = diag_matrix({2.0, 2.0, 0.5}, 3, 3);
    try {
        (void)truncate(equal, 1);
        FAIL("expected SkeletonProximityError");
    } catch (const SkeletonProximityError& e) {
        CHECK(e.sigma_r == doctest::Approx(2.0));
        CHECK(e.sigma_r1 == doctest::Approx(2.0));
        CHECK(e.relative_gap <= 1e-12);
    }

    const DenseMatrix deficient = diag_matrix({3.0, 1.0}, 3, 3);
    CHECK_THROWS_AS((void)truncate(deficient, 3), RankDeficientError);
}

TEST_CASE("differential reduces to the tangent projection on exact-rank inputs") {
    Rng rng(131);
    Vector sigma(2);
    sigma << 2.0, 0.8;
    const DenseMatrix amb = matrix_with_spectrum(rng, 6, 5, sigma);
    const DenseMatrix dir = rng.normal_matrix(6, 5);
    const TangentVector diff = truncate_differential(amb, 2, dir);
    const DenseMatrix plain =
        project_tangent(truncate(amb, 2).point, dir).dense();
    CHECK((diff.dense() - plain).norm() <= 1e-12 * std::max(1.0, dir.norm()));
}

TEST_CASE("differential matches the hand-evaluated 2x2 case") {
    // With sigma = (3, 1) and direction e1 e2^T: the tangent part is
    // e1 e2^T, the curvature terms add 1/8 * (3 e2 e1^T + e1 e2^T).
    // Frozen from the central-difference oracle before the build.
    const DenseMatrix amb = diag_matrix({3.0, 1.0}, 2, 2);
    DenseMatrix dir = DenseMatrix::Zero(2, 2);
    dir(0, 1) = 1.0;  // e1 e2^T
    const TangentVector diff = truncate_differential(amb, 1, dir);
    DenseMatrix expected = DenseMatrix::Zero(2, 2);
    expected(0, 1) = 1.125;
    expected(1, 0) = 0.375;
    CHECK((diff.dense() - expected).norm() <= 1e-13);

    const double h = 1e-6;
    const DenseMatrix fd = (truncate(amb + h * dir, 1).point.dense() -
                            truncate(amb - h * dir, 1).point.dense()) /
                           (2.0 * h);
    CHECK((diff.dense() - fd).norm() <= 1e-9);
}

TEST_CASE("differential agrees with central finite differences") {
    Rng rng(137);
    const Index l = 8, m = 6, r = 2;
    const double h = 1e-5;
    for (int instance = 0; instance < 10; ++instance) {
        const Vector sigma = gap_spectrum(rng, std::min(l, m), r, 0.5);
        const DenseMatrix amb = matrix_with_spectrum(rng, l, m, sigma);
        const DenseMatrix dir = rng.normal_matrix(l, m);
        const TangentVector diff = truncate_differential(amb, r, dir);
        const DenseMatrix fd = (truncate(amb + h * dir, r).point.dense() -
                                truncate(amb - h * dir, r).point.dense()) /
                               (2.0 * h);
        CHECK((diff.dense() - fd).norm() <= 1e-6 * fd.norm());
        // Output is tangent at the truncated point.
        CHECK((diff.base.u.transpose() * diff.xu).norm() <= 1e-10);
    }
}

TEST_CASE("deviation bound dominates the measured deviation") {
    const DenseMatrix amb = diag_matrix({3.0, 1.0}, 2, 2);
    DenseMatrix dir = DenseMatrix::Zero(2, 2);
    dir(0, 1) = 1.0;
    CHECK(deviation_bound(amb, 1, dir) == doctest::Approx(0.5));

    Rng rng(139);
    Vector exact(2);
    exact << 2.0, 1.0;
    const DenseMatrix exact_amb = matrix_with_spectrum(rng, 5, 4, exact);
    CHECK(deviation_bound(exact_amb, 2, rng.normal_matrix(5, 4)) <= 1e-10);

    for (int instance = 0; instance < 10; ++instance) {
        const Vector sigma = gap_spectrum(rng, 4, 2, 0.2);
        const DenseMatrix a = matrix_with_spectrum(rng, 5, 4, sigma);
        const DenseMatrix d = rng.normal_matrix(5, 4);
        const TangentVector diff = truncate_differential(a, 2, d);
        const DenseMatrix plain =
            project_tangent(truncate(a, 2).point, d).dense();
        const double measured = (diff.dense() - plain).norm();
        CHECK(measured <= deviation_bound(a, 2, d) + 1e-12);
    }
}

TEST_CASE("best_rank_rhs on stationary and scaling inputs") {
    Rng rng(149);
    const Vector sigma = gap_spectrum(rng, 6, 2, 0.2);
    const DenseMatrix amb = matrix_with_spectrum(rng, 8, 6, sigma);
    const TrackedFactors tracked = tracked_from_dense(amb, 2);

    const FactorRates zero =
        best_rank_rhs(tracked, DenseMatrix::Zero(8, 6));
    CHECK(zero.du.norm() <= 1e-14);
    CHECK(zero.dz.norm() <= 1e-14);

    // A scaling of the retained part leaves the modes still and scales the
    // coefficients.
    const double c = 0.7;
    const FactorRates scaling =
        best_rank_rhs(tracked, c * tracked.point.dense());
    CHECK(scaling.du.norm() <= 1e-10);
    CHECK((scaling.dz - c * tracked.point.z).norm() <=
          1e-10 * tracked.point.z.norm());
}

TEST_CASE("best_rank_rhs assembles to the truncation differential") {
    Rng rng(151);
    for (int instance = 0; instance < 10; ++instance) {
        const Vector sigma = gap_spectrum(rng, 6, 2, 0.2);
        const DenseMatrix amb = matrix_with_spectrum(rng, 8, 6, sigma);
        const DenseMatrix amb_dot = rng.normal_matrix(8, 6);
        const TrackedFactors tracked = tracked_from_dense(amb, 2);
        const FactorRates rates = best_rank_rhs(tracked, amb_dot);
        const DenseMatrix assembled =
            rates.du * tracked.point.z.transpose() +
            tracked.point.u * rates.dz.transpose();
        const DenseMatrix diff =
            truncate_differential(amb, 2, amb_dot).dense();
        CHECK((assembled - diff).norm() <= 1e-10 * std::max(1.0, diff.norm()));
        CHECK((tracked.point.u.transpose() * rates.du).norm() <= 1e-12);
    }
}

TEST_CASE("tracked factors keep their triplets orthogonal to the point") {
    Rng rng(157);
    const Vector sigma = gap_spectrum(rng, 6, 2, 0.2);
    const DenseMatrix amb = matrix_with_spectrum(rng, 8, 6, sigma);
    const TrackedFactors tracked = tracked_from_dense(amb, 2);
    CHECK(tracked.normal_triplets.size() == 4);
    for (const NormalTriplet& triplet : tracked.normal_triplets) {
        CHECK((tracked.point.u.transpose() * triplet.u).norm() <= 1e-10);
        CHECK((tracked.point.z.transpose() * triplet.v).norm() <=
              1e-10 * tracked.point.z.norm());
    }
}

TEST_CASE("track_best_rank is constant on constant paths") {
    Rng rng(163);
    const Vector sigma = gap_spectrum(rng, 6, 2, 0.2);
    const DenseMatrix amb = matrix_with_spectrum(rng, 8, 6, sigma);
    const MatrixPath path = [&](double) {
        return std::make_pair(amb, DenseMatrix::Zero(8, 6).eval());
    };
    const Trajectory traj = track_best_rank(path, 0.0, 1.0, 0.05, 2);
    const DenseMatrix start = traj.front().point.dense();
    CHECK((traj.back().point.dense() - start).norm() <= 1e-12 * start.norm());
}

TEST_CASE("track_best_rank follows an exponential scaling in closed form") {
    Rng rng(167);
    const double c = 0.3;
    const Vector sigma = gap_spectrum(rng, 6, 2, 0.2);
    const DenseMatrix amb0 = matrix_with_spectrum(rng, 8, 6, sigma);
    const MatrixPath path = [&](double t) {
        const DenseMatrix value = std::exp(c * t) * amb0;
        return std::make_pair(value, (c * value).eval());
    };
    const Trajectory traj = track_best_rank(path, 0.0, 1.0, 1e-2, 2);
    const DenseMatrix expected =
        std::exp(c) * truncate(amb0, 2).point.dense();
    CHECK((traj.back().point.dense() - expected).norm() <=
          1e-8 * expected.norm());
}

TEST_CASE("track_best_rank reports a singular-value crossing with its time") {
    DenseMatrix u0 = DenseMatrix::Identity(4, 3);
    DenseMatrix v0 = DenseMatrix::Identity(3, 3);
    const MatrixPath path = [&](double t) {
        Vector s(3);
        s << 2.0 - t, 1.0 + t, 0.2;
        const DenseMatrix value = u0 * s.asDiagonal() * v0.transpose();
        Vector ds(3);
        ds << -1.0, 1.0, 0.0;
        const DenseMatrix rate = u0 * ds.asDiagonal() * v0.transpose();
        return std::make_pair(value, rate);
    };
    try {
        (void)track_best_rank(path, 0.0, 1.0, 1e-2, 1);
        FAIL("expected SkeletonProximityError");
    } catch (const SkeletonProximityError& e) {
        CHECK(e.at_time == doctest::Approx(0.5).epsilon(0.05));
    }
}
