#include "lowrank/svd_projection.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <string>

namespace lowrank {

namespace {

void check_gap(const GapReport& gap, double eps_gap, double at_time,
               const char* what) {
    if (!(gap.relative_gap > eps_gap)) {
        throw SkeletonProximityError(
            std::string(what) + ": skeleton proximity (sigma_r = " +
                std::to_string(gap.sigma_r) + ", sigma_r1 = " +
                std::to_string(gap.sigma_r1) + ", relative gap = " +
                std::to_string(gap.relative_gap) + ")",
            gap.sigma_r, gap.sigma_r1, gap.relative_gap, at_time);
    }
}

FixedRankPoint point_from_svd(const SvdFactorization& f, Index r) {
    FixedRankPoint p;
    p.u = f.u.leftCols(r);
    p.z = f.v.leftCols(r) * f.sigma.head(r).asDiagonal();
    return p;
}

}  // namespace

GapReport spectral_gap(const Vector& sigma, Index r) {
    GapReport gap;
    gap.sigma_r = sigma(r - 1);
    gap.sigma_r1 = r < sigma.size() ? sigma(r) : 0.0;
    gap.relative_gap =
        sigma(0) > 0.0 ? (gap.sigma_r - gap.sigma_r1) / sigma(0) : 0.0;
    return gap;
}

TruncationResult truncate(const DenseMatrix& amb, Index r, double eps_gap) {
    if (r < 1 || r > std::min(amb.rows(), amb.cols())) {
        throw ShapeError("truncate: rank out of range");
    }
    const SvdFactorization f = svd(amb);
    if (f.sigma(0) <= 0.0 || f.sigma(r - 1) <= defaults::eps_rank * f.sigma(0)) {
        throw RankDeficientError("truncate: numerical rank below " +
                                 std::to_string(r));
    }
    const GapReport gap = spectral_gap(f.sigma, r);
    check_gap(gap, eps_gap, 0.0, "truncate");
    return {point_from_svd(f, r), gap};
}

TangentVector truncate_differential(const DenseMatrix& amb, Index r,
                                    const DenseMatrix& dir, double eps_gap) {
    require_same_shape(amb, dir, "truncate_differential");
    const SvdFactorization f = svd(amb);
    if (f.sigma(0) <= 0.0 || f.sigma(r - 1) <= defaults::eps_rank * f.sigma(0)) {
        throw RankDeficientError(
            "truncate_differential: numerical rank below " + std::to_string(r));
    }
    check_gap(spectral_gap(f.sigma, r), eps_gap, 0.0, "truncate_differential");
    const FixedRankPoint point = point_from_svd(f, r);

    const Index p = f.sigma.size();
    Index k = 0;
    while (r + k < p && f.sigma(r + k) > defaults::sigma_skip * f.sigma(0)) ++k;

    DenseMatrix ambient = dir;
    if (k > 0) {
        // Cross projections u_a^T dir v_b for the retained head and the
        // discarded tail of the spectrum.
        const DenseMatrix head_u = f.u.leftCols(r);
        const DenseMatrix head_v = f.v.leftCols(r);
        const DenseMatrix tail_u = f.u.middleCols(r, k);
        const DenseMatrix tail_v = f.v.middleCols(r, k);
        const DenseMatrix cross_tail_head =
            tail_u.transpose() * dir * head_v;  // (j, i) = u_{r+j}^T dir v_i
        const DenseMatrix cross_head_tail =
            head_u.transpose() * dir * tail_v;  // (i, j) = u_i^T dir v_{r+j}

        // Expansion of the curvature series on the principal directions
        // (u_{r+j} v_i^T +/- u_i v_{r+j}^T)/sqrt(2) with eigen-coefficients
        // sigma_j / (sigma_i -/+ sigma_j); verified against central finite
        // differences of the truncation.
        DenseMatrix a(k, r);  // coefficients of u_{r+j} v_i^T
        DenseMatrix b(r, k);  // coefficients of u_i v_{r+j}^T
        for (Index i = 0; i < r; ++i) {
            const double si = f.sigma(i);
            for (Index j = 0; j < k; ++j) {
                const double sj = f.sigma(r + j);
                const double coef = sj / (si * si - sj * sj);
                a(j, i) = coef * (sj * cross_tail_head(j, i) +
                                  si * cross_head_tail(i, j));
                b(i, j) = coef * (si * cross_tail_head(j, i) +
                                  sj * cross_head_tail(i, j));
            }
        }
        ambient += tail_u * a * head_v.transpose() +
                   head_u * b * tail_v.transpose();
    }
    // The curvature correction is already tangent at the truncated point,
    // so a single tangent projection yields the horizontal components.
    return project_tangent(point, ambient);
}

double deviation_bound(const DenseMatrix& amb, Index r, const DenseMatrix& dir,
                       double eps_gap) {
    const Vector sigma = svd(amb).sigma;
    const GapReport gap = spectral_gap(sigma, r);
    check_gap(gap, eps_gap, 0.0, "deviation_bound");
    if (gap.sigma_r1 <= 0.0) return 0.0;
    return gap.sigma_r1 / (gap.sigma_r - gap.sigma_r1) * dir.norm();
}

TrackedFactors tracked_from_dense(const DenseMatrix& amb, Index r,
                                  double eps_gap) {
    const SvdFactorization f = svd(amb);
    if (f.sigma(0) <= 0.0 || f.sigma(r - 1) <= defaults::eps_rank * f.sigma(0)) {
        throw RankDeficientError("tracked_from_dense: numerical rank below " +
                                 std::to_string(r));
    }
    check_gap(spectral_gap(f.sigma, r), eps_gap, 0.0, "tracked_from_dense");
    TrackedFactors tracked;
    tracked.point = point_from_svd(f, r);
    for (Index j = r; j < f.sigma.size(); ++j) {
        if (f.sigma(j) <= defaults::sigma_skip * f.sigma(0)) break;
        tracked.normal_triplets.push_back({f.sigma(j), f.u.col(j), f.v.col(j)});
    }
    return tracked;
}

FactorRates best_rank_rhs(const TrackedFactors& tracked,
                          const DenseMatrix& amb_dot) {
    const FixedRankPoint& point = tracked.point;
    if (amb_dot.rows() != point.rows() || amb_dot.cols() != point.cols()) {
        throw ShapeError("best_rank_rhs: amb_dot shape mismatch");
    }
    const Index r = point.rank();
    const DenseMatrix gram = point.z.transpose() * point.z;
    Eigen::LLT<DenseMatrix> llt(gram);
    auto gram_inv = [&](const DenseMatrix& m) {
        return llt.solve(m.transpose()).transpose().eval();
    };

    FactorRates rates;
    DenseMatrix wu = amb_dot * point.z;
    wu -= point.u * (point.u.transpose() * wu);
    rates.du = gram_inv(wu);
    rates.dz = amb_dot.transpose() * point.u;

    const Index k = static_cast<Index>(tracked.normal_triplets.size());
    if (k > 0) {
        // Retained triplets of the tracked approximation itself.
        const SvdFactorization retained = svd(point.dense());
        const DenseMatrix head_u = retained.u.leftCols(r);
        const DenseMatrix head_v = retained.v.leftCols(r);
        const Vector sigma_head = retained.sigma.head(r);

        DenseMatrix tail_u(point.rows(), k);
        DenseMatrix tail_v(point.cols(), k);
        Vector sigma_tail(k);
        for (Index j = 0; j < k; ++j) {
            const NormalTriplet& triplet =
                tracked.normal_triplets[static_cast<std::size_t>(j)];
            tail_u.col(j) = triplet.u;
            tail_v.col(j) = triplet.v;
            sigma_tail(j) = triplet.sigma;
        }
        const double sigma_max_tail = sigma_tail.maxCoeff();
        const double sigma_min_head = sigma_head(r - 1);
        if (sigma_max_tail >= sigma_min_head) {
            throw Error(
                "best_rank_rhs: inconsistent tracked factors (a discarded "
                "triplet dominates a retained one)");
        }

        const DenseMatrix cross_tail_head =
            tail_u.transpose() * amb_dot * head_v;
        const DenseMatrix cross_head_tail =
            head_u.transpose() * amb_dot * tail_v;

        // Same eigen-expansion coefficients as the truncation differential
        // (the mode rates are its horizontal lift).
        DenseMatrix a(k, r);  // u-side coefficients of u_{r+j} v_i^T
        DenseMatrix c(k, r);  // z-side coefficients of v_{r+j} u_i^T
        for (Index i = 0; i < r; ++i) {
            const double si = sigma_head(i);
            for (Index j = 0; j < k; ++j) {
                const double sj = sigma_tail(j);
                const double coef = sj / (si * si - sj * sj);
                a(j, i) = coef * (sj * cross_tail_head(j, i) +
                                  si * cross_head_tail(i, j));
                c(j, i) = coef * (si * cross_tail_head(j, i) +
                                  sj * cross_head_tail(i, j));
            }
        }
        rates.du += gram_inv(tail_u * (a * (head_v.transpose() * point.z)));
        rates.dz += tail_v * (c * (head_u.transpose() * point.u));
    }
    // Keep the tracking flow in the dynamically orthogonal gauge.
    rates.du -= point.u * (point.u.transpose() * rates.du);
    return rates;
}

Trajectory track_best_rank(const MatrixPath& path, double t0, double t1,
                           double dt, Index r, double eps_gap,
                           int record_stride) {
    if (!(t1 > t0) || !(dt > 0.0)) {
        throw Error("track_best_rank: need t1 > t0 and dt > 0");
    }
    if (record_stride < 1) record_stride = 1;
    const long n_steps = std::max<long>(1, std::lround((t1 - t0) / dt));
    const double h = (t1 - t0) / static_cast<double>(n_steps);

    auto stage_rates = [&](double t, const FixedRankPoint& p) {
        auto [amb, amb_dot] = path(t);
        const SvdFactorization f = svd(amb);
        check_gap(spectral_gap(f.sigma, r), eps_gap, t, "track_best_rank");
        TrackedFactors tracked;
        tracked.point = p;
        for (Index j = r; j < f.sigma.size(); ++j) {
            if (f.sigma(j) <= defaults::sigma_skip * f.sigma(0)) break;
            tracked.normal_triplets.push_back(
                {f.sigma(j), f.u.col(j), f.v.col(j)});
        }
        return best_rank_rhs(tracked, amb_dot);
    };

    auto record = [&](Trajectory& traj, double t, const FixedRankPoint& p) {
        TrajectorySample sample;
        sample.t = t;
        sample.point = p;
        auto [amb, amb_dot] = path(t);
        (void)amb_dot;
        const SvdFactorization f = svd(amb);
        const GapReport gap = spectral_gap(f.sigma, r);
        sample.sigma_r = gap.sigma_r;
        sample.sigma_r1 = gap.sigma_r1;
        sample.residual_norm = (amb - p.dense()).norm();
        sample.reconstruction_error =
            (p.dense() - point_from_svd(f, r).dense()).norm();
        const Index rr = p.rank();
        sample.gauge_drift =
            (p.u.transpose() * p.u - DenseMatrix::Identity(rr, rr)).norm();
        traj.samples.push_back(std::move(sample));
    };

    FixedRankPoint p = truncate(path(t0).first, r, eps_gap).point;
    Trajectory traj;
    record(traj, t0, p);

    for (long step = 0; step < n_steps; ++step) {
        const double t = t0 + h * static_cast<double>(step);
        const FactorRates k1 = stage_rates(t, p);
        const FixedRankPoint p2{p.u + 0.5 * h * k1.du, p.z + 0.5 * h * k1.dz};
        const FactorRates k2 = stage_rates(t + 0.5 * h, p2);
        const FixedRankPoint p3{p.u + 0.5 * h * k2.du, p.z + 0.5 * h * k2.dz};
        const FactorRates k3 = stage_rates(t + 0.5 * h, p3);
        const FixedRankPoint p4{p.u + h * k3.du, p.z + h * k3.dz};
        const FactorRates k4 = stage_rates(t + h, p4);
        p.u += (h / 6.0) * (k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du);
        p.z += (h / 6.0) * (k1.dz + 2.0 * k2.dz + 2.0 * k3.dz + k4.dz);
        p = gauge_fix(p);
        const double t_next = t0 + h * static_cast<double>(step + 1);
        if ((step + 1) % record_stride == 0 || step + 1 == n_steps) {
            record(traj, t_next, p);
        }
    }
    return traj;
}

}  // namespace lowrank
