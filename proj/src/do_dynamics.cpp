#include "lowrank/do_dynamics.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace lowrank {

namespace {

DenseMatrix eval_field(const VectorField& f, double t, const DenseMatrix& r) {
    DenseMatrix out = f.eval(t, r);
    if (out.rows() != r.rows() || out.cols() != r.cols()) {
        throw ShapeError("VectorField: output shape differs from input");
    }
    return out;
}

/// Dense increment function of the configured one-step scheme.
DenseMatrix field_increment(const VectorField& f, double t,
                            const DenseMatrix& r, double h, Scheme scheme) {
    switch (scheme) {
        case Scheme::euler:
            return eval_field(f, t, r);
        case Scheme::heun_rk2: {
            const DenseMatrix k1 = eval_field(f, t, r);
            return eval_field(f, t + 0.5 * h, r + (0.5 * h) * k1);
        }
        case Scheme::rk4: {
            const DenseMatrix k1 = eval_field(f, t, r);
            const DenseMatrix k2 = eval_field(f, t + 0.5 * h, r + (0.5 * h) * k1);
            const DenseMatrix k3 = eval_field(f, t + 0.5 * h, r + (0.5 * h) * k2);
            const DenseMatrix k4 = eval_field(f, t + h, r + h * k3);
            return (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        }
    }
    throw Error("integrate_do: unknown scheme");
}

struct FactorState {
    DenseMatrix u, z;
};

Vector z_singular_values(const DenseMatrix& z) {
    return Eigen::JacobiSVD<DenseMatrix>(z).singularValues();
}

long grid_steps(const DoRunConfig& cfg) {
    if (!(cfg.t1 > cfg.t0) || !(cfg.dt > 0.0) || cfg.dt > cfg.t1 - cfg.t0 + 1e-15) {
        throw Error("DoRunConfig: need t1 > t0 and 0 < dt <= t1 - t0");
    }
    return std::max<long>(1, std::lround((cfg.t1 - cfg.t0) / cfg.dt));
}

}  // namespace

TangentVector do_rhs(const FixedRankPoint& p, double t, const VectorField& f) {
    return project_tangent(p, eval_field(f, t, p.dense()));
}

Trajectory integrate_do(const FixedRankPoint& p0, const VectorField& f,
                        const DoRunConfig& cfg) {
    require_valid_point(p0, "integrate_do");
    const long n_steps = grid_steps(cfg);
    const double h = (cfg.t1 - cfg.t0) / static_cast<double>(n_steps);
    const int stride = std::max(1, cfg.record_stride);
    const Index r = p0.rank();

    Trajectory traj;
    auto record_factor = [&](double t, const FixedRankPoint& p) {
        TrajectorySample sample;
        sample.t = t;
        sample.point = p;
        const DenseMatrix field = eval_field(f, t, p.dense());
        const TangentVector x = project_tangent(p, field);
        sample.do_residual = (p.u.transpose() * x.xu).norm();
        sample.gauge_drift =
            (p.u.transpose() * p.u - DenseMatrix::Identity(r, r)).norm();
        sample.residual_norm = (field - x.dense()).norm();
        const Vector sz = z_singular_values(p.z);
        sample.sigma_r = sz(r - 1);
        sample.sigma_r1 = 0.0;
        traj.samples.push_back(std::move(sample));
    };

    if (cfg.mode == DoMode::factor_ode) {
        FactorState s{p0.u, p0.z};
        auto rates = [&](double t, const FactorState& y) {
            const TangentVector x = do_rhs(FixedRankPoint{y.u, y.z}, t, f);
            return FactorState{x.xu, x.xz};
        };
        record_factor(cfg.t0, p0);
        for (long step = 0; step < n_steps; ++step) {
            const double t = cfg.t0 + h * static_cast<double>(step);
            FactorState incr{DenseMatrix(), DenseMatrix()};
            switch (cfg.scheme) {
                case Scheme::euler:
                    incr = rates(t, s);
                    break;
                case Scheme::heun_rk2: {
                    const FactorState k1 = rates(t, s);
                    const FactorState mid{s.u + 0.5 * h * k1.u,
                                          s.z + 0.5 * h * k1.z};
                    incr = rates(t + 0.5 * h, mid);
                    break;
                }
                case Scheme::rk4: {
                    const FactorState k1 = rates(t, s);
                    const FactorState k2 = rates(
                        t + 0.5 * h,
                        FactorState{s.u + 0.5 * h * k1.u, s.z + 0.5 * h * k1.z});
                    const FactorState k3 = rates(
                        t + 0.5 * h,
                        FactorState{s.u + 0.5 * h * k2.u, s.z + 0.5 * h * k2.z});
                    const FactorState k4 = rates(
                        t + h, FactorState{s.u + h * k3.u, s.z + h * k3.z});
                    incr = FactorState{
                        (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u) / 6.0,
                        (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z) / 6.0};
                    break;
                }
            }
            s.u += h * incr.u;
            s.z += h * incr.z;
            const double t_next = cfg.t0 + h * static_cast<double>(step + 1);
            if (cfg.gauge_every > 0 && (step + 1) % cfg.gauge_every == 0) {
                const FixedRankPoint fixed = gauge_fix(FixedRankPoint{s.u, s.z});
                s.u = fixed.u;
                s.z = fixed.z;
            }
            const Vector sz = z_singular_values(s.z);
            if (!(sz(0) > 0.0) || sz(r - 1) <= cfg.eps_rank * sz(0)) {
                throw RankCollapseError(
                    "integrate_do: rank collapse at t = " + std::to_string(t_next),
                    t_next);
            }
            if ((step + 1) % stride == 0 || step + 1 == n_steps) {
                record_factor(t_next, FixedRankPoint{s.u, s.z});
            }
        }
        return traj;
    }

    // projected_step: dense increment, then re-truncation.
    FixedRankPoint p = p0;
    {
        TrajectorySample sample;
        sample.t = cfg.t0;
        sample.point = p0;
        const Vector sz = z_singular_values(p0.z);
        sample.sigma_r = sz(r - 1);
        traj.samples.push_back(std::move(sample));
    }
    for (long step = 0; step < n_steps; ++step) {
        const double t = cfg.t0 + h * static_cast<double>(step);
        const double t_next = cfg.t0 + h * static_cast<double>(step + 1);
        const DenseMatrix dense = p.dense();
        const DenseMatrix pre =
            dense + h * field_increment(f, t, dense, h, cfg.scheme);
        TruncationResult trunc;
        try {
            trunc = truncate(pre, r, cfg.eps_gap);
        } catch (const SkeletonProximityError& e) {
            throw SkeletonProximityError(
                std::string(e.what()) + " at t = " + std::to_string(t_next),
                e.sigma_r, e.sigma_r1, e.relative_gap, t_next);
        }
        p = trunc.point;
        if ((step + 1) % stride == 0 || step + 1 == n_steps) {
            TrajectorySample sample;
            sample.t = t_next;
            sample.point = p;
            sample.sigma_r = trunc.gap.sigma_r;
            sample.sigma_r1 = trunc.gap.sigma_r1;
            sample.residual_norm = (pre - p.dense()).norm();
            traj.samples.push_back(std::move(sample));
        }
    }
    return traj;
}

std::vector<TimedMatrix> dense_reference(const DenseMatrix& r0,
                                         const VectorField& f,
                                         const DoRunConfig& cfg) {
    require_finite(r0, "dense_reference");
    const long n_steps = grid_steps(cfg);
    const double h = (cfg.t1 - cfg.t0) / static_cast<double>(n_steps);
    const int stride = std::max(1, cfg.record_stride);
    const double overflow = 1e12 * std::max(1.0, r0.norm());

    std::vector<TimedMatrix> out;
    out.push_back({cfg.t0, r0});
    DenseMatrix r = r0;
    for (long step = 0; step < n_steps; ++step) {
        const double t = cfg.t0 + h * static_cast<double>(step);
        r += h * field_increment(f, t, r, h, Scheme::rk4);
        const double t_next = cfg.t0 + h * static_cast<double>(step + 1);
        if (!r.allFinite() || r.norm() > overflow) {
            throw Error("dense_reference: divergence at t = " +
                        std::to_string(t_next));
        }
        if ((step + 1) % stride == 0 || step + 1 == n_steps) {
            out.push_back({t_next, r});
        }
    }
    return out;
}

double estimate_lipschitz(const VectorField& f,
                          const std::vector<TimedMatrix>& ref) {
    double best = 0.0;
    for (std::size_t i = 0; i + 1 < ref.size(); ++i) {
        const double denom = (ref[i].value - ref[i + 1].value).norm();
        if (denom <= 1e-14) continue;
        const double num = (eval_field(f, ref[i].t, ref[i].value) -
                            eval_field(f, ref[i].t, ref[i + 1].value))
                               .norm();
        best = std::max(best, num / denom);
    }
    return best;
}

ErrorBoundReport evaluate_error_bound(const Trajectory& do_traj,
                                      const std::vector<TimedMatrix>& ref,
                                      const VectorField& f,
                                      std::optional<double> k,
                                      double eps_gap) {
    if (do_traj.samples.empty() || ref.empty()) {
        throw Error("evaluate_error_bound: empty trajectory");
    }
    if (do_traj.samples.size() != ref.size()) {
        throw Error("evaluate_error_bound: time grids differ in length");
    }
    const Index r = do_traj.samples.front().point.rank();

    ErrorBoundReport report;
    report.k_certified = k.has_value();
    report.lipschitz_k = k.has_value() ? *k : estimate_lipschitz(f, ref);
    const double lip = report.lipschitz_k;

    // First pass: per-sample spectral data, errors, and the growth rate.
    std::vector<double> integrand;
    double eta = lip;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double t = ref[i].t;
        if (std::abs(do_traj.samples[i].t - t) > 1e-12 * std::max(1.0, std::abs(t))) {
            throw Error("evaluate_error_bound: time grids do not match");
        }
        const SvdFactorization sv = svd(ref[i].value);
        const GapReport gap = spectral_gap(sv.sigma, r);
        if (!(gap.relative_gap > eps_gap)) {
            report.crossed_skeleton = true;
            report.crossing_time = t;
            break;
        }
        DenseMatrix best_part = sv.u.leftCols(r) *
                                sv.sigma.head(r).asDiagonal() *
                                sv.v.leftCols(r).transpose();
        const double best_err = (ref[i].value - best_part).norm();
        const double do_err =
            (do_traj.samples[i].point.dense() - best_part).norm();
        const double field_norm = eval_field(f, t, ref[i].value).norm();

        report.times.push_back(t);
        report.best_error.push_back(best_err);
        report.do_error.push_back(do_err);
        integrand.push_back(best_err *
                            (lip + field_norm / (gap.sigma_r - gap.sigma_r1)));
        eta = std::max(eta, lip + 2.0 * field_norm / gap.sigma_r);
    }
    report.eta = eta;

    // bound(t_n) = e^{eta t_n} * trapz_0^{t_n} integrand(s) e^{-eta s} ds.
    report.bound.resize(report.times.size(), 0.0);
    double accum = 0.0;
    for (std::size_t i = 1; i < report.times.size(); ++i) {
        const double h = report.times[i] - report.times[i - 1];
        const double prev = integrand[i - 1] * std::exp(-eta * report.times[i - 1]);
        const double curr = integrand[i] * std::exp(-eta * report.times[i]);
        accum += 0.5 * h * (prev + curr);
        report.bound[i] = std::exp(eta * report.times[i]) * accum;
    }
    return report;
}

}  // namespace lowrank
