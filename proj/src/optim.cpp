#include "lowrank/optim.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace lowrank {

namespace {

// Normal component of (target - R) at p; drives the curvature part of the
// Hessian of the distance functional.
DenseMatrix normal_residual(const FixedRankPoint& p, const DenseMatrix& target) {
    const DenseMatrix gram = p.z.transpose() * p.z;
    Eigen::LLT<DenseMatrix> llt(gram);
    DenseMatrix a = target - p.u * (p.u.transpose() * target);
    const DenseMatrix az = llt.solve((a * p.z).transpose()).transpose();
    return a - az * p.z.transpose();
}

TangentVector scaled(const TangentVector& x, double a) {
    return TangentVector{x.base, a * x.xu, a * x.xz};
}

constexpr std::uint64_t kSaddleProbeSeed = 0x5add1eULL;
constexpr int kSaddleProbes = 10;
constexpr int kProbeRefinements = 30;
constexpr int kMaxBacktracks = 60;

// Sign certificate for the Hessian: ten random Rayleigh quotients, each
// refined by shifted power iterations (x <- c x - H x) that amplify the
// most negative eigenvalue. An unrefined random quotient concentrates near
// the bulk of the spectrum and would miss an isolated negative direction.
bool hessian_probe_negative(const FixedRankPoint& p, const DenseMatrix& target) {
    const DenseMatrix n = p.dense() - target;
    const double kappa_bound =
        Eigen::JacobiSVD<DenseMatrix>(n).singularValues()(0) /
        Eigen::JacobiSVD<DenseMatrix>(p.z).singularValues()(p.rank() - 1);
    const double shift = 1.0 + 1.5 * kappa_bound + 0.5;

    Rng rng(kSaddleProbeSeed);
    for (int probe = 0; probe < kSaddleProbes; ++probe) {
        TangentVector x;
        x.base = p;
        x.xu = rng.normal_matrix(p.rows(), p.rank());
        x.xu -= p.u * (p.u.transpose() * x.xu);
        x.xz = rng.normal_matrix(p.cols(), p.rank());
        double norm = std::sqrt(std::max(0.0, metric(x, x)));
        if (norm <= 0.0) continue;
        for (int it = 0; it < kProbeRefinements; ++it) {
            const TangentVector hx = distance_hessian_apply(p, target, x);
            x.xu = shift * x.xu - hx.xu;
            x.xz = shift * x.xz - hx.xz;
            norm = std::sqrt(std::max(0.0, metric(x, x)));
            if (norm <= 0.0) break;
            x.xu /= norm;
            x.xz /= norm;
        }
        if (norm <= 0.0) continue;
        const double rayleigh =
            metric(x, distance_hessian_apply(p, target, x)) / metric(x, x);
        if (rayleigh < -1e-12) return true;
    }
    return false;
}

}  // namespace

const char* to_string(OptimStatus status) {
    switch (status) {
        case OptimStatus::converged: return "converged";
        case OptimStatus::max_iters: return "max_iters";
        case OptimStatus::stalled: return "stalled";
        case OptimStatus::saddle_detected: return "saddle_detected";
    }
    return "unknown";
}

double distance_value(const FixedRankPoint& p, const DenseMatrix& target) {
    if (target.rows() != p.rows() || target.cols() != p.cols()) {
        throw ShapeError("distance_value: target shape mismatch");
    }
    return 0.5 * (p.dense() - target).squaredNorm();
}

TangentVector distance_gradient(const FixedRankPoint& p,
                                const DenseMatrix& target) {
    if (target.rows() != p.rows() || target.cols() != p.cols()) {
        throw ShapeError("distance_gradient: target shape mismatch");
    }
    return project_tangent(p, p.dense() - target);
}

TangentVector distance_hessian_apply(const FixedRankPoint& p,
                                     const DenseMatrix& target,
                                     const TangentVector& x) {
    require_same_base(x.base, p, "distance_hessian_apply");
    const DenseMatrix n = normal_residual(p, target);
    const DenseMatrix gram = p.z.transpose() * p.z;
    Eigen::LLT<DenseMatrix> llt(gram);
    TangentVector out;
    out.base = p;
    out.xu = x.xu - llt.solve((n * x.xz).transpose()).transpose();
    out.xz = x.xz - n.transpose() * x.xu;
    return out;
}

TangentVector newton_direction(const FixedRankPoint& p,
                               const DenseMatrix& target, double sep_tol) {
    const DenseMatrix n = normal_residual(p, target);
    const DenseMatrix a = p.z.transpose() * p.z;
    const DenseMatrix b = -n;
    DenseMatrix e = target * p.z;
    e -= p.u * (p.u.transpose() * e);
    const DenseMatrix f = -p.z + target.transpose() * p.u;

    const DenseMatrix xu = solve_sylvester(a, b * b.transpose(), e - b * f,
                                           sep_tol);
    TangentVector out;
    out.base = p;
    out.xu = xu;
    out.xz = f - b.transpose() * xu;
    return out;
}

FixedRankPoint random_point(const DenseMatrix& target, Index r, Rng& rng) {
    FixedRankPoint p;
    p.u = random_orthonormal(rng, target.rows(), r);
    p.z = rng.normal_matrix(target.cols(), r);
    const double scale = target.norm() / std::sqrt(static_cast<double>(r));
    p.z *= scale / p.z.norm();
    return p;
}

MinimizeResult minimize(const DenseMatrix& target, Index r,
                        const FixedRankPoint& init, const OptimConfig& cfg) {
    if (init.rank() != r || init.rows() != target.rows() ||
        init.cols() != target.cols()) {
        throw ShapeError("minimize: init incompatible with target/rank");
    }
    require_valid_point(init, "minimize");
    if (cfg.max_iters < 0 || !(cfg.grad_tol >= 0.0) ||
        cfg.retraction_steps < 1 || !(cfg.step_rule.alpha > 0.0) ||
        !(cfg.step_rule.alpha0 > 0.0) ||
        !(cfg.step_rule.beta > 0.0 && cfg.step_rule.beta < 1.0) ||
        !(cfg.step_rule.c > 0.0 && cfg.step_rule.c < 1.0)) {
        throw Error("minimize: invalid optimizer configuration");
    }

    MinimizeResult result;
    result.trace.status = OptimStatus::max_iters;
    FixedRankPoint p = init;

    const long restart_period =
        std::max<long>(1, std::min(target.rows(), target.cols()) * r);
    DenseMatrix prev_dir_dense;
    double prev_gnorm2 = 0.0;
    long since_restart = 0;
    double last_step = 0.0;

    for (int iter = 0; iter <= cfg.max_iters; ++iter) {
        const TangentVector grad = distance_gradient(p, target);
        const double gnorm = metric_norm(grad);
        const double j = distance_value(p, target);
        if (cfg.record_trace) {
            result.trace.records.push_back({iter, j, gnorm, last_step});
        }
        if (gnorm <= cfg.grad_tol) {
            result.trace.status = OptimStatus::converged;
            if (cfg.method == OptimMethod::newton &&
                hessian_probe_negative(p, target)) {
                result.trace.status = OptimStatus::saddle_detected;
            }
            break;
        }
        if (iter == cfg.max_iters) break;

        TangentVector dir = scaled(grad, -1.0);
        bool newton_step = false;
        switch (cfg.method) {
            case OptimMethod::gd:
                break;
            case OptimMethod::cg: {
                if (prev_gnorm2 > 0.0 && since_restart < restart_period) {
                    const double beta = gnorm * gnorm / prev_gnorm2;
                    const TangentVector carried =
                        project_tangent(p, prev_dir_dense);
                    dir.xu += beta * carried.xu;
                    dir.xz += beta * carried.xz;
                    if (metric(grad, dir) >= 0.0) {
                        dir = scaled(grad, -1.0);  // non-descent: restart
                        since_restart = 0;
                    }
                } else {
                    since_restart = 0;
                }
                break;
            }
            case OptimMethod::newton: {
                try {
                    dir = newton_direction(p, target);
                    newton_step = true;
                } catch (const NearSingularSylvesterError&) {
                    // fall back to the gradient step
                }
                break;
            }
        }

        double alpha = 1.0;
        if (newton_step) {
            alpha = 1.0;
        } else if (cfg.step_rule.kind == StepRuleKind::fixed) {
            alpha = cfg.step_rule.alpha;
        } else {
            const double slope = metric(grad, dir);
            // Sufficient decrease is tested up to the resolution at which
            // J differences are measurable in floating point; near the
            // optimum the expected decrease ~ |grad|^2 drops below
            // eps * J and the raw test would reject every step.
            const double noise = 1e-12 * (1.0 + std::abs(j));
            alpha = cfg.step_rule.alpha0;
            bool accepted = false;
            for (int bt = 0; bt < kMaxBacktracks; ++bt) {
                const FixedRankPoint trial =
                    exp_map(p, scaled(dir, alpha), cfg.retraction_steps).point;
                if (distance_value(trial, target) <=
                    j + cfg.step_rule.c * alpha * slope + noise) {
                    accepted = true;
                    break;
                }
                alpha *= cfg.step_rule.beta;
            }
            if (!accepted) {
                result.trace.status = OptimStatus::stalled;
                break;
            }
        }

        prev_dir_dense = dir.dense();
        prev_gnorm2 = gnorm * gnorm;
        ++since_restart;
        last_step = alpha;
        p = exp_map(p, scaled(dir, alpha), cfg.retraction_steps).point;
    }

    result.point = p;
    return result;
}

MinimizeResult minimize(const DenseMatrix& target, Index r, std::uint64_t seed,
                        const OptimConfig& cfg) {
    Rng rng(seed);
    return minimize(target, r, random_point(target, r, rng), cfg);
}

Trajectory gradient_flow(const DenseMatrix& target, Index r,
                         const FixedRankPoint& init, double dt, double t1,
                         int record_stride) {
    require_valid_point(init, "gradient_flow");
    if (!(t1 > 0.0) || !(dt > 0.0)) {
        throw Error("gradient_flow: need t1 > 0 and dt > 0");
    }
    if (record_stride < 1) record_stride = 1;
    const long n_steps = std::max<long>(1, std::lround(t1 / dt));
    const double h = t1 / static_cast<double>(n_steps);

    struct Rates {
        DenseMatrix du, dz;
    };
    auto rates = [&](const FixedRankPoint& p) {
        const DenseMatrix gram = p.z.transpose() * p.z;
        Eigen::LLT<DenseMatrix> llt(gram);
        DenseMatrix w = target * p.z;
        w -= p.u * (p.u.transpose() * w);
        return Rates{llt.solve(w.transpose()).transpose(),
                     target.transpose() * p.u - p.z};
    };

    auto record = [&](Trajectory& traj, double t, const FixedRankPoint& p) {
        TrajectorySample sample;
        sample.t = t;
        sample.point = p;
        const Vector sz = Eigen::JacobiSVD<DenseMatrix>(p.z).singularValues();
        sample.sigma_r = sz(sz.size() - 1);
        sample.residual_norm = (p.dense() - target).norm();
        sample.gauge_drift =
            (p.u.transpose() * p.u - DenseMatrix::Identity(r, r)).norm();
        traj.samples.push_back(std::move(sample));
    };

    FixedRankPoint p = init;
    Trajectory traj;
    record(traj, 0.0, p);
    for (long step = 0; step < n_steps; ++step) {
        const Rates k1 = rates(p);
        const FixedRankPoint p2{p.u + 0.5 * h * k1.du, p.z + 0.5 * h * k1.dz};
        const Rates k2 = rates(p2);
        const FixedRankPoint p3{p.u + 0.5 * h * k2.du, p.z + 0.5 * h * k2.dz};
        const Rates k3 = rates(p3);
        const FixedRankPoint p4{p.u + h * k3.du, p.z + h * k3.dz};
        const Rates k4 = rates(p4);
        p.u += (h / 6.0) * (k1.du + 2.0 * k2.du + 2.0 * k3.du + k4.du);
        p.z += (h / 6.0) * (k1.dz + 2.0 * k2.dz + 2.0 * k3.dz + k4.dz);
        const double t_next = h * static_cast<double>(step + 1);
        const Vector sz = Eigen::JacobiSVD<DenseMatrix>(p.z).singularValues();
        if (!(sz(0) > 0.0) || sz(r - 1) <= defaults::eps_rank * sz(0)) {
            throw RankCollapseError(
                "gradient_flow: rank collapse at t = " + std::to_string(t_next),
                t_next);
        }
        p = gauge_fix(p);
        if ((step + 1) % record_stride == 0 || step + 1 == n_steps) {
            record(traj, t_next, p);
        }
    }
    return traj;
}

}  // namespace lowrank
