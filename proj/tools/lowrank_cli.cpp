// Command-line surface of the low-rank geometry toolkit.
//
// Exit codes: 0 success, 1 I/O or parse failure, 2 precondition violation
// (rank deficiency, skeleton proximity, near-singular solves), 3 run
// truncated by a singular-value crossing. Errors print one machine-readable
// line on standard error: "error: kind=<kind> msg=\"...\"".

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lowrank/harness.hpp"
#include "lowrank/io.hpp"

namespace {

using namespace lowrank;

int fail(const std::string& kind, const std::string& message, int code) {
    std::cerr << "error: kind=" << kind << " msg=\"" << message << "\"\n";
    return code;
}

FileFormat parse_format(const std::string& text) {
    if (text == "text") return FileFormat::text;
    if (text == "binary") return FileFormat::binary;
    if (text == "auto") return FileFormat::auto_detect;
    throw Error("unknown format: " + text);
}

std::string joined(const std::string& out_dir, const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
}

struct GlobalOptions {
    std::uint64_t seed = 0;
    double tol_gap = defaults::eps_gap;
    std::string format = "auto";
    std::string out_dir = ".";
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "lowrank: embedded geometry of fixed-rank matrices, truncated-SVD "
        "differentials, reduced (dynamically orthogonal) integration, and "
        "Riemannian optimization"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions global;
    app.add_option("--seed", global.seed, "seed of every random draw");
    app.add_option("--tol-gap", global.tol_gap,
                   "relative spectral-gap floor for truncations");
    app.add_option("--format", global.format,
                   "matrix file format: text | binary | auto");
    app.add_option("--out-dir", global.out_dir, "output directory");

    // truncate
    std::string trunc_in, trunc_point = "point.txt", trunc_gap = "gap.txt";
    long trunc_rank = 1;
    CLI::App* cmd_truncate =
        app.add_subcommand("truncate", "best rank-r approximation of a matrix");
    cmd_truncate->add_option("input", trunc_in, "matrix file")->required();
    cmd_truncate->add_option("-r,--rank", trunc_rank, "target rank")->required();
    cmd_truncate->add_option("--out-point", trunc_point, "factored point file");
    cmd_truncate->add_option("--out-gap", trunc_gap, "gap report file");

    // dsvd
    std::string dsvd_in, dsvd_dir, dsvd_out = "differential.txt",
                         dsvd_point;
    long dsvd_rank = 1;
    CLI::App* cmd_dsvd = app.add_subcommand(
        "dsvd", "differential of the rank-r truncation in a direction");
    cmd_dsvd->add_option("--in", dsvd_in, "matrix file")->required();
    cmd_dsvd->add_option("--dir", dsvd_dir, "direction matrix file")->required();
    cmd_dsvd->add_option("-r,--rank", dsvd_rank, "target rank")->required();
    cmd_dsvd->add_option("--out", dsvd_out, "dense differential output");
    cmd_dsvd->add_option("--out-point", dsvd_point, "truncated point output");

    // curvature
    std::string curv_in, curv_out = "curvature.csv";
    long curv_rank = 1;
    CLI::App* cmd_curvature = app.add_subcommand(
        "curvature",
        "principal curvatures at truncate(input, r) in the residual direction");
    cmd_curvature->add_option("--in", curv_in, "matrix file")->required();
    cmd_curvature->add_option("-r,--rank", curv_rank, "target rank")->required();
    cmd_curvature->add_option("--out", curv_out, "spectrum CSV");

    // geodesic
    std::string geo_point, geo_xu, geo_xz, geo_out_point = "endpoint.txt",
                           geo_out_xu, geo_out_xz;
    int geo_steps = defaults::geodesic_steps;
    CLI::App* cmd_geodesic = app.add_subcommand(
        "geodesic", "walk the unit-time geodesic from a point along (xu, xz)");
    cmd_geodesic->add_option("--point", geo_point, "factored point file")
        ->required();
    cmd_geodesic->add_option("--xu", geo_xu, "U-component matrix file")
        ->required();
    cmd_geodesic->add_option("--xz", geo_xz, "Z-component matrix file")
        ->required();
    cmd_geodesic->add_option("--steps", geo_steps, "integration steps");
    cmd_geodesic->add_option("--out-point", geo_out_point, "endpoint file");
    cmd_geodesic->add_option("--out-xu", geo_out_xu,
                             "transported velocity U-component");
    cmd_geodesic->add_option("--out-xz", geo_out_xz,
                             "transported velocity Z-component");

    // do-run
    std::string dorun_descriptor;
    CLI::App* cmd_dorun = app.add_subcommand(
        "do-run", "integrate the reduced dynamics from a run descriptor");
    cmd_dorun->add_option("descriptor", dorun_descriptor, "descriptor file")
        ->required();

    // track-svd
    std::string track_amb0, track_ambdot, track_out = "track.csv",
                            track_point, track_snapshots;
    long track_rank = 1;
    double track_t0 = 0.0, track_t1 = 1.0, track_dt = 1e-3;
    int track_stride = 1;
    CLI::App* cmd_track = app.add_subcommand(
        "track-svd",
        "integrate the best rank-r factors along the linear path A + t B");
    cmd_track->add_option("--amb0", track_amb0, "path value at t0")->required();
    cmd_track->add_option("--amb-dot", track_ambdot, "constant path derivative")
        ->required();
    cmd_track->add_option("-r,--rank", track_rank, "target rank")->required();
    cmd_track->add_option("--t0", track_t0, "start time");
    cmd_track->add_option("--t1", track_t1, "end time");
    cmd_track->add_option("--dt", track_dt, "step size");
    cmd_track->add_option("--stride", track_stride, "recording stride");
    cmd_track->add_option("--out", track_out, "trajectory CSV");
    cmd_track->add_option("--out-point", track_point, "terminal point file");
    cmd_track->add_option("--snapshots", track_snapshots,
                          "prefix for factor snapshots at each recorded step");

    // optimize
    std::string opt_target, opt_method = "gd", opt_init,
                opt_trace = "trace.csv", opt_point = "optimum.txt",
                opt_step = "armijo";
    long opt_rank = 1;
    long opt_max_iters = 10000;
    double opt_grad_tol = 1e-8, opt_alpha = 0.5;
    CLI::App* cmd_optimize = app.add_subcommand(
        "optimize", "minimize the distance to a target over the rank-r manifold");
    cmd_optimize->add_option("--target", opt_target, "target matrix file")
        ->required();
    cmd_optimize->add_option("-r,--rank", opt_rank, "rank")->required();
    cmd_optimize->add_option("--method", opt_method, "gd | cg | newton");
    cmd_optimize->add_option("--init", opt_init,
                             "starting point file (seeded random when absent)");
    cmd_optimize->add_option("--max-iters", opt_max_iters, "iteration cap");
    cmd_optimize->add_option("--grad-tol", opt_grad_tol, "gradient tolerance");
    cmd_optimize->add_option("--step-rule", opt_step, "armijo | fixed");
    cmd_optimize->add_option("--alpha", opt_alpha, "fixed step size");
    cmd_optimize->add_option("--out-trace", opt_trace, "trace CSV");
    cmd_optimize->add_option("--out-point", opt_point, "terminal point file");

    // experiment
    std::string exp_name;
    std::vector<std::string> exp_params;
    int exp_workers = 1;
    CLI::App* cmd_experiment = app.add_subcommand(
        "experiment", "run a named, seeded experiment recipe");
    cmd_experiment
        ->add_option("--name", exp_name,
                     "fig-optimization | do-error | scheme-order | "
                     "curvature-audit | dsvd-fd-audit")
        ->required();
    cmd_experiment->add_option("--param", exp_params,
                               "recipe override key=value (repeatable)");
    cmd_experiment->add_option("--workers", exp_workers,
                               "fan independent instances out to N threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage/parse failures map to exit 1
    }

    try {
        const FileFormat format = parse_format(global.format);
        std::filesystem::create_directories(global.out_dir);

        if (cmd_truncate->parsed()) {
            const DenseMatrix amb = read_matrix(trunc_in, format);
            const TruncationResult result =
                truncate(amb, trunc_rank, global.tol_gap);
            write_point(joined(global.out_dir, trunc_point), result.point);
            std::ofstream gap_out(joined(global.out_dir, trunc_gap));
            gap_out << format_double(result.gap.sigma_r) << ' '
                    << format_double(result.gap.sigma_r1) << ' '
                    << format_double(result.gap.relative_gap) << '\n';
            return 0;
        }
        if (cmd_dsvd->parsed()) {
            const DenseMatrix amb = read_matrix(dsvd_in, format);
            const DenseMatrix dir = read_matrix(dsvd_dir, format);
            const TangentVector diff =
                truncate_differential(amb, dsvd_rank, dir, global.tol_gap);
            write_matrix(joined(global.out_dir, dsvd_out), diff.dense(),
                         format == FileFormat::auto_detect ? FileFormat::text
                                                           : format);
            if (!dsvd_point.empty()) {
                write_point(joined(global.out_dir, dsvd_point), diff.base);
            }
            return 0;
        }
        if (cmd_curvature->parsed()) {
            const DenseMatrix amb = read_matrix(curv_in, format);
            const TruncationResult trunc =
                truncate(amb, curv_rank, global.tol_gap);
            const NormalVector residual{
                trunc.point, amb - trunc.point.dense()};
            const CurvatureSpectrum spectrum =
                curvature_spectrum(trunc.point, residual);
            std::ofstream out(joined(global.out_dir, curv_out));
            out << "kappa,eigen_residual\n";
            for (const CurvatureEntry& entry : spectrum.entries) {
                const TangentVector image =
                    weingarten(trunc.point, residual, entry.direction);
                out << format_double(entry.kappa) << ','
                    << format_double((image.dense() -
                                      entry.kappa * entry.direction.dense())
                                         .norm())
                    << '\n';
            }
            std::cout << "nonzero_count " << spectrum.nonzero_count << '\n';
            return 0;
        }
        if (cmd_geodesic->parsed()) {
            const FixedRankPoint point = read_point(geo_point);
            TangentVector x;
            x.base = point;
            x.xu = read_matrix(geo_xu, format);
            x.xz = read_matrix(geo_xz, format);
            x.xu -= point.u * (point.u.transpose() * x.xu);  // enforce gauge
            const ExpMapResult result = exp_map(point, x, geo_steps);
            write_point(joined(global.out_dir, geo_out_point), result.point);
            if (!geo_out_xu.empty()) {
                write_matrix(joined(global.out_dir, geo_out_xu),
                             result.velocity.xu);
            }
            if (!geo_out_xz.empty()) {
                write_matrix(joined(global.out_dir, geo_out_xz),
                             result.velocity.xz);
            }
            return 0;
        }
        if (cmd_dorun->parsed()) {
            const RunDescriptor desc = parse_run_descriptor(dorun_descriptor);
            const DoRunOutcome outcome =
                run_do_descriptor(desc, global.out_dir);
            if (outcome.exit_code == 3) {
                return fail("skeleton_crossing",
                            outcome.message + " t=" +
                                format_double(outcome.crossing_time),
                            3);
            }
            return outcome.exit_code;
        }
        if (cmd_track->parsed()) {
            const DenseMatrix amb0 = read_matrix(track_amb0, format);
            const DenseMatrix amb_dot = read_matrix(track_ambdot, format);
            require_same_shape(amb0, amb_dot, "track-svd");
            const double t_base = track_t0;
            const MatrixPath path = [&](double t) {
                return std::make_pair(
                    DenseMatrix(amb0 + (t - t_base) * amb_dot), amb_dot);
            };
            const Trajectory traj =
                track_best_rank(path, track_t0, track_t1, track_dt, track_rank,
                                global.tol_gap, track_stride);
            write_trajectory_csv(joined(global.out_dir, track_out), traj);
            if (!track_point.empty()) {
                write_point(joined(global.out_dir, track_point),
                            traj.back().point);
            }
            if (!track_snapshots.empty()) {
                for (std::size_t i = 0; i < traj.samples.size(); ++i) {
                    char name[64];
                    std::snprintf(name, sizeof(name), "%s_%05zu.txt",
                                  track_snapshots.c_str(), i);
                    write_point(joined(global.out_dir, name),
                                traj.samples[i].point);
                }
            }
            return 0;
        }
        if (cmd_optimize->parsed()) {
            const DenseMatrix target = read_matrix(opt_target, format);
            OptimConfig cfg;
            cfg.max_iters = static_cast<int>(opt_max_iters);
            cfg.grad_tol = opt_grad_tol;
            if (opt_method == "gd") cfg.method = OptimMethod::gd;
            else if (opt_method == "cg") cfg.method = OptimMethod::cg;
            else if (opt_method == "newton") cfg.method = OptimMethod::newton;
            else throw Error("unknown method: " + opt_method);
            if (opt_step == "armijo") cfg.step_rule = StepRule::armijo();
            else if (opt_step == "fixed")
                cfg.step_rule = StepRule::fixed_step(opt_alpha);
            else throw Error("unknown step rule: " + opt_step);

            MinimizeResult result =
                opt_init.empty()
                    ? minimize(target, opt_rank, global.seed, cfg)
                    : minimize(target, opt_rank, read_point(opt_init), cfg);
            write_trace_csv(joined(global.out_dir, opt_trace), result.trace);
            write_point(joined(global.out_dir, opt_point), result.point);
            std::cout << "status " << to_string(result.trace.status) << '\n';
            return 0;
        }
        if (cmd_experiment->parsed()) {
            ExperimentRecipe recipe;
            recipe.name = exp_name;
            recipe.seed = global.seed;
            for (const std::string& kv : exp_params) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) {
                    throw Error("expected key=value, got: " + kv);
                }
                recipe.params[kv.substr(0, eq)] = kv.substr(eq + 1);
            }
            const ExperimentResult result =
                run_experiment(recipe, global.out_dir, exp_workers);
            for (const CheckResult& check : result.checks) {
                std::cout << check.name << ": "
                          << (check.pass ? "PASS" : "FAIL")
                          << " measured=" << format_double(check.measured)
                          << '\n';
            }
            if (!result.all_pass()) {
                for (const CheckResult& check : result.checks) {
                    if (!check.pass) {
                        return fail("experiment_check",
                                    recipe.name + ": " + check.name, 4);
                    }
                }
            }
            return 0;
        }
    } catch (const SkeletonProximityError& e) {
        return fail("skeleton_proximity", e.what(), 2);
    } catch (const RankDeficientError& e) {
        return fail("rank_deficient", e.what(), 2);
    } catch (const RankCollapseError& e) {
        return fail("rank_collapse", e.what(), 2);
    } catch (const NearSingularSylvesterError& e) {
        return fail("near_singular_sylvester", e.what(), 2);
    } catch (const ShapeError& e) {
        return fail("shape", e.what(), 2);
    } catch (const ParseError& e) {
        return fail("parse", e.what(), 1);
    } catch (const IoError& e) {
        return fail("io", e.what(), 1);
    } catch (const Error& e) {
        return fail("precondition", e.what(), 2);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 2);
    }
    return 0;
}
