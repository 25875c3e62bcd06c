#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lowrank/harness.hpp"
#include "lowrank/io.hpp"
#include "test_support.hpp"

using namespace lowrank;
using namespace lowrank_test;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::path("io_harness_tmp") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

int run_cli(const std::string& args) {
    const std::string command = std::string(LOWRANK_CLI_PATH) + " " + args;
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("matrix text format round-trips exactly") {
    const fs::path dir = fresh_dir("text");
    Rng rng(331);
    DenseMatrix m = rng.normal_matrix(5, 3);
    m(0, 0) = 1.0 / 3.0;
    m(1, 2) = -2.5e-13;
    m(2, 1) = 98765.4321e100;
    const std::string path = (dir / "m.txt").string();
    write_matrix_text(path, m);
    const DenseMatrix back = read_matrix_text(path);
    CHECK(back == m);  // bit-exact via 17 significant digits

    const std::string auto_read = (dir / "m.txt").string();
    CHECK(read_matrix(auto_read) == m);
}

TEST_CASE("matrix binary format round-trips bit-exactly and checks its magic") {
    const fs::path dir = fresh_dir("binary");
    Rng rng(337);
    const DenseMatrix m = rng.normal_matrix(4, 6);
    const std::string path = (dir / "m.lrgm").string();
    write_matrix_binary(path, m);
    CHECK(read_matrix_binary(path) == m);
    CHECK(read_matrix(path) == m);  // auto-detected by magic

    std::ofstream bad(dir / "bad.lrgm", std::ios::binary);
    bad << "NOPE";
    bad.close();
    CHECK_THROWS_AS((void)read_matrix_binary((dir / "bad.lrgm").string()),
                    IoError);
}

TEST_CASE("matrix text parse errors carry line numbers") {
    const fs::path dir = fresh_dir("parse");
    {
        std::ofstream out(dir / "bad_header.txt");
        out << "not a header\n";
    }
    try {
        (void)read_matrix_text((dir / "bad_header.txt").string());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 1);
    }
    {
        std::ofstream out(dir / "short_row.txt");
        out << "2 3\n1 2 3\n4 5\n";
    }
    try {
        (void)read_matrix_text((dir / "short_row.txt").string());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 3);
    }
}

TEST_CASE("factored point files round-trip and validate") {
    const fs::path dir = fresh_dir("point");
    Rng rng(347);
    const FixedRankPoint p = random_rank_point(rng, 6, 4, 2);
    const std::string path = (dir / "p.txt").string();
    write_point(path, p);
    const FixedRankPoint back = read_point(path);
    CHECK(back.u == p.u);
    CHECK(back.z == p.z);

    // A corrupted U block (not orthonormal) must be rejected.
    FixedRankPoint broken = p;
    broken.u *= 2.0;
    const std::string bad_path = (dir / "bad.txt").string();
    write_point(bad_path, broken);
    CHECK_THROWS_AS((void)read_point(bad_path), Error);
}

TEST_CASE("CSV emitters write the specified headers") {
    const fs::path dir = fresh_dir("csv");
    Trajectory traj;
    TrajectorySample sample;
    sample.t = 0.5;
    traj.samples.push_back(sample);
    write_trajectory_csv((dir / "traj.csv").string(), traj);
    CHECK(slurp(dir / "traj.csv")
              .starts_with(
                  "t,gap_sigma_r,gap_sigma_r1,residual_norm,"
                  "reconstruction_error\n"));

    ErrorBoundReport report;
    report.times = {0.0};
    report.do_error = {0.0};
    report.best_error = {0.0};
    report.bound = {0.0};
    write_error_report_csv((dir / "err.csv").string(), report);
    CHECK(slurp(dir / "err.csv").starts_with("t,do_error,best_error,bound\n"));

    OptimTrace trace;
    trace.records.push_back({0, 1.0, 0.5, 0.0});
    trace.status = OptimStatus::converged;
    write_trace_csv((dir / "trace.csv").string(), trace);
    const std::string text = slurp(dir / "trace.csv");
    CHECK(text.starts_with("iter,J,grad_norm,step_size,status\n"));
    CHECK(text.find("converged") != std::string::npos);
}

TEST_CASE("run descriptors parse, reject unknown keys with line numbers") {
    std::istringstream good(
        "# reduced-dynamics run\n"
        "field = scalar\n"
        "field_c = 0.5\n"
        "l = 8\n"
        "m = 6\n"
        "r = 2\n"
        "t1 = 2.0\n"
        "dt = 0.02\n"
        "scheme = heun_rk2\n"
        "mode = projected_step\n"
        "seed = 42\n");
    const RunDescriptor desc = parse_run_descriptor(good, "inline");
    CHECK(desc.field == "scalar");
    CHECK(desc.field_c == 0.5);
    CHECK(desc.l == 8);
    CHECK(desc.t1 == 2.0);
    CHECK(desc.scheme == Scheme::heun_rk2);
    CHECK(desc.mode == DoMode::projected_step);
    CHECK(desc.seed == 42);

    std::istringstream bad(
        "field = zero\n"
        "unknown_key = 1\n");
    try {
        (void)parse_run_descriptor(bad, "inline");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }
}

TEST_CASE("builtin vector fields carry certified Lipschitz constants") {
    Rng rng(349);
    RunDescriptor desc;
    desc.l = 5;
    desc.m = 4;
    desc.field = "zero";
    CHECK(*build_vector_field(desc, rng).lipschitz_k == 0.0);

    desc.field = "scalar";
    desc.field_c = -0.7;
    const VectorField scalar = build_vector_field(desc, rng);
    CHECK(*scalar.lipschitz_k == doctest::Approx(0.7));
    const DenseMatrix r0 = rng.normal_matrix(5, 4);
    CHECK((scalar.eval(0.0, r0) + 0.7 * r0).norm() <= 1e-14);

    desc.field = "skew";
    desc.field_scale = 0.3;
    Rng rng2(350);
    const VectorField skew = build_vector_field(desc, rng2);
    CHECK(*skew.lipschitz_k == doctest::Approx(0.3));
    // The generator is skew-symmetric: <R, f(R)> = 0.
    CHECK(std::abs(frobenius_inner(r0, skew.eval(0.0, r0))) <=
          1e-12 * r0.squaredNorm());
}

TEST_CASE("run_do_descriptor completes and reports skeleton crossings") {
    const fs::path dir = fresh_dir("dorun");

    SUBCASE("zero field keeps the trajectory constant") {
        RunDescriptor desc;
        desc.field = "zero";
        desc.l = 6;
        desc.m = 5;
        desc.r = 2;
        desc.dt = 0.1;
        desc.seed = 5;
        const DoRunOutcome outcome =
            run_do_descriptor(desc, (dir / "zero").string());
        CHECK(outcome.exit_code == 0);
        const std::string csv = slurp(dir / "zero" / "trajectory.csv");
        CHECK(csv.starts_with("t,"));
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);  // header + 11
    }

    SUBCASE("scalar field matches the closed form in the error report") {
        RunDescriptor desc;
        desc.field = "scalar";
        desc.field_c = 0.5;
        desc.l = 6;
        desc.m = 5;
        desc.r = 2;
        desc.dt = 0.01;
        desc.seed = 7;
        desc.out_error_report = "err.csv";
        const DoRunOutcome outcome =
            run_do_descriptor(desc, (dir / "scalar").string());
        CHECK(outcome.exit_code == 0);
        CHECK(fs::exists(dir / "scalar" / "err.csv"));
    }

    SUBCASE("reference crossing truncates the study with exit code 3") {
        const fs::path cross = dir / "cross";
        fs::create_directories(cross);
        DenseMatrix amb0 = DenseMatrix::Zero(4, 3);
        amb0(0, 0) = 2.0;
        amb0(1, 1) = 1.0;
        amb0(2, 2) = 0.2;
        DenseMatrix a = DenseMatrix::Zero(4, 4);
        DenseMatrix b = DenseMatrix::Zero(4, 3);
        b(0, 0) = -1.0;
        b(1, 1) = 1.0;
        write_matrix_text((cross / "amb0.txt").string(), amb0);
        write_matrix_text((cross / "a.txt").string(), a);
        write_matrix_text((cross / "b.txt").string(), b);

        RunDescriptor desc;
        desc.field = "affine";
        desc.field_a = (cross / "a.txt").string();
        desc.field_b = (cross / "b.txt").string();
        desc.l = 4;
        desc.m = 3;
        desc.r = 1;
        desc.dt = 0.01;
        desc.amb0 = (cross / "amb0.txt").string();
        desc.lipschitz_k = 0.0;
        desc.out_error_report = "err.csv";
        const DoRunOutcome outcome = run_do_descriptor(desc, cross.string());
        CHECK(outcome.exit_code == 3);
        CHECK(outcome.crossed);
        CHECK(outcome.crossing_time == doctest::Approx(0.5).epsilon(0.05));
        CHECK(fs::exists(cross / "trajectory.csv"));
        CHECK(fs::exists(cross / "err.csv"));
    }
}

TEST_CASE("small experiment recipes pass and are byte-deterministic") {
    const fs::path dir = fresh_dir("experiments");

    ExperimentRecipe dsvd;
    dsvd.name = "dsvd-fd-audit";
    dsvd.seed = 2024;
    dsvd.params["n_instances"] = "5";
    const ExperimentResult first =
        run_experiment(dsvd, (dir / "dsvd_a").string());
    CHECK(first.all_pass());
    const ExperimentResult second =
        run_experiment(dsvd, (dir / "dsvd_b").string(), 4);
    CHECK(second.all_pass());
    CHECK(slurp(dir / "dsvd_a" / "dsvd_fd_audit.csv") ==
          slurp(dir / "dsvd_b" / "dsvd_fd_audit.csv"));
    CHECK(slurp(dir / "dsvd_a" / "summary.txt") ==
          slurp(dir / "dsvd_b" / "summary.txt"));

    ExperimentRecipe curvature;
    curvature.name = "curvature-audit";
    curvature.seed = 99;
    curvature.params["n_instances"] = "3";
    CHECK(run_experiment(curvature, (dir / "curv").string()).all_pass());

    ExperimentRecipe order;
    order.name = "scheme-order";
    order.seed = 11;
    CHECK(run_experiment(order, (dir / "order").string()).all_pass());

    ExperimentRecipe do_error;
    do_error.name = "do-error";
    do_error.seed = 31;
    do_error.params["n_instances"] = "2";
    CHECK(run_experiment(do_error, (dir / "doerr").string()).all_pass());

    ExperimentRecipe unknown;
    unknown.name = "no-such-recipe";
    CHECK_THROWS_AS((void)run_experiment(unknown, (dir / "x").string()),
                    Error);
}

TEST_CASE("cli truncate writes the gap line and honors the exit-code contract") {
    const fs::path dir = fresh_dir("cli");
    DenseMatrix diag = DenseMatrix::Zero(2, 2);
    diag(0, 0) = 3.0;
    diag(1, 1) = 1.0;
    write_matrix_text((dir / "diag.txt").string(), diag);

    const std::string out_dir = (dir / "out").string();
    CHECK(run_cli("truncate " + (dir / "diag.txt").string() +
                  " -r 1 --out-dir " + out_dir + " 2>/dev/null") == 0);
    const FixedRankPoint point = read_point(out_dir + "/point.txt");
    DenseMatrix expected = DenseMatrix::Zero(2, 2);
    expected(0, 0) = 3.0;
    CHECK((point.dense() - expected).norm() <= 1e-12);
    std::istringstream gap(slurp(fs::path(out_dir) / "gap.txt"));
    double sigma_r = 0, sigma_r1 = 0, rel = 0;
    gap >> sigma_r >> sigma_r1 >> rel;
    CHECK(sigma_r == doctest::Approx(3.0));
    CHECK(sigma_r1 == doctest::Approx(1.0));
    CHECK(rel == doctest::Approx(2.0 / 3.0));

    // Rank above the numerical rank: precondition failure, exit 2.
    DenseMatrix rank1 = DenseMatrix::Zero(2, 2);
    rank1(0, 0) = 3.0;
    write_matrix_text((dir / "rank1.txt").string(), rank1);
    CHECK(run_cli("truncate " + (dir / "rank1.txt").string() + " -r 2 " +
                  "--out-dir " + out_dir + " 2>/dev/null") == 2);
    // Missing input: I/O failure, exit 1.
    CHECK(run_cli("truncate " + (dir / "missing.txt").string() + " -r 1 " +
                  "--out-dir " + out_dir + " 2>/dev/null") == 1);
}

TEST_CASE("cli do-run propagates skeleton truncation as exit 3") {
    const fs::path dir = fresh_dir("cli_dorun");
    DenseMatrix amb0 = DenseMatrix::Zero(4, 3);
    amb0(0, 0) = 2.0;
    amb0(1, 1) = 1.0;
    amb0(2, 2) = 0.2;
    DenseMatrix a = DenseMatrix::Zero(4, 4);
    DenseMatrix b = DenseMatrix::Zero(4, 3);
    b(0, 0) = -1.0;
    b(1, 1) = 1.0;
    write_matrix_text((dir / "amb0.txt").string(), amb0);
    write_matrix_text((dir / "a.txt").string(), a);
    write_matrix_text((dir / "b.txt").string(), b);
    {
        std::ofstream out(dir / "run.desc");
        out << "field = affine\n"
            << "field_a = " << (dir / "a.txt").string() << "\n"
            << "field_b = " << (dir / "b.txt").string() << "\n"
            << "l = 4\nm = 3\nr = 1\ndt = 0.01\n"
            << "amb0 = " << (dir / "amb0.txt").string() << "\n"
            << "lipschitz_k = 0.0\n"
            << "out_error_report = err.csv\n";
    }
    CHECK(run_cli("do-run " + (dir / "run.desc").string() + " --out-dir " +
                  (dir / "out").string() + " 2>/dev/null") == 3);
    CHECK(fs::exists(dir / "out" / "err.csv"));

    {
        std::ofstream out(dir / "bad.desc");
        out << "field = zero\nnot_a_key = 1\n";
    }
    CHECK(run_cli("do-run " + (dir / "bad.desc").string() + " --out-dir " +
                  (dir / "out2").string() + " 2>/dev/null") == 1);
}
