#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lowrank/do_dynamics.hpp"
#include "lowrank/optim.hpp"

namespace lowrank {

/// Parsed "key = value" run descriptor of the reduced-dynamics runner.
/// Unknown keys are rejected with their line number.
struct RunDescriptor {
    std::string field = "zero";  ///< zero | scalar | linear | skew | affine
    double field_c = 1.0;        ///< scalar(c) coefficient
    std::string field_a;         ///< matrix file for linear/affine A; seeded when empty
    std::string field_b;         ///< matrix file for affine B; seeded when empty
    double field_scale = 0.5;    ///< spectral norm of seeded field operators

    Index l = 8;
    Index m = 6;
    Index r = 2;
    double t0 = 0.0;
    double t1 = 1.0;
    double dt = 1e-2;
    Scheme scheme = Scheme::rk4;
    DoMode mode = DoMode::factor_ode;
    std::uint64_t seed = 0;
    int gauge_every = 1;
    int record_stride = 1;

    std::string amb0;  ///< initial dense matrix file; seeded spectrum when empty
    std::optional<double> lipschitz_k;

    std::string out_trajectory = "trajectory.csv";
    std::string out_error_report;  ///< error-report CSV; empty disables the study
};

RunDescriptor parse_run_descriptor(std::istream& in, const std::string& name);
RunDescriptor parse_run_descriptor(const std::string& path);

Scheme parse_scheme(const std::string& text);
DoMode parse_mode(const std::string& text);

/// Builds the descriptor's vector field; seeded operators are drawn from
/// `rng` and rescaled to `field_scale` in the spectral norm. Returns a
/// field with a certified Lipschitz constant whenever one is available.
VectorField build_vector_field(const RunDescriptor& desc, Rng& rng);

/// Initial ambient matrix: read from disk, or seeded with a fixed
/// descending spectrum when the descriptor names none.
DenseMatrix build_initial_matrix(const RunDescriptor& desc, Rng& rng);

struct DoRunOutcome {
    int exit_code = 0;  ///< 0 ok, 3 skeleton truncation (partial outputs kept)
    bool crossed = false;
    double crossing_time = 0.0;
    std::string message;
};

/// Runs a descriptor end to end, writing the trajectory CSV and, when
/// requested, the dense-reference error report under out_dir.
DoRunOutcome run_do_descriptor(const RunDescriptor& desc,
                               const std::string& out_dir);

/// A named, seeded experiment with optional parameter overrides.
struct ExperimentRecipe {
    std::string name;  ///< fig-optimization | do-error | scheme-order |
                       ///< curvature-audit | dsvd-fd-audit
    std::map<std::string, std::string> params;
    std::uint64_t seed = 0;
};

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    std::string detail;
};

struct ExperimentResult {
    std::string name;
    std::vector<CheckResult> checks;

    bool all_pass() const {
        for (const CheckResult& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

/// Runs one recipe, emitting its CSVs plus a summary file (pass/fail per
/// check with the measured quantities) under out_dir. Outputs are
/// deterministic for a fixed seed. `workers` > 1 fans independent
/// instances out to a thread pool; results are merged in instance order.
ExperimentResult run_experiment(const ExperimentRecipe& recipe,
                                const std::string& out_dir, int workers = 1);

void write_summary(const std::string& path, const ExperimentRecipe& recipe,
                   const ExperimentResult& result);

}  // namespace lowrank
