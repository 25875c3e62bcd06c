#pragma once

#include <string>
#include <vector>

#include "lowrank/do_dynamics.hpp"
#include "lowrank/manifold.hpp"
#include "lowrank/optim.hpp"
#include "lowrank/trajectory.hpp"

namespace lowrank {

enum class FileFormat { text, binary, auto_detect };

/// 17-significant-digit decimal image of a double (round-trips exactly).
std::string format_double(double value);

/// Matrix text format: first line "l m", then l lines of m reals.
void write_matrix_text(const std::string& path, const DenseMatrix& m);
DenseMatrix read_matrix_text(const std::string& path);

/// Matrix binary format: magic "LRGM", little-endian u64 l and m, then
/// l*m little-endian IEEE-754 doubles, row-major.
void write_matrix_binary(const std::string& path, const DenseMatrix& m);
DenseMatrix read_matrix_binary(const std::string& path);

void write_matrix(const std::string& path, const DenseMatrix& m,
                  FileFormat format = FileFormat::text);
DenseMatrix read_matrix(const std::string& path,
                        FileFormat format = FileFormat::auto_detect);

/// Factored-point file: header "l m r", then U (l lines of r reals), then
/// Z (m lines of r reals).
void write_point(const std::string& path, const FixedRankPoint& p);
FixedRankPoint read_point(const std::string& path);

/// Trajectory CSV: t, gap_sigma_r, gap_sigma_r1, residual_norm,
/// reconstruction_error.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

/// Error-report CSV: t, do_error, best_error, bound.
void write_error_report_csv(const std::string& path,
                            const ErrorBoundReport& report);

/// Optimizer trace CSV: iter, J, grad_norm, step_size, status (status is
/// filled on the terminal row).
void write_trace_csv(const std::string& path, const OptimTrace& trace);

}  // namespace lowrank
