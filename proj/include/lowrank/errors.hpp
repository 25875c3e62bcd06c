#pragma once

#include <stdexcept>
#include <string>

namespace lowrank {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// The numerical rank of an input is below the requested rank.
class RankDeficientError : public Error {
public:
    using Error::Error;
};

/// sigma_r and sigma_{r+1} are too close: the rank-r truncation is not
/// stably defined (the input sits near the set where the best rank-r
/// approximation jumps).
class SkeletonProximityError : public Error {
public:
    SkeletonProximityError(const std::string& what, double sigma_r,
                           double sigma_r1, double relative_gap,
                           double at_time = 0.0)
        : Error(what), sigma_r(sigma_r), sigma_r1(sigma_r1),
          relative_gap(relative_gap), at_time(at_time) {}

    double sigma_r;
    double sigma_r1;
    double relative_gap;
    double at_time;  ///< failing time for mid-trajectory detections
};

/// Spectra of the two Sylvester operands are not separated enough for the
/// spectral solve; carries the two closest eigenvalues.
class NearSingularSylvesterError : public Error {
public:
    NearSingularSylvesterError(const std::string& what, double eig_a,
                               double eig_m)
        : Error(what), eig_a(eig_a), eig_m(eig_m) {}

    double eig_a;
    double eig_m;
};

/// A geodesic (or another factor-space integration) reached a state whose
/// coefficient matrix lost rank; carries the failing time.
class RankCollapseError : public Error {
public:
    RankCollapseError(const std::string& what, double at_time)
        : Error(what), at_time(at_time) {}

    double at_time;
};

/// The SVD kernel failed to meet its contract (orthonormality or
/// reconstruction residual); carries the offending residual.
class SvdConvergenceError : public Error {
public:
    SvdConvergenceError(const std::string& what, double residual)
        : Error(what), residual(residual) {}

    double residual;
};

/// Two tangent/normal objects anchored at different base points were mixed.
class BaseMismatchError : public Error {
public:
    using Error::Error;
};

/// File could not be read/written or has an invalid encoding.
class IoError : public Error {
public:
    using Error::Error;
};

/// A descriptor or matrix file failed to parse; carries the 1-based line.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line) : Error(what), line(line) {}

    int line;
};

}  // namespace lowrank
