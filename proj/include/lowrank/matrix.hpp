#pragma once

#include <Eigen/Dense>

#include "lowrank/errors.hpp"

namespace lowrank {

/// Ambient-space object: an l-by-m array of IEEE-754 doubles.
using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline bool all_finite(const DenseMatrix& a) { return a.allFinite(); }

inline void require_finite(const DenseMatrix& a, const char* what) {
    if (!a.allFinite()) {
        throw Error(std::string(what) + ": matrix has non-finite entries");
    }
}

inline void require_same_shape(const DenseMatrix& a, const DenseMatrix& b,
                               const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": shape mismatch (" +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

/// Frobenius scalar product Tr(A^T B).
inline double frobenius_inner(const DenseMatrix& a, const DenseMatrix& b) {
    require_same_shape(a, b, "frobenius_inner");
    return a.cwiseProduct(b).sum();
}

inline double frobenius_norm(const DenseMatrix& a) { return a.norm(); }

}  // namespace lowrank
