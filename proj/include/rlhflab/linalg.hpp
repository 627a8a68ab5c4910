#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "rlhflab/matrix.hpp"

namespace rlhflab {

// Desk-scale dense symmetric linear algebra (d <= a few dozen).

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix,
/// or nullopt if the factorisation breaks down (not SPD).
std::optional<Matrix> cholesky(const Matrix& a);

/// Solves L L^T x = b given the Cholesky factor L.
Vector cholesky_solve(const Matrix& chol, const Vector& b);

/// 2 * sum_i log L_ii: the log-determinant of the factored matrix.
double cholesky_logdet(const Matrix& chol);

struct EigenDecomposition {
  Vector values;    // ascending
  Matrix vectors;   // columns are eigenvectors, A = V diag(values) V^T
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
EigenDecomposition jacobi_eigh(const Matrix& a);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double max_abs_entry(const Matrix& a);

}  // namespace rlhflab
