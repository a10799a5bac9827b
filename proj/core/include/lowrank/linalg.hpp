#pragma once

#include <Eigen/Dense>

namespace lowrank {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

/// Singular values in non-increasing order. Empty matrices give an empty vector.
Vector singular_values(const Matrix& m);

/// Largest singular value; 0 for empty matrices.
double op_norm(const Matrix& m);

/// k-th largest singular value (1-based); 0 if k exceeds min(rows, cols).
double sigma_k(const Matrix& m, Eigen::Index k);

/// Smallest singular value of a matrix with min(rows, cols) >= 1.
double sigma_min(const Matrix& m);

/// Eigenvalues of the symmetric part of m, ascending.
Vector sym_eigenvalues(const Matrix& m);
double lambda_min(const Matrix& m);
double lambda_max(const Matrix& m);

double frobenius_inner(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

/// Inverse of a symmetric matrix through its eigendecomposition. Throws
/// PreconditionError when the smallest |eigenvalue| is at or below `guard`.
Matrix symmetric_inverse(const Matrix& m, double guard);

/// Symmetric square root of a symmetric positive semidefinite matrix.
Matrix spd_sqrt(const Matrix& m);

/// Orthonormal n x n matrix from the QR factorization of a Gaussian matrix,
/// with column signs fixed so the distribution is Haar.
template <typename Rng>
Matrix haar_orthogonal(Eigen::Index n, Rng& rng);

}  // namespace linalg
}  // namespace lowrank

#include "lowrank/linalg_inl.hpp"
