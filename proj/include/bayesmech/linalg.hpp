#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace bayesmech {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Rank tolerance used when none is given: 1e-10 * max(rows, cols), relative
/// to the largest singular value.
double default_rank_tolerance(const Matrix& m);

/// Moore-Penrose pseudo-inverse by singular-value thresholding. Singular
/// values at or below `rank_tol * sigma_max` are treated as zero.
Matrix pseudo_inverse(const Matrix& m, double rank_tol);
Matrix pseudo_inverse(const Matrix& m);

/// Number of singular values above `rank_tol * sigma_max`.
Index numerical_rank(const Matrix& m, double rank_tol);
Index numerical_rank(const Matrix& m);

/// Relative violation of ker(a) ⊆ ker(c): ‖c (I - a⁻a)‖_F / ‖c‖_F, or 0 when c
/// vanishes. Both matrices act on the same domain (equal column counts).
double kernel_inclusion_residual(const Matrix& a, const Matrix& c);

/// Submatrix picking the listed rows and columns, in list order.
Matrix select(const Matrix& m, std::span<const Index> rows,
              std::span<const Index> cols);
Vector select(const Vector& v, std::span<const Index> idx);

/// Largest absolute entry of m - mᵀ.
double asymmetry(const Matrix& m);

/// Solves B X + X Bᵀ + C = 0 for X by vectorisation. Intended for the small
/// systems used here (d up to a few dozen).
Matrix solve_lyapunov(const Matrix& drift, const Matrix& constant);

/// True when every eigenvalue of m has strictly negative real part.
bool is_hurwitz(const Matrix& m);

/// Matrix exponential exp(m).
Matrix expm(const Matrix& m);

Matrix symmetrize(const Matrix& m);

}  // namespace bayesmech
