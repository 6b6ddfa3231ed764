#include "bayesmech/linalg.hpp"

#include "bayesmech/error.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>

namespace bayesmech {

namespace {

// Singular values above the cutoff, plus the thin SVD they came from.
struct ThresholdedSvd {
  Eigen::JacobiSVD<Matrix> svd;
  double cutoff = 0.0;
};

ThresholdedSvd thin_svd(const Matrix& m, double rank_tol) {
  ThresholdedSvd out{Eigen::JacobiSVD<Matrix>(m, Eigen::ComputeThinU | Eigen::ComputeThinV)};
  const auto& sv = out.svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  out.cutoff = rank_tol * smax;
  return out;
}

}  // namespace

double default_rank_tolerance(const Matrix& m) {
  return 1e-10 * static_cast<double>(std::max<Index>({m.rows(), m.cols(), 1}));
}

Matrix pseudo_inverse(const Matrix& m, double rank_tol) {
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  auto t = thin_svd(m, rank_tol);
  const auto& sv = t.svd.singularValues();
  Vector inv = Vector::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > t.cutoff && sv(i) > 0.0) inv(i) = 1.0 / sv(i);
  }
  return t.svd.matrixV() * inv.asDiagonal() * t.svd.matrixU().transpose();
}

Matrix pseudo_inverse(const Matrix& m) {
  return pseudo_inverse(m, default_rank_tolerance(m));
}

Index numerical_rank(const Matrix& m, double rank_tol) {
  if (m.size() == 0) return 0;
  auto t = thin_svd(m, rank_tol);
  const auto& sv = t.svd.singularValues();
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > t.cutoff && sv(i) > 0.0) ++rank;
  }
  return rank;
}

Index numerical_rank(const Matrix& m) {
  return numerical_rank(m, default_rank_tolerance(m));
}

double kernel_inclusion_residual(const Matrix& a, const Matrix& c) {
  if (a.cols() != c.cols()) {
    fail(ErrorCode::dimension_mismatch, "kernel inclusion needs a common domain");
  }
  const double cn = c.norm();
  if (cn == 0.0) return 0.0;
  const Matrix projector =
      Matrix::Identity(a.cols(), a.cols()) - pseudo_inverse(a) * a;
  return (c * projector).norm() / cn;
}

Matrix select(const Matrix& m, std::span<const Index> rows,
              std::span<const Index> cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Index>(i), static_cast<Index>(j)) = m(rows[i], cols[j]);
    }
  }
  return out;
}

Vector select(const Vector& v, std::span<const Index> idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
  return out;
}

double asymmetry(const Matrix& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  if (m.size() == 0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

Matrix solve_lyapunov(const Matrix& drift, const Matrix& constant) {
  const Index n = drift.rows();
  if (drift.cols() != n || constant.rows() != n || constant.cols() != n) {
    fail(ErrorCode::dimension_mismatch, "Lyapunov equation needs square matrices of equal size");
  }
  const Matrix id = Matrix::Identity(n, n);
  Matrix op = Matrix::Zero(n * n, n * n);
  // vec(B X) = (I ⊗ B) vec X, vec(X Bᵀ) = (B ⊗ I) vec X, column-major vec.
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      op.block(i * n, j * n, n, n) += id(i, j) * drift + drift(i, j) * id;
    }
  }
  const Vector rhs = -Eigen::Map<const Vector>(constant.data(), n * n);
  Eigen::FullPivLU<Matrix> lu(op);
  if (!lu.isInvertible()) {
    fail(ErrorCode::singular_block, "Lyapunov operator is singular");
  }
  Vector x = lu.solve(rhs);
  Matrix out = Eigen::Map<Matrix>(x.data(), n, n);
  return out;
}

bool is_hurwitz(const Matrix& m) {
  if (m.rows() != m.cols() || m.size() == 0) return false;
  Eigen::EigenSolver<Matrix> es(m, false);
  return (es.eigenvalues().real().array() < 0.0).all();
}

Matrix expm(const Matrix& m) { return m.exp(); }

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace bayesmech
