#pragma once

#include <Eigen/Sparse>

#include "kschem/mesh.hpp"

namespace kschem {

/// Square sparse matrix (compressed rows) with its right-hand side.
template <typename Scalar>
struct SparseSystemT {
  Eigen::SparseMatrix<Scalar, Eigen::RowMajor> matrix;
  VectorX<Scalar> rhs;

  Index size() const { return rhs.size(); }
};

using SparseSystem = SparseSystemT<double>;

/// Sign and dominance audit of an assembled matrix.
struct MatrixAudit {
  bool positive_diagonal = true;
  bool nonpositive_offdiagonal = true;
  bool structurally_symmetric = true;
  bool row_dominant = true;     // diag >= sum |offdiag| in every row
  bool column_dominant = true;  // same, by columns
  bool row_strict_somewhere = false;
  bool column_strict_somewhere = false;

  /// Nonsingular M-matrix certificate for a connected mesh: Z-sign pattern
  /// plus weak dominance (rows or columns) that is strict somewhere.
  bool is_m_matrix() const {
    return positive_diagonal && nonpositive_offdiagonal &&
           ((row_dominant && row_strict_somewhere) ||
            (column_dominant && column_strict_somewhere));
  }
};

template <typename Scalar>
MatrixAudit audit_matrix(const Eigen::SparseMatrix<Scalar, Eigen::RowMajor>& a) {
  MatrixAudit audit;
  const Index n = a.rows();
  VectorX<Scalar> diag = VectorX<Scalar>::Zero(n);
  VectorX<Scalar> row_off = VectorX<Scalar>::Zero(n);
  VectorX<Scalar> col_off = VectorX<Scalar>::Zero(n);
  for (Index r = 0; r < n; ++r) {
    for (typename Eigen::SparseMatrix<Scalar, Eigen::RowMajor>::InnerIterator it(a, r); it; ++it) {
      if (it.col() == r) {
        diag[r] += it.value();
      } else {
        if (it.value() > Scalar(0)) audit.nonpositive_offdiagonal = false;
        row_off[r] += std::abs(it.value());
        col_off[it.col()] += std::abs(it.value());
      }
    }
  }
  // Pattern symmetry: compare the sparsity of A and A^T.
  const Eigen::SparseMatrix<Scalar, Eigen::RowMajor> at = a.transpose();
  if (at.nonZeros() != a.nonZeros()) {
    audit.structurally_symmetric = false;
  } else {
    for (Index r = 0; r < n && audit.structurally_symmetric; ++r) {
      typename Eigen::SparseMatrix<Scalar, Eigen::RowMajor>::InnerIterator i1(a, r), i2(at, r);
      for (; i1 && i2; ++i1, ++i2) {
        if (i1.col() != i2.col()) {
          audit.structurally_symmetric = false;
          break;
        }
      }
    }
  }
  // Dominance is judged with a relative rounding allowance.
  const Scalar tol = Scalar(64) * std::numeric_limits<Scalar>::epsilon();
  for (Index r = 0; r < n; ++r) {
    if (!(diag[r] > Scalar(0))) audit.positive_diagonal = false;
    const Scalar slack = tol * (diag[r] + row_off[r]);
    if (diag[r] < row_off[r] - slack) audit.row_dominant = false;
    if (diag[r] > row_off[r] + slack) audit.row_strict_somewhere = true;
    const Scalar cslack = tol * (diag[r] + col_off[r]);
    if (diag[r] < col_off[r] - cslack) audit.column_dominant = false;
    if (diag[r] > col_off[r] + cslack) audit.column_strict_somewhere = true;
  }
  return audit;
}

}  // namespace kschem
