#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "kschem/sparse_system.hpp"

namespace kschem {

enum class SolverMethod { direct_lu, iterative_krylov };

struct SolverConfig {
  SolverMethod method = SolverMethod::direct_lu;
  double tol = 1e-12;  // relative residual, iterative only
  long max_iter = 0;   // 0 means 10 n

  void validate() const {
    if (!(tol > 0 && tol <= 1e-6)) throw Error(Errc::config, "solver.tol must lie in (0, 1e-6]");
    if (max_iter < 0) throw Error(Errc::config, "solver.max_iter must be >= 1 (0 = 10 n)");
  }
};

namespace detail {

/// Largest |row - col| over stored entries.
template <typename Scalar>
Index bandwidth(const Eigen::SparseMatrix<Scalar, Eigen::RowMajor>& a) {
  Index bw = 0;
  for (Index r = 0; r < a.outerSize(); ++r) {
    for (typename Eigen::SparseMatrix<Scalar, Eigen::RowMajor>::InnerIterator it(a, r); it; ++it) {
      bw = std::max(bw, std::abs(it.col() - r));
    }
  }
  return bw;
}

/// Banded LU with partial pivoting (LAPACK dgbsv). Empty when the
/// factorization hits an exactly zero pivot.
std::optional<VectorX<double>> banded_solve(const Eigen::SparseMatrix<double, Eigen::RowMajor>& a,
                                            const VectorX<double>& b, Index bw);

inline constexpr Index kMaxBandwidth = 64;

}  // namespace detail

template <typename Scalar>
VectorX<Scalar> solve(const SparseSystemT<Scalar>& system, const SolverConfig& config) {
  const Index n = system.size();
  if (system.matrix.rows() != n || system.matrix.cols() != n) {
    throw Error(Errc::dimension_mismatch, "system is not square or rhs size differs");
  }
  using ColMajor = Eigen::SparseMatrix<Scalar, Eigen::ColMajor>;

  if constexpr (std::is_same_v<Scalar, double>) {
    if (config.method == SolverMethod::direct_lu) {
      const Index bw = detail::bandwidth(system.matrix);
      if (bw <= detail::kMaxBandwidth) {
        auto x = detail::banded_solve(system.matrix, system.rhs, bw);
        if (!x) throw Error(Errc::singular_matrix, "banded LU hit a zero pivot");
        if (!x->allFinite()) {
          throw Error(Errc::singular_matrix, "banded LU solve produced a non-finite result");
        }
        return std::move(*x);
      }
    }
  }

  const ColMajor a = system.matrix;
  if (config.method == SolverMethod::direct_lu) {
    Eigen::SparseLU<ColMajor, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(a);
    lu.factorize(a);
    if (lu.info() != Eigen::Success) {
      throw Error(Errc::singular_matrix, "sparse LU failed: " + lu.lastErrorMessage());
    }
    VectorX<Scalar> x = lu.solve(system.rhs);
    if (lu.info() != Eigen::Success || !x.allFinite()) {
      throw Error(Errc::singular_matrix, "sparse LU solve produced a non-finite result");
    }
    return x;
  }

  Eigen::BiCGSTAB<ColMajor, Eigen::IncompleteLUT<Scalar>> krylov;
  krylov.setTolerance(static_cast<Scalar>(config.tol));
  krylov.setMaxIterations(config.max_iter > 0 ? config.max_iter : 10 * n);
  krylov.compute(a);
  if (krylov.info() != Eigen::Success) {
    throw Error(Errc::singular_matrix, "incomplete LU preconditioner failed");
  }
  VectorX<Scalar> x = krylov.solve(system.rhs);
  if (krylov.info() != Eigen::Success || !x.allFinite()) {
    throw Error(Errc::no_convergence, "BiCGSTAB stopped after " +
                                          std::to_string(krylov.iterations()) +
                                          " iterations, residual " +
                                          std::to_string(double(krylov.error())));
  }
  return x;
}

/// Dense Gaussian elimination with partial pivoting; a test oracle for solve().
template <typename Scalar>
VectorX<Scalar> dense_oracle_solve(const SparseSystemT<Scalar>& system) {
  const Index n = system.size();
  if (n > 2000) throw Error(Errc::precondition, "dense oracle limited to n <= 2000");
  if (system.matrix.rows() != n || system.matrix.cols() != n) {
    throw Error(Errc::dimension_mismatch, "system is not square or rhs size differs");
  }
  std::vector<Scalar> a(static_cast<std::size_t>(n * n), Scalar(0));
  std::vector<Scalar> b(system.rhs.data(), system.rhs.data() + n);
  auto at = [&](Index r, Index c) -> Scalar& { return a[static_cast<std::size_t>(r * n + c)]; };
  for (Index r = 0; r < n; ++r) {
    for (typename Eigen::SparseMatrix<Scalar, Eigen::RowMajor>::InnerIterator it(system.matrix, r);
         it; ++it) {
      at(r, it.col()) += it.value();
    }
  }
  Scalar scale = 0;
  for (Scalar v : a) scale = std::max(scale, std::abs(v));

  for (Index col = 0; col < n; ++col) {
    Index pivot = col;
    for (Index r = col + 1; r < n; ++r) {
      if (std::abs(at(r, col)) > std::abs(at(pivot, col))) pivot = r;
    }
    if (!(std::abs(at(pivot, col)) > scale * std::numeric_limits<Scalar>::epsilon())) {
      throw Error(Errc::singular_matrix, "zero pivot in column " + std::to_string(col));
    }
    if (pivot != col) {
      for (Index c = 0; c < n; ++c) std::swap(at(col, c), at(pivot, c));
      std::swap(b[static_cast<std::size_t>(col)], b[static_cast<std::size_t>(pivot)]);
    }
    const Scalar p = at(col, col);
    for (Index r = col + 1; r < n; ++r) {
      const Scalar f = at(r, col) / p;
      if (f == Scalar(0)) continue;
      at(r, col) = 0;
      for (Index c = col + 1; c < n; ++c) at(r, c) -= f * at(col, c);
      b[static_cast<std::size_t>(r)] -= f * b[static_cast<std::size_t>(col)];
    }
  }
  VectorX<Scalar> x(n);
  for (Index r = n - 1; r >= 0; --r) {
    Scalar s = b[static_cast<std::size_t>(r)];
    for (Index c = r + 1; c < n; ++c) s -= at(r, c) * x[c];
    x[r] = s / at(r, r);
  }
  return x;
}

}  // namespace kschem
