#include "kschem/linsolve.hpp"

extern "C" void dgbsv_(const int* n, const int* kl, const int* ku, const int* nrhs, double* ab,
                       const int* ldab, int* ipiv, double* b, const int* ldb, int* info);

namespace kschem::detail {

std::optional<VectorX<double>> banded_solve(const Eigen::SparseMatrix<double, Eigen::RowMajor>& a,
                                            const VectorX<double>& b, Index bw) {
  const int n = static_cast<int>(a.rows());
  if (n == 0) return VectorX<double>();
  const int k = static_cast<int>(bw);
  const int ldab = 3 * k + 1;
  // LAPACK band storage: A(i, j) lives at ab[(k + k + i - j) + j * ldab].
  std::vector<double> ab(static_cast<std::size_t>(ldab) * static_cast<std::size_t>(n), 0.0);
  for (Index r = 0; r < a.outerSize(); ++r) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a, r); it; ++it) {
      const Index c = it.col();
      ab[static_cast<std::size_t>(2 * k + r - c + c * ldab)] += it.value();
    }
  }
  VectorX<double> x = b;
  std::vector<int> ipiv(static_cast<std::size_t>(n));
  const int nrhs = 1;
  int info = 0;
  dgbsv_(&n, &k, &k, &nrhs, ab.data(), &ldab, ipiv.data(), x.data(), &n, &info);
  if (info > 0) return std::nullopt;
  if (info < 0) throw Error(Errc::invalid_argument, "dgbsv rejected argument " + std::to_string(-info));
  return x;
}

}  // namespace kschem::detail
