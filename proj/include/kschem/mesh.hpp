#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kschem/error.hpp"

namespace kschem {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One scalar value per control volume. Cell ids index the vector.
template <typename Scalar>
using FieldT = VectorX<Scalar>;
using Field = FieldT<double>;

template <typename Scalar>
struct Rectangle {
  Scalar xmin, xmax, ymin, ymax;

  Scalar area() const { return (xmax - xmin) * (ymax - ymin); }
};

/// Edge shared by two control volumes, stored once.
template <typename Scalar>
struct InteriorEdge {
  Index k;
  Index l;
  Scalar length;    // m(sigma)
  Scalar distance;  // d(x_K, x_L)
  Scalar transmissibility;
};

template <typename Scalar>
struct BoundaryEdge {
  Index k;
  Scalar length;
  Scalar distance;  // d(x_K, sigma)
};

/// Admissible finite-volume mesh. Storage is generic (cells, edges,
/// transmissibilities); only the uniform rectangular builder exists.
template <typename Scalar>
class MeshT {
 public:
  using Centers = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

  MeshT(VectorX<Scalar> measures, Centers centers, std::vector<InteriorEdge<Scalar>> interior,
        std::vector<BoundaryEdge<Scalar>> boundary)
      : measures_(std::move(measures)),
        centers_(std::move(centers)),
        interior_(std::move(interior)),
        boundary_(std::move(boundary)),
        adjacency_(static_cast<std::size_t>(measures_.size())) {
    for (std::size_t e = 0; e < interior_.size(); ++e) {
      adjacency_[static_cast<std::size_t>(interior_[e].k)].push_back(e);
      adjacency_[static_cast<std::size_t>(interior_[e].l)].push_back(e);
    }
  }

  Index num_cells() const { return measures_.size(); }
  const VectorX<Scalar>& measures() const { return measures_; }
  Scalar measure(Index k) const { return measures_[k]; }
  const Centers& centers() const { return centers_; }
  const std::vector<InteriorEdge<Scalar>>& interior_edges() const { return interior_; }
  const std::vector<BoundaryEdge<Scalar>>& boundary_edges() const { return boundary_; }
  /// Interior edge indices touching cell k.
  const std::vector<std::size_t>& cell_edges(Index k) const {
    return adjacency_[static_cast<std::size_t>(k)];
  }
  Scalar total_measure() const { return measures_.sum(); }

  // Set by the rectangular builder; zero for meshes built otherwise.
  Index nx = 0;
  Index ny = 0;

 private:
  VectorX<Scalar> measures_;
  Centers centers_;
  std::vector<InteriorEdge<Scalar>> interior_;
  std::vector<BoundaryEdge<Scalar>> boundary_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

using Mesh = MeshT<double>;

/// Uniform nx-by-ny mesh of an axis-aligned rectangle. Cells are row-major
/// with y outer: cell (i, j) has id j*nx + i. Centers are centroids.
template <typename Scalar>
MeshT<Scalar> build_rect_mesh(const Rectangle<Scalar>& domain, Index nx, Index ny) {
  if (!(domain.xmax > domain.xmin) || !(domain.ymax > domain.ymin)) {
    throw Error(Errc::invalid_domain, "rectangle must satisfy xmax > xmin and ymax > ymin");
  }
  if (nx <= 0 || ny <= 0) {
    throw Error(Errc::zero_count, "nx and ny must be positive");
  }
  const Scalar hx = (domain.xmax - domain.xmin) / static_cast<Scalar>(nx);
  const Scalar hy = (domain.ymax - domain.ymin) / static_cast<Scalar>(ny);
  const Index n = nx * ny;

  VectorX<Scalar> measures = VectorX<Scalar>::Constant(n, hx * hy);
  typename MeshT<Scalar>::Centers centers(n, 2);
  for (Index j = 0; j < ny; ++j) {
    for (Index i = 0; i < nx; ++i) {
      const Index k = j * nx + i;
      centers(k, 0) = domain.xmin + (static_cast<Scalar>(i) + Scalar(0.5)) * hx;
      centers(k, 1) = domain.ymin + (static_cast<Scalar>(j) + Scalar(0.5)) * hy;
    }
  }

  std::vector<InteriorEdge<Scalar>> interior;
  interior.reserve(static_cast<std::size_t>(ny * (nx - 1) + nx * (ny - 1)));
  std::vector<BoundaryEdge<Scalar>> boundary;
  boundary.reserve(static_cast<std::size_t>(2 * (nx + ny)));

  for (Index j = 0; j < ny; ++j) {
    for (Index i = 0; i < nx; ++i) {
      const Index k = j * nx + i;
      // East and north neighbours only, so each interior edge is visited once.
      if (i + 1 < nx) interior.push_back({k, k + 1, hy, hx, hy / hx});
      if (j + 1 < ny) interior.push_back({k, k + nx, hx, hy, hx / hy});
      if (i == 0) boundary.push_back({k, hy, hx / 2});
      if (i + 1 == nx) boundary.push_back({k, hy, hx / 2});
      if (j == 0) boundary.push_back({k, hx, hy / 2});
      if (j + 1 == ny) boundary.push_back({k, hx, hy / 2});
    }
  }

  MeshT<Scalar> mesh(std::move(measures), std::move(centers), std::move(interior),
                     std::move(boundary));
  mesh.nx = nx;
  mesh.ny = ny;
  return mesh;
}

template <typename Scalar>
void require_field(const MeshT<Scalar>& mesh, const FieldT<Scalar>& v, const char* what) {
  if (v.size() != mesh.num_cells()) {
    throw Error(Errc::dimension_mismatch, std::string(what) + " has " + std::to_string(v.size()) +
                                              " values, mesh has " +
                                              std::to_string(mesh.num_cells()) + " cells");
  }
}

/// (sum_K m(K) |v_K|^p)^(1/p)
template <typename Scalar, typename Derived>
Scalar discrete_lp_norm(const MeshT<Scalar>& mesh, const Eigen::MatrixBase<Derived>& v, Scalar p) {
  if (!(p >= Scalar(1)) || !std::isfinite(p)) {
    throw Error(Errc::invalid_argument, "p must be finite and >= 1");
  }
  if (v.size() != mesh.num_cells()) throw Error(Errc::dimension_mismatch, "field size");
  if (p == Scalar(2)) {
    return std::sqrt(mesh.measures().dot(v.cwiseAbs2()));
  }
  return std::pow(mesh.measures().dot(v.cwiseAbs().array().pow(p).matrix()), Scalar(1) / p);
}

template <typename Scalar, typename Derived>
Scalar discrete_l2_norm(const MeshT<Scalar>& mesh, const Eigen::MatrixBase<Derived>& v) {
  if (v.size() != mesh.num_cells()) throw Error(Errc::dimension_mismatch, "field size");
  return std::sqrt(mesh.measures().dot(v.cwiseAbs2()));
}

/// Discrete H1 seminorm; boundary edges carry D_sigma v = 0.
template <typename Scalar, typename Derived>
Scalar h1_seminorm(const MeshT<Scalar>& mesh, const Eigen::MatrixBase<Derived>& v) {
  if (v.size() != mesh.num_cells()) throw Error(Errc::dimension_mismatch, "field size");
  Scalar sum = 0;
  for (const auto& e : mesh.interior_edges()) {
    const Scalar d = v[e.k] - v[e.l];
    sum += e.transmissibility * d * d;
  }
  return std::sqrt(sum);
}

template <typename Scalar, typename Derived>
Scalar h1_norm(const MeshT<Scalar>& mesh, const Eigen::MatrixBase<Derived>& v) {
  return discrete_l2_norm(mesh, v) + h1_seminorm(mesh, v);
}

template <typename Scalar>
bool all_finite(const FieldT<Scalar>& v) {
  return v.allFinite();
}

/// Snapshot CSV: header "x,y,value", one row per cell in id order.
template <typename Scalar>
void write_field_csv(std::ostream& os, const MeshT<Scalar>& mesh, const FieldT<Scalar>& v) {
  require_field(mesh, v, "snapshot");
  const auto old_precision = os.precision(17);
  os << "x,y,value\n";
  for (Index k = 0; k < mesh.num_cells(); ++k) {
    os << mesh.centers()(k, 0) << ',' << mesh.centers()(k, 1) << ',' << v[k] << '\n';
  }
  os.precision(old_precision);
}

}  // namespace kschem
