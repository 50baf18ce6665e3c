#pragma once

#include <optional>
#include <string>

#include "kschem/mesh.hpp"
#include "kschem/sparse_system.hpp"

namespace kschem {

enum class Variant { embryonic, growth, volume_filling };
enum class GrowthTerm { none, quadratic, cubic };

std::string to_string(Variant v);
std::string to_string(GrowthTerm g);

/// Parameters of one Keller-Segel variant. The chemical diffusion is 1 in
/// all three.
struct ModelSpec {
  Variant variant = Variant::embryonic;
  double diffusion = 0.25;  // D_u
  /// Constant sensitivity for embryonic/growth; chi0 in chi(u) = chi0 (1 - u/u_bar)
  /// for volume filling.
  double chi = 2.0;
  double crowding_threshold = 1.0;  // u_bar, volume filling only
  double decay = 1.0;               // lambda; fixed to 1 for volume filling
  GrowthTerm growth = GrowthTerm::none;
  /// Limiter constant eps_S; negative means "use 1e-3 * D_u".
  double limiter_eps = -1.0;

  double eps_s() const { return limiter_eps < 0 ? 1e-3 * diffusion : limiter_eps; }
  double sensitivity(double u) const {
    return variant == Variant::volume_filling ? chi * (1.0 - u / crowding_threshold) : chi;
  }
  /// Throws Errc::config naming the violated constraint.
  void validate() const;
};

ModelSpec embryonic_model(double diffusion = 0.25, double chi = 2.0);
ModelSpec growth_model(GrowthTerm term, double diffusion, double chi, double decay);
ModelSpec volume_filling_model(double diffusion = 0.1, double chi0 = 10.0, double u_bar = 1.0);

inline constexpr double kKineticGuard = 1e-8;

/// Hybrid central/upwind limiter. Ties at the breakpoints take the x/2 branch.
template <typename Scalar>
constexpr Scalar limiter_s(Scalar x, Scalar diffusion, Scalar chi_scale, Scalar eps) {
  const Scalar lo = Scalar(2) * (eps - diffusion) / chi_scale;
  const Scalar hi = Scalar(2) * (diffusion - eps) / chi_scale;
  if (x < lo) return Scalar(0);
  if (x > hi) return x;
  return x / Scalar(2);
}

/// s / (s + 1), the production term of the embryonic model.
template <typename Scalar>
Scalar kinetic_g(Scalar s) {
  if (!(s > Scalar(-1) + Scalar(kKineticGuard))) {
    throw Error(Errc::singular_kinetic, "kinetic argument " + std::to_string(double(s)) +
                                            " too close to or below -1");
  }
  return s / (s + Scalar(1));
}

/// Arithmetic edge mean of the sensitivity at the two predicted densities.
template <typename Scalar, typename Chi>
Scalar chi_edge_average(Scalar u_k, Scalar u_l, Chi&& chi) {
  return (chi(u_k) + chi(u_l)) / Scalar(2);
}

/// Cell-density system. u_tilde is the predicted density entering the
/// growth source and the volume-filling sensitivity; required for those
/// variants, ignored for embryonic.
SparseSystem assemble_u_system(const Mesh& mesh, const ModelSpec& model, const Field& c_new,
                               const Field& u_old, const Field* u_tilde, double dt);

/// Concentration system. For embryonic, source is the density whose kinetic
/// image enters the rhs and c_old/dt are unused (elliptic). For growth and
/// volume filling, source enters linearly and c_old, dt are required.
SparseSystem assemble_c_system(const Mesh& mesh, const ModelSpec& model, const Field& source,
                               const Field* c_old, std::optional<double> dt);

}  // namespace kschem
