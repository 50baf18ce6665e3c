#include "kschem/scheme.hpp"

#include <vector>

namespace kschem {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::embryonic: return "embryonic";
    case Variant::growth: return "growth";
    case Variant::volume_filling: return "volume_filling";
  }
  return "?";
}

std::string to_string(GrowthTerm g) {
  switch (g) {
    case GrowthTerm::none: return "none";
    case GrowthTerm::quadratic: return "quadratic";
    case GrowthTerm::cubic: return "cubic";
  }
  return "?";
}

void ModelSpec::validate() const {
  if (!(diffusion > 0)) throw Error(Errc::config, "model.diffusion must be > 0");
  if (!(chi > 0)) throw Error(Errc::config, "model.chi must be > 0");
  if (variant == Variant::growth && !(decay > 0)) {
    throw Error(Errc::config, "model.decay must be > 0 for the growth variant");
  }
  if (variant == Variant::volume_filling && !(crowding_threshold > 0)) {
    throw Error(Errc::config, "model.crowding_threshold must be > 0");
  }
  const double eps = eps_s();
  if (!(eps >= 0 && eps < diffusion)) {
    throw Error(Errc::config, "model.limiter_eps must lie in [0, diffusion)");
  }
}

ModelSpec embryonic_model(double diffusion, double chi) {
  ModelSpec m;
  m.variant = Variant::embryonic;
  m.diffusion = diffusion;
  m.chi = chi;
  return m;
}

ModelSpec growth_model(GrowthTerm term, double diffusion, double chi, double decay) {
  ModelSpec m;
  m.variant = Variant::growth;
  m.growth = term;
  m.diffusion = diffusion;
  m.chi = chi;
  m.decay = decay;
  return m;
}

ModelSpec volume_filling_model(double diffusion, double chi0, double u_bar) {
  ModelSpec m;
  m.variant = Variant::volume_filling;
  m.diffusion = diffusion;
  m.chi = chi0;
  m.crowding_threshold = u_bar;
  m.decay = 1.0;
  return m;
}

namespace {

using Triplet = Eigen::Triplet<double>;

void finish(SparseSystem& sys, Index n, std::vector<Triplet>& triplets) {
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
  sys.matrix.makeCompressed();
}

}  // namespace

SparseSystem assemble_u_system(const Mesh& mesh, const ModelSpec& model, const Field& c_new,
                               const Field& u_old, const Field* u_tilde, double dt) {
  if (!(dt > 0)) throw Error(Errc::nonpositive_dt, "dt must be > 0");
  require_field(mesh, c_new, "c_new");
  require_field(mesh, u_old, "u_old");
  const bool needs_tilde = model.variant != Variant::embryonic;
  if (needs_tilde) {
    if (u_tilde == nullptr) {
      throw Error(Errc::invalid_argument, "predicted density required for " +
                                              to_string(model.variant));
    }
    require_field(mesh, *u_tilde, "u_tilde");
  }

  const Index n = mesh.num_cells();
  const double d = model.diffusion;
  const double eps = model.eps_s();
  const bool filling = model.variant == Variant::volume_filling;
  // Volume filling applies S to chi_tilde * Dc with unit scale.
  const double scale = filling ? 1.0 : model.chi;

  SparseSystem sys;
  sys.rhs.resize(n);
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(n + 4 * mesh.interior_edges().size()));

  for (Index k = 0; k < n; ++k) {
    const double m_dt = mesh.measure(k) / dt;
    double diag = m_dt;
    double rhs = m_dt * u_old[k];
    if (model.variant == Variant::growth && model.growth != GrowthTerm::none) {
      const double ut = (*u_tilde)[k];
      const double lin = model.growth == GrowthTerm::cubic ? ut * ut : ut;
      diag += 2.0 * mesh.measure(k) * lin;
      rhs += 2.0 * mesh.measure(k) * lin;
    }
    triplets.emplace_back(k, k, diag);
    sys.rhs[k] = rhs;
  }

  for (const auto& e : mesh.interior_edges()) {
    double x = c_new[e.l] - c_new[e.k];  // Dc seen from K
    if (filling) {
      x *= chi_edge_average((*u_tilde)[e.k], (*u_tilde)[e.l],
                            [&](double u) { return model.sensitivity(u); });
    }
    const double out_k = e.transmissibility * (d + scale * limiter_s(x, d, scale, eps));
    const double out_l = e.transmissibility * (d + scale * limiter_s(-x, d, scale, eps));
    triplets.emplace_back(e.k, e.k, out_k);
    triplets.emplace_back(e.k, e.l, -out_l);
    triplets.emplace_back(e.l, e.l, out_l);
    triplets.emplace_back(e.l, e.k, -out_k);
  }

  finish(sys, n, triplets);
  return sys;
}

SparseSystem assemble_c_system(const Mesh& mesh, const ModelSpec& model, const Field& source,
                               const Field* c_old, std::optional<double> dt) {
  require_field(mesh, source, "source");
  const Index n = mesh.num_cells();
  const bool elliptic = model.variant == Variant::embryonic;
  if (!elliptic) {
    if (c_old == nullptr || !dt) {
      throw Error(Errc::invalid_argument, "c_old and dt required for " + to_string(model.variant));
    }
    if (!(*dt > 0)) throw Error(Errc::nonpositive_dt, "dt must be > 0");
    require_field(mesh, *c_old, "c_old");
  }
  const double decay = model.variant == Variant::volume_filling ? 1.0 : model.decay;

  SparseSystem sys;
  sys.rhs.resize(n);
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(n + 4 * mesh.interior_edges().size()));

  for (Index k = 0; k < n; ++k) {
    const double m = mesh.measure(k);
    if (elliptic) {
      triplets.emplace_back(k, k, m);
      sys.rhs[k] = m * kinetic_g(source[k]);
    } else {
      triplets.emplace_back(k, k, m / *dt + decay * m);
      sys.rhs[k] = m * (*c_old)[k] / *dt + m * source[k];
    }
  }
  for (const auto& e : mesh.interior_edges()) {
    const double t = e.transmissibility;
    triplets.emplace_back(e.k, e.k, t);
    triplets.emplace_back(e.l, e.l, t);
    triplets.emplace_back(e.k, e.l, -t);
    triplets.emplace_back(e.l, e.k, -t);
  }

  finish(sys, n, triplets);
  return sys;
}

}  // namespace kschem
