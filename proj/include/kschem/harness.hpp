#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kschem/integrate.hpp"
#include "kschem/rng.hpp"

namespace kschem {

/// Axis-aligned rectangle or disk on which the initial perturbation lives.
struct Region {
  enum class Kind { rectangle, disk };
  Kind kind = Kind::rectangle;
  Rectangle<double> box{0, 0, 0, 0};  // open rectangle
  double cx = 0, cy = 0, radius = 0;  // open disk

  static Region rect(double xmin, double xmax, double ymin, double ymax) {
    Region r;
    r.kind = Kind::rectangle;
    r.box = {xmin, xmax, ymin, ymax};
    return r;
  }
  static Region disk(double cx, double cy, double radius) {
    Region r;
    r.kind = Kind::disk;
    r.cx = cx;
    r.cy = cy;
    r.radius = radius;
    return r;
  }
  bool contains(double x, double y) const {
    if (kind == Kind::rectangle) {
      return x > box.xmin && x < box.xmax && y > box.ymin && y < box.ymax;
    }
    const double dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy < radius * radius;
  }
};

struct Experiment {
  std::string name;
  Rectangle<double> domain{0, 1, 0, 1};
  Index nx = 1;
  Index ny = 1;
  double final_time = 1;
  std::vector<double> dts;  // strictly decreasing
  ModelSpec model;
  Region region;
  double base_density = 1;  // u0 = base + alpha inside the region, base outside
  double initial_concentration = 0;
  std::uint64_t seed = 1;

  void validate() const;
};

const std::vector<std::string>& experiment_names();
/// Desk-scale preset, or the published sizes when full is set.
Experiment make_experiment(const std::string& name, bool full = false);

/// Per cell inside the region (cell order), the mean of ten U[0,1) draws; 0 outside.
template <typename Urbg>
Field perturbation_alpha(const Mesh& mesh, const Region& region, Urbg& gen) {
  Field alpha = Field::Zero(mesh.num_cells());
  for (Index k = 0; k < mesh.num_cells(); ++k) {
    if (!region.contains(mesh.centers()(k, 0), mesh.centers()(k, 1))) continue;
    double sum = 0;
    for (int i = 0; i < 10; ++i) sum += uniform01(gen);
    alpha[k] = sum / 10.0;
  }
  return alpha;
}

Field perturbation_alpha(const Mesh& mesh, const Region& region, std::uint64_t seed);

Mesh make_mesh(const Experiment& e);

/// Initial (u0, c0); c0 is empty for the elliptic model. The perturbation
/// uses its own generator seeded with the experiment seed.
std::pair<Field, Field> initial_data(const Experiment& e, const Mesh& mesh);

enum class ErrorNorm { l2, linf };

/// ||u - u_ref|| / ||u_ref|| in the mesh-weighted L2 or the max norm.
double relative_error(const Mesh& mesh, const Field& u, const Field& u_ref, ErrorNorm norm);

struct OrderFit {
  double slope = 0;
  std::vector<double> pairwise;  // between consecutive points
};

/// Least-squares slope of log e against log dt plus consecutive pairwise
/// orders. Needs at least two points (three for a meaningful fit).
OrderFit convergence_order(const std::vector<std::pair<double, double>>& points);

struct SolverSettings {
  TrainConfig train{};
  SolverConfig solver{};
  double beta = 10;
  bool clamp_prediction_nonneg = false;
};

/// Runs one experiment to its final time with the given stepper and seed
/// split index; the network generator is seeded with seed + run_index.
RunSummary run_experiment(const Experiment& e, const Mesh& mesh, StepperKind stepper, double dt,
                          const SolverSettings& settings, std::uint64_t run_index,
                          const RunHooks& hooks = {});

struct ReferenceSpec {
  StepperKind method = StepperKind::sstli;
  double dt = 0;
  std::optional<std::filesystem::path> cache_dir;
};

/// Stable 64-bit hash of everything that determines a reference field.
std::uint64_t reference_hash(const Experiment& e, const ReferenceSpec& ref,
                             const SolverSettings& settings);

/// Final field of one fine run, cached on disk under its config hash.
/// Requires ref.dt <= smallest_study_dt / 10.
Field reference_solution(const Experiment& e, const Mesh& mesh, const ReferenceSpec& ref,
                         double smallest_study_dt, const SolverSettings& settings,
                         bool* cache_hit = nullptr);

struct StudyRow {
  StepperKind stepper{};
  double dt = 0;
  long steps = 0;
  double l2_error = 0;
  double linf_error = 0;
  long trainings = 0;
  double wall_ms = 0;
  double gamma_pct = 0;  // NaN when no semi-implicit row at this dt
  std::map<StopReason, long> stop_reasons;
  Field u_final;
};

struct StudyOptions {
  std::vector<StepperKind> steppers{StepperKind::sstli, StepperKind::estli,
                                    StepperKind::semi_implicit};
  SolverSettings settings{};
  ReferenceSpec reference{};
  /// Wall time per row is the minimum over this many identical runs.
  int timing_repeats = 1;
  int threads = 1;
};

struct StudyResult {
  Experiment experiment;
  std::vector<StudyRow> rows;  // stepper-major in option order, dt in list order
  std::map<StepperKind, OrderFit> orders;
  Field reference;
  bool reference_cache_hit = false;

  const StudyRow& row(StepperKind s, double dt) const;
};

StudyResult comparison_study(const Experiment& e, const StudyOptions& options);

/// study.csv, orders.csv and fields/<stepper>_<dt>.csv under dir.
void write_study_outputs(const std::filesystem::path& dir, const StudyResult& result,
                         const Mesh& mesh);
void write_study_csv(std::ostream& os, const std::vector<StudyRow>& rows);
void write_orders_csv(std::ostream& os, const StudyResult& result);

std::string format_dt(double dt);

}  // namespace kschem
