#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kschem/linsolve.hpp"
#include "kschem/mesh.hpp"
#include "kschem/rng.hpp"
#include "kschem/scheme.hpp"
#include "kschem/slnn.hpp"

namespace kschem {

enum class StepperKind { semi_implicit, estli, sstli };

std::string to_string(StepperKind k);
StepperKind stepper_from_string(const std::string& s);

/// Label of what one time advance did. boot covers the two semi-implicit
/// start-up steps and the first trained step; s5/s6/s8/s9 name the SST
/// step that produced the new level; ESTLI advances are labelled s5 (warm
/// start, train, predict, solve).
enum class Branch { boot, s5, s6, s8, s9, semi };

std::string to_string(Branch b);

struct StepContext {
  const Mesh& mesh;
  const ModelSpec& model;
  double dt;
  SolverConfig solver{};
  bool clamp_prediction_nonneg = false;
};

struct Solution {
  Field u;
  Field c;
};

/// Solves the c-system with u_tilde as the linearization point, then the
/// u-system with the fresh c. c_n is ignored by the elliptic (embryonic) model.
Solution linearized_step(const StepContext& ctx, const Field& u_n, const Field& c_n,
                         const Field& u_tilde);

/// Euler semi-implicit step: the linearization point is u_n itself.
Solution semi_implicit_step(const StepContext& ctx, const Field& u_n, const Field& c_n);

/// Densities u^{n-2}, u^{n-1}, u^n and the current concentration.
struct History {
  Field u_nm2;
  Field u_nm1;
  Field u_n;
  Field c_n;
  long level = 0;  // n

  static History start(Field u0, Field c0);
  void push(Solution s);
};

struct StepRecord {
  Branch branch = Branch::semi;
  /// ||u_tilde - u^{n+1}||_2 for the prediction the solve used; the
  /// semi-implicit steps use u^n as their prediction.
  double pred_err_norm = 0;
  bool trained = false;
  TrainReport report{};
};

Field maybe_clamp(Field u, bool clamp);

struct EstliState {
  History hist;
  std::optional<NetworkState> weights;  // w^{n-1}
  long trainings = 0;
};

/// One ESTLI advance. The first two levels use the semi-implicit step; from
/// n = 2 the network is trained on (u^{n-2}, u^{n-1}) -> u^n, randomly
/// initialised at n = 2 and warm-started from w^{n-1} afterwards.
StepRecord estli_step(const StepContext& ctx, EstliState& state, const TrainConfig& cfg,
                      const Uniform01& uniform);

enum class SstAction { bootstrap, at_step3, at_step4, at_step7 };

std::string to_string(SstAction a);

struct SstState {
  History hist;
  std::optional<NetworkState> w_curr;   // w^n, only set while an advance decides it
  std::optional<NetworkState> w_prev;   // w^{n-1}
  std::optional<NetworkState> w_prev2;  // w^{n-2}
  Field u_tilde;                        // u~^n, empty before the first prediction
  Field u_bar;                          // u-bar^n, empty when not defined
  SstAction next_action = SstAction::bootstrap;
  long trainings = 0;

  long steps() const { return hist.level; }
};

/// The three norms the SST control points compare.
struct SstNorms {
  double pred_err;  // ||u~^n - u^n||_2
  double bar_err;   // ||u-bar^n - u^n||_2, NaN when u-bar^n is undefined
  double change;    // ||u^{n-1} - u^n||_2
};

/// Test hook: may overwrite the computed norms at a control point.
using NormHook = std::function<void(SstAction, SstNorms&)>;

/// Executes exactly one time advance of the selected-steps algorithm.
StepRecord sst_advance(const StepContext& ctx, SstState& state, const TrainConfig& cfg,
                       double beta, const Uniform01& uniform, const NormHook& hook = {});

struct RunOptions {
  StepperKind stepper = StepperKind::sstli;
  double dt = 0.01;
  double final_time = 1.0;
  TrainConfig train{};
  SolverConfig solver{};
  double beta = 10.0;
  bool clamp_prediction_nonneg = false;
};

struct StepDiagnostics {
  long step = 0;
  double t = 0;
  double min_u = 0;
  double max_u = 0;
  double mass = 0;
  long trainings_cum = 0;
  Branch branch = Branch::semi;
  double pred_err_norm = 0;
  double wall_ms = 0;
};

struct TrainingEvent {
  long step = 0;
  TrainReport report;
};

struct RunHooks {
  std::function<void(const StepDiagnostics&)> on_step;
  /// Called at level 0, at each requested step and at the final step.
  std::function<void(long step, double t, const Field& u, const Field& c)> on_snapshot;
  std::vector<long> snapshot_steps;
};

struct TimeGrid {
  long steps = 0;
  double dt = 0;
  double last_dt = 0;  // equals dt unless a short final step was appended
  bool short_final_step = false;
};

/// Requires T/dt integral within 1e-9; otherwise appends one short step.
TimeGrid make_time_grid(double dt, double final_time);

struct RunSummary {
  Field u;
  Field c;
  TimeGrid grid;
  long trainings = 0;
  double wall_ms = 0;
  std::vector<StepDiagnostics> diagnostics;
  std::vector<TrainingEvent> training_log;
};

/// Thrown when a step fails; carries the index of the failing step.
class RunAborted : public Error {
 public:
  RunAborted(Errc code, long step, const std::string& what)
      : Error(code, "step " + std::to_string(step) + ": " + what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

void write_diagnostics_header(std::ostream& os);
void write_diagnostics_row(std::ostream& os, const StepDiagnostics& d);

RunSummary run(const Mesh& mesh, const ModelSpec& model, const RunOptions& options,
               const Field& u0, const Field& c0, const Uniform01& uniform,
               const RunHooks& hooks = {});

}  // namespace kschem
