#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kschem/harness.hpp"

namespace kschem {

/// Inline overrides of the preset model. Unset fields keep the preset value.
struct ModelOverride {
  std::optional<Variant> variant;
  std::optional<double> diffusion;
  std::optional<double> chi;
  std::optional<double> crowding_threshold;
  std::optional<double> decay;
  std::optional<GrowthTerm> growth;
  std::optional<double> limiter_eps;

  void apply(ModelSpec& m) const;
};

struct RunConfig {
  std::string experiment = "embryonic";
  bool full = false;
  ModelOverride model;
  StepperKind stepper = StepperKind::sstli;
  std::optional<double> dt;          // default: the preset's smallest dt
  std::optional<double> final_time;  // "T"
  std::optional<std::pair<Index, Index>> grid;  // nx, ny
  std::optional<std::uint64_t> seed;
  SolverSettings settings;
  std::string out = "out";
  int snapshots = 0;

  // study
  std::vector<double> dts;  // empty: preset list
  std::vector<StepperKind> steppers{StepperKind::sstli, StepperKind::estli,
                                    StepperKind::semi_implicit};
  StepperKind reference_method = StepperKind::sstli;
  std::optional<double> reference_dt;  // default: smallest dt / 10
  std::optional<std::string> cache_dir;
  int threads = 1;
  int timing_repeats = 1;

  /// Preset with every override applied.
  Experiment experiment_spec() const;
  double run_dt() const;
  /// Throws Errc::config naming the first violated constraint.
  void validate() const;
};

std::pair<Index, Index> parse_grid(const std::string& s);
std::string format_grid(Index nx, Index ny);
std::vector<double> parse_dt_list(const std::string& s);
std::vector<StepperKind> parse_stepper_list(const std::string& s);

nlohmann::json to_json(const RunConfig& c);
/// Accepts a bare config object or a meta.json carrying one under "config".
/// Unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace kschem
