#include "kschem/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace kschem {

using nlohmann::json;

namespace {

Variant variant_from_string(const std::string& s) {
  if (s == "embryonic") return Variant::embryonic;
  if (s == "growth") return Variant::growth;
  if (s == "volume_filling") return Variant::volume_filling;
  throw Error(Errc::config, "unknown model.variant '" + s + "'");
}

GrowthTerm growth_from_string(const std::string& s) {
  if (s == "none") return GrowthTerm::none;
  if (s == "quadratic") return GrowthTerm::quadratic;
  if (s == "cubic") return GrowthTerm::cubic;
  throw Error(Errc::config, "unknown model.growth '" + s + "'");
}

SolverMethod method_from_string(const std::string& s) {
  if (s == "direct_lu" || s == "direct") return SolverMethod::direct_lu;
  if (s == "iterative_krylov" || s == "iterative") return SolverMethod::iterative_krylov;
  throw Error(Errc::config, "unknown solver.method '" + s + "'");
}

std::string to_string(SolverMethod m) {
  return m == SolverMethod::direct_lu ? "direct_lu" : "iterative_krylov";
}

void reject_unknown(const json& j, const std::string& where, std::set<std::string> known) {
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      throw Error(Errc::config, "unknown key '" + where + item.key() + "'");
    }
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::config, "bad value for '" + where + key + "': " + e.what());
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where = "") {
  if (j.contains(key) && !j.at(key).is_null()) out = get<T>(j, key, where);
}

template <typename T>
void read(const json& j, const char* key, std::optional<T>& out, const std::string& where = "") {
  if (j.contains(key) && !j.at(key).is_null()) out = get<T>(j, key, where);
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

void ModelOverride::apply(ModelSpec& m) const {
  if (variant) m.variant = *variant;
  if (diffusion) m.diffusion = *diffusion;
  if (chi) m.chi = *chi;
  if (crowding_threshold) m.crowding_threshold = *crowding_threshold;
  if (decay) m.decay = *decay;
  if (growth) m.growth = *growth;
  if (limiter_eps) m.limiter_eps = *limiter_eps;
}

Experiment RunConfig::experiment_spec() const {
  Experiment e = make_experiment(experiment, full);
  model.apply(e.model);
  if (final_time) e.final_time = *final_time;
  if (grid) {
    e.nx = grid->first;
    e.ny = grid->second;
  }
  if (seed) e.seed = *seed;
  if (!dts.empty()) e.dts = dts;
  return e;
}

double RunConfig::run_dt() const {
  if (dt) return *dt;
  const Experiment e = make_experiment(experiment, full);
  return e.dts.back();
}

void RunConfig::validate() const {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), experiment) == names.end()) {
    throw Error(Errc::config, "unknown experiment '" + experiment + "'");
  }
  if (dt && !(*dt > 0)) throw Error(Errc::config, "dt must be > 0");
  if (final_time && !(*final_time > 0)) throw Error(Errc::config, "T must be > 0");
  if (grid && (grid->first < 1 || grid->second < 1)) {
    throw Error(Errc::config, "grid counts must be >= 1");
  }
  if (snapshots < 0) throw Error(Errc::config, "snapshots must be >= 0");
  if (threads < 1) throw Error(Errc::config, "threads must be >= 1");
  if (timing_repeats < 1) throw Error(Errc::config, "timing_repeats must be >= 1");
  if (steppers.empty()) throw Error(Errc::config, "steppers must not be empty");
  if (reference_dt && !(*reference_dt > 0)) throw Error(Errc::config, "reference.dt must be > 0");
  if (!(settings.beta > 1)) throw Error(Errc::config, "beta must be > 1");
  if (out.empty()) throw Error(Errc::config, "out must not be empty");
  settings.train.validate();
  settings.solver.validate();
  const Experiment e = experiment_spec();
  e.validate();
  if (e.dts.empty()) throw Error(Errc::config, "dt list must not be empty");
  if (reference_dt && *reference_dt > e.dts.back() / 10.0 * (1 + 1e-12)) {
    throw Error(Errc::config, "reference.dt must be <= smallest study dt / 10");
  }
}

std::pair<Index, Index> parse_grid(const std::string& s) {
  const auto x = s.find_first_of("xX");
  auto number = [&](std::string_view part) {
    long v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || p != part.data() + part.size() || v < 1) {
      throw Error(Errc::config, "grid must look like NXxNY with positive counts, got '" + s + "'");
    }
    return static_cast<Index>(v);
  };
  if (x == std::string::npos) {
    throw Error(Errc::config, "grid must look like NXxNY, got '" + s + "'");
  }
  const std::string_view view(s);
  return {number(view.substr(0, x)), number(view.substr(x + 1))};
}

std::string format_grid(Index nx, Index ny) {
  return std::to_string(nx) + "x" + std::to_string(ny);
}

std::vector<double> parse_dt_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw Error(Errc::config, "bad dt '" + item + "' in list '" + s + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw Error(Errc::config, "empty dt list");
  return out;
}

std::vector<StepperKind> parse_stepper_list(const std::string& s) {
  std::vector<StepperKind> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(stepper_from_string(item));
  if (out.empty()) throw Error(Errc::config, "empty stepper list");
  return out;
}

json to_json(const RunConfig& c) {
  json model = json::object();
  if (c.model.variant) model["variant"] = to_string(*c.model.variant);
  if (c.model.diffusion) model["diffusion"] = *c.model.diffusion;
  if (c.model.chi) model["chi"] = *c.model.chi;
  if (c.model.crowding_threshold) model["crowding_threshold"] = *c.model.crowding_threshold;
  if (c.model.decay) model["decay"] = *c.model.decay;
  if (c.model.growth) model["growth"] = to_string(*c.model.growth);
  if (c.model.limiter_eps) model["limiter_eps"] = *c.model.limiter_eps;

  const TrainConfig& t = c.settings.train;
  const SolverConfig& s = c.settings.solver;
  json steppers = json::array();
  for (StepperKind k : c.steppers) steppers.push_back(to_string(k));

  json j;
  j["experiment"] = c.experiment;
  j["full"] = c.full;
  j["model"] = model;
  j["stepper"] = to_string(c.stepper);
  j["dt"] = opt(c.dt);
  j["T"] = opt(c.final_time);
  j["grid"] = c.grid ? json(format_grid(c.grid->first, c.grid->second)) : json(nullptr);
  j["seed"] = opt(c.seed);
  j["solver"] = {{"method", to_string(s.method)}, {"tol", s.tol}, {"max_iter", s.max_iter}};
  j["train"] = {{"eps_train", t.eps_train}, {"grad_min", t.grad_min},
                {"max_iter", t.max_iter},   {"mu0", t.mu0},
                {"mu_up", t.mu_up},         {"mu_down", t.mu_down},
                {"mu_max", t.mu_max},       {"scale_gradient", t.scale_gradient}};
  j["beta"] = c.settings.beta;
  j["clamp_prediction_nonneg"] = c.settings.clamp_prediction_nonneg;
  j["out"] = c.out;
  j["snapshots"] = c.snapshots;
  j["dts"] = c.dts;
  j["steppers"] = steppers;
  j["reference"] = {{"method", to_string(c.reference_method)},
                    {"dt", opt(c.reference_dt)},
                    {"cache_dir", opt(c.cache_dir)}};
  j["threads"] = c.threads;
  j["timing_repeats"] = c.timing_repeats;
  return j;
}

RunConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(Errc::config, "config must be a JSON object");
  const json& j = doc.contains("config") ? doc.at("config") : doc;
  if (!j.is_object()) throw Error(Errc::config, "'config' must be a JSON object");
  reject_unknown(j, "",
                 {"experiment", "full", "model", "stepper", "dt", "T", "grid", "seed", "solver",
                  "train", "beta", "clamp_prediction_nonneg", "out", "snapshots", "dts",
                  "steppers", "reference", "threads", "timing_repeats"});
  RunConfig c;
  read(j, "experiment", c.experiment);
  read(j, "full", c.full);
  if (j.contains("stepper")) c.stepper = stepper_from_string(get<std::string>(j, "stepper", ""));
  read(j, "dt", c.dt);
  read(j, "T", c.final_time);
  if (j.contains("grid") && !j.at("grid").is_null()) {
    c.grid = parse_grid(get<std::string>(j, "grid", ""));
  }
  read(j, "seed", c.seed);
  read(j, "beta", c.settings.beta);
  read(j, "clamp_prediction_nonneg", c.settings.clamp_prediction_nonneg);
  read(j, "out", c.out);
  read(j, "snapshots", c.snapshots);
  read(j, "dts", c.dts);
  read(j, "threads", c.threads);
  read(j, "timing_repeats", c.timing_repeats);
  if (j.contains("steppers")) {
    c.steppers.clear();
    for (const auto& s : j.at("steppers")) {
      if (!s.is_string()) throw Error(Errc::config, "steppers must be strings");
      c.steppers.push_back(stepper_from_string(s.get<std::string>()));
    }
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    if (!m.is_object()) throw Error(Errc::config, "'model' must be an object");
    reject_unknown(m, "model.",
                   {"variant", "diffusion", "chi", "crowding_threshold", "decay", "growth",
                    "limiter_eps"});
    if (m.contains("variant")) c.model.variant = variant_from_string(get<std::string>(m, "variant", "model."));
    if (m.contains("growth")) c.model.growth = growth_from_string(get<std::string>(m, "growth", "model."));
    read(m, "diffusion", c.model.diffusion, "model.");
    read(m, "chi", c.model.chi, "model.");
    read(m, "crowding_threshold", c.model.crowding_threshold, "model.");
    read(m, "decay", c.model.decay, "model.");
    read(m, "limiter_eps", c.model.limiter_eps, "model.");
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    reject_unknown(s, "solver.", {"method", "tol", "max_iter"});
    if (s.contains("method")) c.settings.solver.method = method_from_string(get<std::string>(s, "method", "solver."));
    read(s, "tol", c.settings.solver.tol, "solver.");
    read(s, "max_iter", c.settings.solver.max_iter, "solver.");
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, "train.",
                   {"eps_train", "grad_min", "max_iter", "mu0", "mu_up", "mu_down", "mu_max",
                    "scale_gradient"});
    TrainConfig& tc = c.settings.train;
    read(t, "eps_train", tc.eps_train, "train.");
    read(t, "grad_min", tc.grad_min, "train.");
    read(t, "max_iter", tc.max_iter, "train.");
    read(t, "mu0", tc.mu0, "train.");
    read(t, "mu_up", tc.mu_up, "train.");
    read(t, "mu_down", tc.mu_down, "train.");
    read(t, "mu_max", tc.mu_max, "train.");
    read(t, "scale_gradient", tc.scale_gradient, "train.");
  }
  if (j.contains("reference")) {
    const json& r = j.at("reference");
    reject_unknown(r, "reference.", {"method", "dt", "cache_dir"});
    if (r.contains("method")) c.reference_method = stepper_from_string(get<std::string>(r, "method", "reference."));
    read(r, "dt", c.reference_dt, "reference.");
    read(r, "cache_dir", c.cache_dir, "reference.");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::config, "config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace kschem
