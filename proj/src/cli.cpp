#include "kschem/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "kschem/config.hpp"

namespace kschem {

using nlohmann::json;

namespace {

struct Flags {
  std::string config, experiment, grid, stepper, out, solver, dts, steppers, ref_method, cache_dir;
  double dt = 0, final_time = 0, beta = 0, eps_train = 0, chi = 0, dt_ref = 0;
  std::uint64_t seed = 0;
  int snapshots = 0, threads = 0, repeats = 0;
  bool full = false, clamp = false;

  CLI::Option *o_experiment{}, *o_grid{}, *o_stepper{}, *o_out{}, *o_solver{}, *o_dts{},
      *o_steppers{}, *o_ref_method{}, *o_cache_dir{}, *o_dt{}, *o_T{}, *o_beta{}, *o_eps{},
      *o_chi{}, *o_dt_ref{}, *o_seed{}, *o_snapshots{}, *o_threads{}, *o_repeats{}, *o_full{},
      *o_clamp{};
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config file (a meta.json is accepted)");
  f.o_experiment = app->add_option("--experiment", f.experiment,
                                   "embryonic | growth_quadratic | volume_filling | growth_cubic");
  f.o_full = app->add_flag("--full", f.full, "published grid sizes and final times");
  f.o_grid = app->add_option("--grid", f.grid, "NXxNY");
  f.o_seed = app->add_option("--seed", f.seed, "perturbation seed");
  f.o_T = app->add_option("--T", f.final_time, "final time");
  f.o_beta = app->add_option("--beta", f.beta, "SST acceptance factor");
  f.o_solver = app->add_option("--solver", f.solver, "direct | iterative");
  f.o_clamp = app->add_flag("--clamp", f.clamp, "clamp predicted densities at zero");
  f.o_eps = app->add_option("--eps-train", f.eps_train, "training MSE goal");
  f.o_chi = app->add_option("--chi", f.chi, "chemotactic sensitivity (chi0 for volume filling)");
  f.o_out = app->add_option("--out", f.out, "output directory");
}

RunConfig build_config(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.o_experiment && f.o_experiment->count()) c.experiment = f.experiment;
  if (f.o_full && f.o_full->count()) c.full = f.full;
  if (f.o_grid && f.o_grid->count()) c.grid = parse_grid(f.grid);
  if (f.o_seed && f.o_seed->count()) c.seed = f.seed;
  if (f.o_T && f.o_T->count()) c.final_time = f.final_time;
  if (f.o_beta && f.o_beta->count()) c.settings.beta = f.beta;
  if (f.o_solver && f.o_solver->count()) {
    if (f.solver == "direct" || f.solver == "direct_lu") {
      c.settings.solver.method = SolverMethod::direct_lu;
    } else if (f.solver == "iterative" || f.solver == "iterative_krylov") {
      c.settings.solver.method = SolverMethod::iterative_krylov;
    } else {
      throw Error(Errc::config, "unknown solver '" + f.solver + "'");
    }
  }
  if (f.o_clamp && f.o_clamp->count()) c.settings.clamp_prediction_nonneg = f.clamp;
  if (f.o_eps && f.o_eps->count()) c.settings.train.eps_train = f.eps_train;
  if (f.o_chi && f.o_chi->count()) c.model.chi = f.chi;
  if (f.o_out && f.o_out->count()) c.out = f.out;
  if (f.o_stepper && f.o_stepper->count()) c.stepper = stepper_from_string(f.stepper);
  if (f.o_dt && f.o_dt->count()) c.dt = f.dt;
  if (f.o_snapshots && f.o_snapshots->count()) c.snapshots = f.snapshots;
  if (f.o_dts && f.o_dts->count()) c.dts = parse_dt_list(f.dts);
  if (f.o_steppers && f.o_steppers->count()) c.steppers = parse_stepper_list(f.steppers);
  if (f.o_ref_method && f.o_ref_method->count()) {
    c.reference_method = stepper_from_string(f.ref_method);
  }
  if (f.o_dt_ref && f.o_dt_ref->count()) c.reference_dt = f.dt_ref;
  if (f.o_cache_dir && f.o_cache_dir->count()) c.cache_dir = f.cache_dir;
  if (f.o_threads && f.o_threads->count()) c.threads = f.threads;
  if (f.o_repeats && f.o_repeats->count()) c.timing_repeats = f.repeats;
  c.validate();
  return c;
}

void write_json(const std::filesystem::path& file, const json& j) {
  std::ofstream os(file);
  os << j.dump(2) << '\n';
  if (!os) throw Error(Errc::io, "cannot write " + file.string());
}

json report_json(long step, const TrainReport& r) {
  return {{"step", step},
          {"iterations", r.iterations},
          {"mse", r.mse},
          {"gradient", r.gradient},
          {"reason", to_string(r.reason)}};
}

json base_meta(const std::string& command, const RunConfig& c, const Experiment& e) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["rng"] = kRngId;
  m["seed"] = e.seed;
  m["config"] = to_json(c);
  m["experiment"] = {{"name", e.name},
                     {"grid", format_grid(e.nx, e.ny)},
                     {"domain", {e.domain.xmin, e.domain.xmax, e.domain.ymin, e.domain.ymax}},
                     {"T", e.final_time},
                     {"dts", e.dts},
                     {"variant", to_string(e.model.variant)},
                     {"diffusion", e.model.diffusion},
                     {"chi", e.model.chi},
                     {"decay", e.model.decay},
                     {"growth", to_string(e.model.growth)},
                     {"limiter_eps", e.model.eps_s()}};
  m["status"] = "running";
  return m;
}

int cap_threads(int requested) {
  if (const char* env = std::getenv("KSCHEM_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) return std::min(requested, cap);
  }
  return requested;
}

void write_field(const std::filesystem::path& file, const Mesh& mesh, const Field& v) {
  std::ofstream os(file);
  write_field_csv(os, mesh, v);
  if (!os) throw Error(Errc::io, "cannot write " + file.string());
}

int cmd_run(const RunConfig& c, std::ostream& out) {
  const Experiment e = c.experiment_spec();
  const double dt = c.run_dt();
  const TimeGrid grid = make_time_grid(dt, e.final_time);
  const Mesh mesh = make_mesh(e);
  const std::filesystem::path dir = c.out;
  std::filesystem::create_directories(dir / "fields");

  json meta = base_meta("run", c, e);
  meta["stepper"] = to_string(c.stepper);
  meta["dt"] = dt;
  meta["steps"] = grid.steps;
  meta["short_final_step"] = grid.short_final_step;
  meta["last_dt"] = grid.last_dt;
  meta["network_seed"] = e.seed;
  write_json(dir / "meta.json", meta);

  std::ofstream diag(dir / "diagnostics.csv");
  write_diagnostics_header(diag);
  RunHooks hooks;
  hooks.on_step = [&](const StepDiagnostics& d) { write_diagnostics_row(diag, d); };
  for (int i = 1; i <= c.snapshots; ++i) {
    hooks.snapshot_steps.push_back(std::lround(double(i) * grid.steps / (c.snapshots + 1)));
  }
  json snaps = json::array();
  hooks.on_snapshot = [&](long step, double t, const Field& u, const Field& cf) {
    const std::string tag = std::to_string(step);
    write_field(dir / "fields" / ("u_" + tag + ".csv"), mesh, u);
    if (cf.size() > 0) write_field(dir / "fields" / ("c_" + tag + ".csv"), mesh, cf);
    snaps.push_back({{"step", step}, {"t", t}, {"file", "fields/u_" + tag + ".csv"}});
  };

  try {
    RunSummary s = run_experiment(e, mesh, c.stepper, dt, c.settings, 0, hooks);
    diag.flush();
    write_field(dir / "fields" / "u_final.csv", mesh, s.u);
    if (s.c.size() > 0) write_field(dir / "fields" / "c_final.csv", mesh, s.c);
    json reports = json::array();
    std::map<std::string, long> counts;
    for (const auto& ev : s.training_log) {
      reports.push_back(report_json(ev.step, ev.report));
      ++counts[to_string(ev.report.reason)];
    }
    meta["status"] = "completed";
    meta["trainings"] = s.trainings;
    meta["wall_ms"] = s.wall_ms;
    meta["mass_final"] = s.diagnostics.empty() ? 0.0 : s.diagnostics.back().mass;
    meta["min_u_final"] = s.u.minCoeff();
    meta["stop_reasons"] = counts;
    meta["training_reports"] = reports;
    meta["snapshots"] = snaps;
    write_json(dir / "meta.json", meta);
    out << "run " << e.name << " " << to_string(c.stepper) << " dt=" << format_dt(dt) << ": "
        << grid.steps << " steps, " << s.trainings << " trainings, min u " << s.u.minCoeff()
        << ", " << s.wall_ms << " ms -> " << dir.string() << '\n';
    return 0;
  } catch (const RunAborted& ex) {
    diag.flush();
    meta["status"] = "failed";
    meta["error"] = {{"code", errc_name(ex.code())}, {"step", ex.step()}, {"message", ex.what()}};
    meta["snapshots"] = snaps;
    write_json(dir / "meta.json", meta);
    throw;
  }
}

int cmd_study(const RunConfig& c, std::ostream& out) {
  const Experiment e = c.experiment_spec();
  const std::filesystem::path dir = c.out;
  std::filesystem::create_directories(dir);
  json meta = base_meta("study", c, e);
  write_json(dir / "meta.json", meta);

  StudyOptions opt;
  opt.steppers = c.steppers;
  opt.settings = c.settings;
  opt.reference.method = c.reference_method;
  opt.reference.dt = c.reference_dt.value_or(0.0);
  if (c.cache_dir) opt.reference.cache_dir = std::filesystem::path(*c.cache_dir);
  opt.timing_repeats = c.timing_repeats;
  opt.threads = cap_threads(c.threads);

  try {
    const StudyResult r = comparison_study(e, opt);
    write_study_outputs(dir, r, make_mesh(e));
    json rows = json::array();
    for (const auto& row : r.rows) {
      json reasons = json::object();
      for (const auto& [reason, n] : row.stop_reasons) reasons[to_string(reason)] = n;
      rows.push_back({{"stepper", to_string(row.stepper)},
                      {"dt", row.dt},
                      {"trainings", row.trainings},
                      {"stop_reasons", reasons}});
    }
    json orders = json::object();
    for (const auto& [s, fit] : r.orders) {
      orders[to_string(s)] = {{"slope", fit.slope}, {"pairwise", fit.pairwise}};
    }
    meta["status"] = "completed";
    meta["reference"] = {{"method", to_string(c.reference_method)},
                         {"dt", c.reference_dt.value_or(e.dts.back() / 10.0)},
                         {"cache_hit", r.reference_cache_hit}};
    meta["threads"] = opt.threads;
    meta["rows"] = rows;
    meta["orders"] = orders;
    write_json(dir / "meta.json", meta);
    for (const auto& [s, fit] : r.orders) {
      out << to_string(s) << ": fitted order " << fit.slope << '\n';
    }
    out << r.rows.size() << " rows -> " << (dir / "study.csv").string() << '\n';
    return 0;
  } catch (const Error& ex) {
    meta["status"] = "failed";
    meta["error"] = {{"code", errc_name(ex.code())}, {"message", ex.what()}};
    write_json(dir / "meta.json", meta);
    throw;
  }
}

int cmd_validate(const RunConfig& c, std::ostream& out) {
  const Experiment e = c.experiment_spec();
  const Mesh mesh = make_mesh(e);
  const ModelSpec& m = e.model;
  int failures = 0;
  auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
    out << (ok ? "ok   " : "FAIL ") << name;
    if (!detail.empty()) out << "  (" << detail << ")";
    out << '\n';
    if (!ok) ++failures;
  };
  auto fmt = [](double v) {
    std::ostringstream s;
    s << v;
    return s.str();
  };

  const double area = e.domain.area();
  check("mesh measure sums to domain area",
        std::abs(mesh.total_measure() - area) <= 1e-12 * area, fmt(mesh.total_measure()));

  bool symmetric = true;
  for (Index x = -20; x <= 20; ++x) {
    const double v = 0.25 * double(x);
    const double lhs = limiter_s(v, m.diffusion, m.chi, m.eps_s()) -
                       limiter_s(-v, m.diffusion, m.chi, m.eps_s());
    if (std::abs(lhs - v) > 1e-14 * (1 + std::abs(v))) symmetric = false;
    if (m.diffusion + m.chi * limiter_s(v, m.diffusion, m.chi, m.eps_s()) < m.eps_s()) {
      symmetric = false;
    }
  }
  check("limiter identities at model parameters", symmetric);

  auto [u0, c0] = initial_data(e, mesh);
  check("initial density finite and nonnegative", all_finite(u0) && u0.minCoeff() >= 0,
        "min " + fmt(u0.minCoeff()));

  const double dt = c.run_dt();
  StepContext ctx{mesh, m, dt, c.settings.solver, c.settings.clamp_prediction_nonneg};
  const bool elliptic = m.variant == Variant::embryonic;
  const SparseSystem cs = assemble_c_system(mesh, m, u0, elliptic ? nullptr : &c0,
                                            elliptic ? std::nullopt : std::optional<double>(dt));
  const Field c1 = solve(cs, c.settings.solver);
  check("concentration matrix is an M-matrix", audit_matrix(cs.matrix).is_m_matrix());
  const SparseSystem us = assemble_u_system(mesh, m, c1, u0, &u0, dt);
  const MatrixAudit audit = audit_matrix(us.matrix);
  check("density matrix is an M-matrix", audit.is_m_matrix(),
        std::string("column dominant ") + (audit.column_dominant ? "yes" : "no"));

  const Solution s = semi_implicit_step(ctx, u0, c0);
  check("one step keeps density nonnegative and finite",
        all_finite(s.u) && s.u.minCoeff() >= 0, "min " + fmt(s.u.minCoeff()));
  if (m.variant != Variant::growth) {
    const double m0 = mesh.measures().dot(u0);
    const double m1 = mesh.measures().dot(s.u);
    check("one step conserves mass", std::abs(m1 - m0) <= 1e-10 * std::abs(m0),
          "relative change " + fmt(m0 != 0 ? (m1 - m0) / m0 : m1));
  }
  const TimeGrid grid = make_time_grid(dt, e.final_time);
  check("time grid", grid.steps >= 1,
        std::to_string(grid.steps) + " steps" + (grid.short_final_step ? ", short final step" : ""));
  out << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
      << '\n';
  return failures == 0 ? 0 : 1;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Keller-Segel finite-volume solver with network-predicted linearization"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Flags run_f, study_f, val_f;
  CLI::App* run = app.add_subcommand("run", "one simulation");
  add_common(run, run_f);
  run_f.o_stepper = run->add_option("--stepper", run_f.stepper, "semi | estli | sstli");
  run_f.o_dt = run->add_option("--dt", run_f.dt, "time step");
  run_f.o_snapshots = run->add_option("--snapshots", run_f.snapshots,
                                      "equispaced intermediate field snapshots");

  CLI::App* study = app.add_subcommand("study", "comparison and convergence tables");
  add_common(study, study_f);
  study_f.o_dts = study->add_option("--dts", study_f.dts, "comma-separated, strictly decreasing");
  study_f.o_steppers = study->add_option("--steppers", study_f.steppers, "comma-separated");
  study_f.o_ref_method = study->add_option("--ref-method", study_f.ref_method, "reference stepper");
  study_f.o_dt_ref = study->add_option("--dt-ref", study_f.dt_ref, "reference time step");
  study_f.o_cache_dir = study->add_option("--cache-dir", study_f.cache_dir, "reference cache");
  study_f.o_threads = study->add_option("--threads", study_f.threads, "worker threads");
  study_f.o_repeats = study->add_option("--repeats", study_f.repeats, "timing repeats per row");

  CLI::App* val = app.add_subcommand("validate", "invariant checks on a config, no full run");
  add_common(val, val_f);
  val_f.o_stepper = val->add_option("--stepper", val_f.stepper, "semi | estli | sstli");
  val_f.o_dt = val->add_option("--dt", val_f.dt, "time step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return cmd_run(build_config(run_f), out);
    if (study->parsed()) return cmd_study(build_config(study_f), out);
    return cmd_validate(build_config(val_f), out);
  } catch (const RunAborted& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == Errc::config ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace kschem
