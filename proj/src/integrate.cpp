#include "kschem/integrate.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

namespace kschem {

std::string to_string(StepperKind k) {
  switch (k) {
    case StepperKind::semi_implicit: return "semi";
    case StepperKind::estli: return "estli";
    case StepperKind::sstli: return "sstli";
  }
  return "?";
}

StepperKind stepper_from_string(const std::string& s) {
  if (s == "semi" || s == "semi_implicit" || s == "semi-implicit") return StepperKind::semi_implicit;
  if (s == "estli") return StepperKind::estli;
  if (s == "sstli") return StepperKind::sstli;
  throw Error(Errc::config, "unknown stepper '" + s + "' (expected semi, estli or sstli)");
}

std::string to_string(Branch b) {
  switch (b) {
    case Branch::boot: return "boot";
    case Branch::s5: return "s5";
    case Branch::s6: return "s6";
    case Branch::s8: return "s8";
    case Branch::s9: return "s9";
    case Branch::semi: return "semi";
  }
  return "?";
}

std::string to_string(SstAction a) {
  switch (a) {
    case SstAction::bootstrap: return "bootstrap";
    case SstAction::at_step3: return "at_step3";
    case SstAction::at_step4: return "at_step4";
    case SstAction::at_step7: return "at_step7";
  }
  return "?";
}

Field maybe_clamp(Field u, bool clamp) {
  if (clamp) u = u.cwiseMax(0.0);
  return u;
}

Solution linearized_step(const StepContext& ctx, const Field& u_n, const Field& c_n,
                         const Field& u_tilde) {
  const bool elliptic = ctx.model.variant == Variant::embryonic;
  const SparseSystem c_sys = elliptic
                                 ? assemble_c_system(ctx.mesh, ctx.model, u_tilde, nullptr, {})
                                 : assemble_c_system(ctx.mesh, ctx.model, u_tilde, &c_n, ctx.dt);
  Solution next;
  next.c = solve(c_sys, ctx.solver);
  const SparseSystem u_sys =
      assemble_u_system(ctx.mesh, ctx.model, next.c, u_n, &u_tilde, ctx.dt);
  next.u = solve(u_sys, ctx.solver);
  return next;
}

Solution semi_implicit_step(const StepContext& ctx, const Field& u_n, const Field& c_n) {
  return linearized_step(ctx, u_n, c_n, u_n);
}

History History::start(Field u0, Field c0) {
  History h;
  h.u_n = std::move(u0);
  h.c_n = std::move(c0);
  return h;
}

void History::push(Solution s) {
  u_nm2 = std::move(u_nm1);
  u_nm1 = std::move(u_n);
  u_n = std::move(s.u);
  c_n = std::move(s.c);
  ++level;
}

namespace {

double l2_diff(const Mesh& mesh, const Field& a, const Field& b) {
  return discrete_l2_norm(mesh, a - b);
}

StepRecord bootstrap_semi(const StepContext& ctx, History& hist) {
  Solution s = semi_implicit_step(ctx, hist.u_n, hist.c_n);
  StepRecord rec;
  rec.branch = Branch::boot;
  rec.pred_err_norm = l2_diff(ctx.mesh, hist.u_n, s.u);
  hist.push(std::move(s));
  return rec;
}

TrainResultT<double> train_on_history(const History& h, const NetworkState& start,
                                      const TrainConfig& cfg) {
  return train_network<double>(h.u_nm2, h.u_nm1, h.u_n, start, cfg);
}

}  // namespace

StepRecord estli_step(const StepContext& ctx, EstliState& state, const TrainConfig& cfg,
                      const Uniform01& uniform) {
  History& h = state.hist;
  if (h.level < 2) return bootstrap_semi(ctx, h);

  const NetworkState start = state.weights ? *state.weights : random_network<double>(uniform);
  auto trained = train_on_history(h, start, cfg);
  ++state.trainings;

  const Field u_tilde =
      maybe_clamp(predict(trained.state, h.u_nm1, h.u_n), ctx.clamp_prediction_nonneg);
  Solution s = linearized_step(ctx, h.u_n, h.c_n, u_tilde);

  StepRecord rec;
  rec.branch = h.level == 2 ? Branch::boot : Branch::s5;
  rec.trained = true;
  rec.report = trained.report;
  rec.pred_err_norm = l2_diff(ctx.mesh, u_tilde, s.u);
  state.weights = trained.state;
  h.push(std::move(s));
  return rec;
}

StepRecord sst_advance(const StepContext& ctx, SstState& st, const TrainConfig& cfg, double beta,
                       const Uniform01& uniform, const NormHook& hook) {
  if (!(beta > 1)) throw Error(Errc::invalid_argument, "beta must be > 1");
  History& h = st.hist;
  const Mesh& mesh = ctx.mesh;
  StepRecord rec;

  auto predict_with = [&](const NetworkState& w) {
    return maybe_clamp(predict(w, h.u_nm1, h.u_n), ctx.clamp_prediction_nonneg);
  };
  auto retrain = [&](const NetworkState& start) {
    auto trained = train_on_history(h, start, cfg);
    ++st.trainings;
    rec.trained = true;
    rec.report = trained.report;
    return trained.state;
  };
  auto norms = [&](SstAction at) {
    SstNorms nm;
    nm.pred_err = l2_diff(mesh, st.u_tilde, h.u_n);
    nm.bar_err = st.u_bar.size() == h.u_n.size() ? l2_diff(mesh, st.u_bar, h.u_n)
                                                 : std::numeric_limits<double>::quiet_NaN();
    nm.change = l2_diff(mesh, h.u_nm1, h.u_n);
    if (hook) hook(at, nm);
    return nm;
  };
  auto meets_performance = [&](const SstNorms& nm) { return nm.pred_err <= nm.change / beta; };
  // Record a solved level and shift the weight history: w^n becomes w^{n-1}.
  auto commit = [&](Solution s, const Field& u_tilde_used, Field u_tilde_next, Field u_bar_next,
                    SstAction next, Branch branch) {
    rec.pred_err_norm = l2_diff(mesh, u_tilde_used, s.u);
    rec.branch = branch;
    st.w_prev2 = std::move(st.w_prev);
    st.w_prev = std::move(st.w_curr);
    st.w_curr.reset();
    st.u_tilde = std::move(u_tilde_next);
    st.u_bar = std::move(u_bar_next);
    st.next_action = next;
    h.push(std::move(s));
  };
  auto advance = [&](const Field& u_tilde_used, Field u_tilde_next, Field u_bar_next,
                     SstAction next, Branch branch) {
    commit(linearized_step(ctx, h.u_n, h.c_n, u_tilde_used), u_tilde_used, std::move(u_tilde_next),
           std::move(u_bar_next), next, branch);
  };
  auto step9 = [&] {
    Field u_tilde = predict_with(*st.w_curr);
    advance(u_tilde, u_tilde, Field{}, SstAction::at_step4, Branch::s9);
  };
  auto step4 = [&](const SstNorms& nm) {
    if (meets_performance(nm)) {
      st.w_curr = st.w_prev;
      step9();
      return;
    }
    st.w_curr = retrain(*st.w_prev);
    // Step 5: u~^{n+1} from w^n, u-bar^{n+1} from w^{n-1}.
    Field u_tilde = predict_with(*st.w_curr);
    Field u_bar = predict_with(*st.w_prev);
    advance(u_tilde, u_tilde, std::move(u_bar), SstAction::at_step3, Branch::s5);
  };

  switch (st.next_action) {
    case SstAction::bootstrap: {
      if (h.level < 2) return bootstrap_semi(ctx, h);
      if (h.level != 2) throw Error(Errc::invalid_state, "bootstrap action past level 2");
      // Step 2: random initial weights, train, predict, solve.
      st.w_curr = retrain(random_network<double>(uniform));
      Field u_tilde = predict_with(*st.w_curr);
      advance(u_tilde, u_tilde, Field{}, SstAction::at_step4, Branch::boot);
      return rec;
    }
    case SstAction::at_step3: {
      if (!st.w_prev || !st.w_prev2 || st.u_bar.size() != h.u_n.size() ||
          st.u_tilde.size() != h.u_n.size()) {
        throw Error(Errc::invalid_state, "step 3 needs w^{n-1}, w^{n-2}, u~^n and u-bar^n");
      }
      const SstNorms nm = norms(SstAction::at_step3);
      if (nm.pred_err >= nm.bar_err) {
        // Step 3 -> 6: fall back to w^{n-2}, no training.
        st.w_curr = st.w_prev2;
        Field u_tilde = predict_with(*st.w_curr);
        advance(u_tilde, u_tilde, Field{}, SstAction::at_step7, Branch::s6);
        return rec;
      }
      step4(nm);
      return rec;
    }
    case SstAction::at_step4: {
      if (!st.w_prev || st.u_tilde.size() != h.u_n.size()) {
        throw Error(Errc::invalid_state, "step 4 needs w^{n-1} and u~^n");
      }
      step4(norms(SstAction::at_step4));
      return rec;
    }
    case SstAction::at_step7: {
      if (!st.w_prev || st.u_tilde.size() != h.u_n.size()) {
        throw Error(Errc::invalid_state, "step 7 needs w^{n-1} and u~^n");
      }
      st.w_curr = st.w_prev;
      const SstNorms nm = norms(SstAction::at_step7);
      if (meets_performance(nm)) {
        step9();
        return rec;
      }
      // Step 8: solve with the old weights and keep that prediction as u-bar,
      // then retrain on the same history and recompute u~^{n+1} for step 3.
      const Field u_tilde_old = predict_with(*st.w_curr);
      Solution s = linearized_step(ctx, h.u_n, h.c_n, u_tilde_old);
      st.w_curr = retrain(*st.w_prev);
      Field u_tilde_new = predict_with(*st.w_curr);
      commit(std::move(s), u_tilde_old, std::move(u_tilde_new), u_tilde_old, SstAction::at_step3,
             Branch::s8);
      return rec;
    }
  }
  throw Error(Errc::invalid_state, "unknown SST action");
}

TimeGrid make_time_grid(double dt, double final_time) {
  if (!(dt > 0)) throw Error(Errc::nonpositive_dt, "dt must be > 0");
  if (!(final_time > 0)) throw Error(Errc::invalid_argument, "final time must be > 0");
  TimeGrid g;
  g.dt = dt;
  const double ratio = final_time / dt;
  const double nearest = std::round(ratio);
  if (nearest >= 1 && std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)) {
    g.steps = static_cast<long>(nearest);
    g.last_dt = dt;
    return g;
  }
  const long full = static_cast<long>(std::floor(ratio));
  g.steps = full + 1;
  g.last_dt = final_time - static_cast<double>(full) * dt;
  g.short_final_step = true;
  return g;
}

void write_diagnostics_header(std::ostream& os) {
  os << "step,t,min_u,max_u,mass,trainings_cum,branch,pred_err_norm,wall_ms\n";
}

void write_diagnostics_row(std::ostream& os, const StepDiagnostics& d) {
  const auto p = os.precision(17);
  os << d.step << ',' << d.t << ',' << d.min_u << ',' << d.max_u << ',' << d.mass << ','
     << d.trainings_cum << ',' << to_string(d.branch) << ',' << d.pred_err_norm << ',';
  os.precision(6);
  os << d.wall_ms << '\n';
  os.precision(p);
}

RunSummary run(const Mesh& mesh, const ModelSpec& model, const RunOptions& options,
               const Field& u0, const Field& c0, const Uniform01& uniform,
               const RunHooks& hooks) {
  using Clock = std::chrono::steady_clock;
  model.validate();
  options.train.validate();
  options.solver.validate();
  require_field(mesh, u0, "u0");
  if (model.variant != Variant::embryonic) require_field(mesh, c0, "c0");
  if (options.stepper == StepperKind::sstli && !(options.beta > 1)) {
    throw Error(Errc::config, "beta must be > 1");
  }

  RunSummary summary;
  summary.grid = make_time_grid(options.dt, options.final_time);
  const TimeGrid& grid = summary.grid;

  History start = History::start(u0, model.variant == Variant::embryonic ? Field{} : c0);
  EstliState estli;
  estli.hist = start;
  SstState sst;
  sst.hist = start;
  History semi = start;

  auto current = [&]() -> const History& {
    switch (options.stepper) {
      case StepperKind::estli: return estli.hist;
      case StepperKind::sstli: return sst.hist;
      case StepperKind::semi_implicit: break;
    }
    return semi;
  };
  auto snapshot_due = [&](long step) {
    if (step == grid.steps) return true;
    for (long s : hooks.snapshot_steps) {
      if (s == step) return true;
    }
    return false;
  };

  if (hooks.on_snapshot) hooks.on_snapshot(0, 0.0, u0, start.c_n);

  const auto t_run = Clock::now();
  double t = 0;
  for (long step = 1; step <= grid.steps; ++step) {
    const double dt = step == grid.steps ? grid.last_dt : grid.dt;
    StepContext ctx{mesh, model, dt, options.solver, options.clamp_prediction_nonneg};
    const auto t_step = Clock::now();
    StepRecord rec;
    try {
      switch (options.stepper) {
        case StepperKind::semi_implicit: {
          Solution s = semi_implicit_step(ctx, semi.u_n, semi.c_n);
          rec.branch = Branch::semi;
          rec.pred_err_norm = discrete_l2_norm(mesh, semi.u_n - s.u);
          semi.push(std::move(s));
          break;
        }
        case StepperKind::estli:
          rec = estli_step(ctx, estli, options.train, uniform);
          break;
        case StepperKind::sstli:
          rec = sst_advance(ctx, sst, options.train, options.beta, uniform);
          break;
      }
    } catch (const Error& e) {
      throw RunAborted(e.code(), step, e.what());
    }
    const History& h = current();
    if (!h.u_n.allFinite() || (h.c_n.size() > 0 && !h.c_n.allFinite())) {
      throw RunAborted(Errc::non_finite, step, "solution contains NaN or Inf");
    }
    t = step == grid.steps ? options.final_time : static_cast<double>(step) * grid.dt;

    StepDiagnostics d;
    d.step = step;
    d.t = t;
    d.min_u = h.u_n.minCoeff();
    d.max_u = h.u_n.maxCoeff();
    d.mass = mesh.measures().dot(h.u_n);
    d.branch = rec.branch;
    d.pred_err_norm = rec.pred_err_norm;
    d.trainings_cum = options.stepper == StepperKind::estli   ? estli.trainings
                      : options.stepper == StepperKind::sstli ? sst.trainings
                                                               : 0;
    d.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t_step).count();
    if (rec.trained) summary.training_log.push_back({step, rec.report});
    summary.diagnostics.push_back(d);
    if (hooks.on_step) hooks.on_step(d);
    if (hooks.on_snapshot && snapshot_due(step)) hooks.on_snapshot(step, t, h.u_n, h.c_n);
  }
  summary.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t_run).count();

  const History& h = current();
  summary.u = h.u_n;
  summary.c = h.c_n;
  summary.trainings = summary.diagnostics.empty() ? 0 : summary.diagnostics.back().trainings_cum;
  return summary;
}

}  // namespace kschem
