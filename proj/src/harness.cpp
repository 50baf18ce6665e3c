#include "kschem/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace kschem {

void Experiment::validate() const {
  model.validate();
  if (!(domain.xmax > domain.xmin) || !(domain.ymax > domain.ymin)) {
    throw Error(Errc::config, "experiment domain is empty");
  }
  if (nx < 1 || ny < 1) throw Error(Errc::config, "grid counts must be >= 1");
  if (!(final_time > 0)) throw Error(Errc::config, "final time T must be > 0");
  for (std::size_t i = 0; i < dts.size(); ++i) {
    if (!(dts[i] > 0)) throw Error(Errc::config, "every dt must be > 0");
    if (i > 0 && !(dts[i] < dts[i - 1])) {
      throw Error(Errc::config, "dt list must be strictly decreasing");
    }
  }
  if (model.variant != Variant::embryonic && !(initial_concentration >= 0)) {
    throw Error(Errc::config, "initial concentration must be >= 0");
  }
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"embryonic", "growth_quadratic", "volume_filling",
                                              "growth_cubic"};
  return names;
}

Experiment make_experiment(const std::string& name, bool full) {
  Experiment e;
  e.name = name;
  if (name == "embryonic") {
    e.domain = {-3.5, 3.5, -35.0, 35.0};
    // 1250 cells, 25 across the strip and 50 along it; full size is 35 x 350.
    e.nx = full ? 35 : 25;
    e.ny = full ? 350 : 50;
    e.final_time = full ? 150.0 : 20.0;
    e.dts = full ? std::vector<double>{5, 1, 0.5, 0.1, 0.05, 0.01}
                 : std::vector<double>{0.4, 0.2, 0.1, 0.04};
    e.model = embryonic_model(0.25, 2.0);
    e.region = Region::rect(-3.5, 3.5, -1.0, 1.0);
    e.base_density = 1.0;
  } else if (name == "growth_quadratic" || name == "growth_cubic") {
    const bool cubic = name == "growth_cubic";
    e.domain = {-8.0, 8.0, -8.0, 8.0};
    e.nx = e.ny = full ? 100 : 50;
    if (cubic) {
      e.final_time = full ? 150.0 : 10.0;
      e.dts = {0.1};
      e.model = growth_model(GrowthTerm::cubic, 0.0625, 6.0, 32.0);
    } else {
      e.final_time = full ? 30.0 : 10.0;
      e.dts = full ? std::vector<double>{1, 0.5, 0.1, 0.05, 0.01, 0.005}
                   : std::vector<double>{0.1, 0.05, 0.02, 0.01};
      e.model = growth_model(GrowthTerm::quadratic, 0.0625, 6.0, 16.0);
    }
    e.region = Region::disk(0, 0, 0.7);
    e.base_density = 1.0;
    e.initial_concentration = 1.0 / 32.0;
  } else if (name == "volume_filling") {
    e.domain = {-8.0, 8.0, -8.0, 8.0};
    e.nx = e.ny = full ? 100 : 50;
    e.final_time = 1.0;
    e.dts = full ? std::vector<double>{5e-2, 1e-2, 5e-3, 1e-3, 5e-4, 1e-4}
                 : std::vector<double>{0.05, 0.02, 0.01, 0.005};
    e.model = volume_filling_model(0.1, 10.0, 1.0);
    e.region = Region::disk(0, 0, 0.7);
    e.base_density = 0.0;
    e.initial_concentration = 1.0 / 32.0;
  } else {
    throw Error(Errc::config, "unknown experiment '" + name +
                                  "' (expected embryonic, growth_quadratic, volume_filling or "
                                  "growth_cubic)");
  }
  return e;
}

Field perturbation_alpha(const Mesh& mesh, const Region& region, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return perturbation_alpha(mesh, region, gen);
}

Mesh make_mesh(const Experiment& e) { return build_rect_mesh(e.domain, e.nx, e.ny); }

std::pair<Field, Field> initial_data(const Experiment& e, const Mesh& mesh) {
  Field u0 = Field::Constant(mesh.num_cells(), e.base_density) +
             perturbation_alpha(mesh, e.region, e.seed);
  Field c0;
  if (e.model.variant != Variant::embryonic) {
    c0 = Field::Constant(mesh.num_cells(), e.initial_concentration);
  }
  return {std::move(u0), std::move(c0)};
}

double relative_error(const Mesh& mesh, const Field& u, const Field& u_ref, ErrorNorm norm) {
  require_field(mesh, u, "u");
  require_field(mesh, u_ref, "u_ref");
  double num = 0, den = 0;
  if (norm == ErrorNorm::l2) {
    num = discrete_l2_norm(mesh, u - u_ref);
    den = discrete_l2_norm(mesh, u_ref);
  } else {
    num = (u - u_ref).cwiseAbs().maxCoeff();
    den = u_ref.cwiseAbs().maxCoeff();
  }
  if (!(den > 0)) throw Error(Errc::zero_reference, "reference field has zero norm");
  return num / den;
}

OrderFit convergence_order(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw Error(Errc::precondition, "need at least two (dt, error) points");
  for (const auto& [dt, e] : points) {
    if (!(dt > 0) || !(e > 0) || !std::isfinite(e)) {
      throw Error(Errc::nonpositive_error, "dt and errors must be positive and finite");
    }
  }
  const std::size_t n = points.size();
  double mx = 0, my = 0;
  for (const auto& [dt, e] : points) {
    mx += std::log(dt);
    my += std::log(e);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (const auto& [dt, e] : points) {
    sxy += (std::log(dt) - mx) * (std::log(e) - my);
    sxx += (std::log(dt) - mx) * (std::log(dt) - mx);
  }
  if (!(sxx > 0)) throw Error(Errc::precondition, "dt values must not all coincide");
  OrderFit fit;
  fit.slope = sxy / sxx;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    fit.pairwise.push_back(std::log(points[i].second / points[i + 1].second) /
                           std::log(points[i].first / points[i + 1].first));
  }
  return fit;
}

RunSummary run_experiment(const Experiment& e, const Mesh& mesh, StepperKind stepper, double dt,
                          const SolverSettings& settings, std::uint64_t run_index,
                          const RunHooks& hooks) {
  auto [u0, c0] = initial_data(e, mesh);
  RunOptions opt;
  opt.stepper = stepper;
  opt.dt = dt;
  opt.final_time = e.final_time;
  opt.train = settings.train;
  opt.solver = settings.solver;
  opt.beta = settings.beta;
  opt.clamp_prediction_nonneg = settings.clamp_prediction_nonneg;
  Rng rng(e.seed + run_index);
  return run(mesh, e.model, opt, u0, c0, rng.source(), hooks);
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void add(const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  }
  void add(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    add(std::string(buf));
  }
  void add(long long v) { add(std::to_string(v)); }
};

constexpr char kRefMagic[8] = {'K', 'S', 'R', 'E', 'F', '0', '0', '1'};

}  // namespace

std::uint64_t reference_hash(const Experiment& e, const ReferenceSpec& ref,
                             const SolverSettings& s) {
  Fnv1a f;
  f.add("kschem-reference-v1");
  f.add(e.name);
  f.add(e.domain.xmin), f.add(e.domain.xmax), f.add(e.domain.ymin), f.add(e.domain.ymax);
  f.add(static_cast<long long>(e.nx)), f.add(static_cast<long long>(e.ny));
  f.add(e.final_time);
  f.add(to_string(e.model.variant)), f.add(to_string(e.model.growth));
  f.add(e.model.diffusion), f.add(e.model.chi), f.add(e.model.crowding_threshold);
  f.add(e.model.decay), f.add(e.model.eps_s());
  f.add(static_cast<long long>(e.region.kind)), f.add(e.region.box.xmin), f.add(e.region.box.xmax);
  f.add(e.region.box.ymin), f.add(e.region.box.ymax), f.add(e.region.cx), f.add(e.region.cy);
  f.add(e.region.radius), f.add(e.base_density), f.add(e.initial_concentration);
  f.add(static_cast<long long>(e.seed));
  f.add(to_string(ref.method)), f.add(ref.dt);
  f.add(s.train.eps_train), f.add(s.train.grad_min), f.add(static_cast<long long>(s.train.max_iter));
  f.add(s.train.mu0), f.add(s.train.mu_up), f.add(s.train.mu_down), f.add(s.train.mu_max);
  f.add(static_cast<long long>(s.train.scale_gradient));
  f.add(static_cast<long long>(s.solver.method)), f.add(s.solver.tol);
  f.add(static_cast<long long>(s.solver.max_iter));
  f.add(s.beta), f.add(static_cast<long long>(s.clamp_prediction_nonneg));
  f.add(std::string(kRngId));
  return f.h;
}

Field reference_solution(const Experiment& e, const Mesh& mesh, const ReferenceSpec& ref,
                         double smallest_study_dt, const SolverSettings& settings,
                         bool* cache_hit) {
  if (!(ref.dt > 0) || ref.dt > smallest_study_dt / 10.0 * (1 + 1e-12)) {
    throw Error(Errc::precondition, "reference dt must be <= smallest study dt / 10");
  }
  if (cache_hit) *cache_hit = false;
  std::filesystem::path file;
  if (ref.cache_dir) {
    char name[64];
    std::snprintf(name, sizeof name, "ref_%016llx.bin",
                  static_cast<unsigned long long>(reference_hash(e, ref, settings)));
    file = *ref.cache_dir / name;
    std::ifstream in(file, std::ios::binary);
    if (in) {
      char magic[8];
      std::uint64_t n = 0;
      in.read(magic, 8);
      in.read(reinterpret_cast<char*>(&n), sizeof n);
      if (in && std::equal(magic, magic + 8, kRefMagic) &&
          n == static_cast<std::uint64_t>(mesh.num_cells())) {
        Field u(static_cast<Index>(n));
        in.read(reinterpret_cast<char*>(u.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (in) {
          if (cache_hit) *cache_hit = true;
          return u;
        }
      }
    }
  }

  Field u = run_experiment(e, mesh, ref.method, ref.dt, settings, 0).u;

  if (ref.cache_dir) {
    std::filesystem::create_directories(*ref.cache_dir);
    const auto tmp = file.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      const std::uint64_t n = static_cast<std::uint64_t>(u.size());
      out.write(kRefMagic, 8);
      out.write(reinterpret_cast<const char*>(&n), sizeof n);
      out.write(reinterpret_cast<const char*>(u.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
      if (!out) throw Error(Errc::io, "cannot write reference cache " + tmp);
    }
    std::filesystem::rename(tmp, file);
  }
  return u;
}

const StudyRow& StudyResult::row(StepperKind s, double dt) const {
  for (const auto& r : rows) {
    if (r.stepper == s && r.dt == dt) return r;
  }
  throw Error(Errc::invalid_argument, "no study row for " + to_string(s) + " at dt " + format_dt(dt));
}

StudyResult comparison_study(const Experiment& e, const StudyOptions& options) {
  e.validate();
  if (e.dts.empty()) throw Error(Errc::config, "study needs at least one dt");
  if (options.steppers.empty()) throw Error(Errc::config, "study needs at least one stepper");
  const Mesh mesh = make_mesh(e);

  StudyResult result;
  result.experiment = e;
  ReferenceSpec ref = options.reference;
  if (!(ref.dt > 0)) ref.dt = e.dts.back() / 10.0;
  result.reference = reference_solution(e, mesh, ref, e.dts.back(), options.settings,
                                        &result.reference_cache_hit);

  struct Job {
    StepperKind stepper;
    double dt;
  };
  std::vector<Job> jobs;
  for (StepperKind s : options.steppers) {
    for (double dt : e.dts) jobs.push_back({s, dt});
  }
  result.rows.resize(jobs.size());

  const int repeats = std::max(1, options.timing_repeats);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        StudyRow& row = result.rows[i];
        row.stepper = jobs[i].stepper;
        row.dt = jobs[i].dt;
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < repeats; ++r) {
          RunSummary s = run_experiment(e, mesh, row.stepper, row.dt, options.settings, i + 1);
          best = std::min(best, s.wall_ms);
          if (r == 0) {
            row.steps = s.grid.steps;
            row.trainings = s.trainings;
            for (const auto& ev : s.training_log) ++row.stop_reasons[ev.report.reason];
            row.u_final = std::move(s.u);
          }
        }
        row.wall_ms = best;
        row.l2_error = relative_error(mesh, row.u_final, result.reference, ErrorNorm::l2);
        row.linf_error = relative_error(mesh, row.u_final, result.reference, ErrorNorm::linf);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const int threads = std::clamp(options.threads, 1, static_cast<int>(jobs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& row : result.rows) {
    row.gamma_pct = std::numeric_limits<double>::quiet_NaN();
    for (const auto& base : result.rows) {
      if (base.stepper == StepperKind::semi_implicit && base.dt == row.dt) {
        row.gamma_pct = (row.wall_ms - base.wall_ms) / base.wall_ms * 100.0;
      }
    }
  }
  if (e.dts.size() >= 2) {
    for (StepperKind s : options.steppers) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& row : result.rows) {
        if (row.stepper == s) pts.emplace_back(row.dt, row.l2_error);
      }
      result.orders[s] = convergence_order(pts);
    }
  }
  return result;
}

std::string format_dt(double dt) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", dt);
  return buf;
}

void write_study_csv(std::ostream& os, const std::vector<StudyRow>& rows) {
  os << "stepper,dt,steps,l2_error,linf_error,trainings,wall_ms,gamma_pct\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%ld,%.17g,%.17g,%ld,%.3f,%.3f\n",
                  to_string(r.stepper).c_str(), r.dt, r.steps, r.l2_error, r.linf_error,
                  r.trainings, r.wall_ms, r.gamma_pct);
    os << buf;
  }
}

void write_orders_csv(std::ostream& os, const StudyResult& result) {
  os << "stepper,kind,dt_from,dt_to,order\n";
  char buf[256];
  for (const auto& [stepper, fit] : result.orders) {
    std::vector<double> dts;
    for (const auto& r : result.rows) {
      if (r.stepper == stepper) dts.push_back(r.dt);
    }
    std::snprintf(buf, sizeof buf, "%s,fit,%.17g,%.17g,%.17g\n", to_string(stepper).c_str(),
                  dts.front(), dts.back(), fit.slope);
    os << buf;
    for (std::size_t i = 0; i < fit.pairwise.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s,pair,%.17g,%.17g,%.17g\n", to_string(stepper).c_str(),
                    dts[i], dts[i + 1], fit.pairwise[i]);
      os << buf;
    }
  }
}

void write_study_outputs(const std::filesystem::path& dir, const StudyResult& result,
                         const Mesh& mesh) {
  std::filesystem::create_directories(dir / "fields");
  {
    std::ofstream os(dir / "study.csv");
    write_study_csv(os, result.rows);
    if (!os) throw Error(Errc::io, "cannot write study.csv");
  }
  {
    std::ofstream os(dir / "orders.csv");
    write_orders_csv(os, result);
    if (!os) throw Error(Errc::io, "cannot write orders.csv");
  }
  for (const auto& r : result.rows) {
    std::ofstream os(dir / "fields" / (to_string(r.stepper) + "_" + format_dt(r.dt) + ".csv"));
    write_field_csv(os, mesh, r.u_final);
  }
  std::ofstream os(dir / "fields" / "reference.csv");
  write_field_csv(os, mesh, result.reference);
}

}  // namespace kschem
