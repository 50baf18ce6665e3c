#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "kschem/harness.hpp"

using namespace kschem;
namespace fs = std::filesystem;

namespace {

/// Generator whose draws all map to exactly 0.5.
struct HalfGen {
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type(0); }
  result_type operator()() { return result_type(1) << 63; }
};

Experiment small_embryonic() {
  Experiment e = make_experiment("embryonic");
  e.nx = 6;
  e.ny = 14;
  e.final_time = 2;
  e.dts = {0.2, 0.1, 0.05};
  return e;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kschem_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("perturbation with forced draws") {
  const Mesh m = build_rect_mesh<double>({-3.5, 3.5, -35, 35}, 7, 70);
  const Region r = Region::rect(-3.5, 3.5, -1, 1);
  HalfGen g;
  const Field a = perturbation_alpha(m, r, g);
  for (Index k = 0; k < m.num_cells(); ++k) {
    const bool inside = std::abs(m.centers()(k, 1)) < 1;
    CHECK(a[k] == (inside ? 0.5 : 0.0));
  }
}

TEST_CASE("perturbation statistics") {
  const Mesh m = build_rect_mesh<double>({0, 1, 0, 1}, 60, 60);
  const Field a = perturbation_alpha(m, Region::rect(-1, 2, -1, 2), 12345);
  CHECK(a.mean() == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::abs(a.mean() - 0.5) <= 0.01);
  const double sd = std::sqrt((a.array() - a.mean()).square().sum() / double(a.size() - 1));
  CHECK(sd == doctest::Approx(std::sqrt(1.0 / 120)).epsilon(0.05));
  CHECK(a.minCoeff() >= 0);
  CHECK(a.maxCoeff() < 1);
}

TEST_CASE("perturbation determinism") {
  const Mesh m = build_rect_mesh<double>({-8, 8, -8, 8}, 30, 30);
  const Region r = Region::disk(0, 0, 3);
  CHECK(perturbation_alpha(m, r, 5) == perturbation_alpha(m, r, 5));
  CHECK(perturbation_alpha(m, r, 5) != perturbation_alpha(m, r, 6));
}

TEST_CASE("initial data per experiment") {
  for (const auto& name : experiment_names()) {
    const Experiment e = make_experiment(name);
    CHECK_NOTHROW(e.validate());
    const Mesh m = make_mesh(e);
    const auto [u0, c0] = initial_data(e, m);
    CHECK(u0.minCoeff() >= e.base_density);
    CHECK(u0.maxCoeff() > e.base_density);
    CHECK(u0.maxCoeff() < e.base_density + 1);
    if (e.model.variant == Variant::embryonic) {
      CHECK(c0.size() == 0);
    } else {
      CHECK((c0.array() == 1.0 / 32).all());
    }
  }
  CHECK(make_experiment("embryonic", true).nx * make_experiment("embryonic", true).ny == 12250);
  CHECK_THROWS_AS(make_experiment("keller"), Error);
}

TEST_CASE("relative error") {
  const Mesh m = build_rect_mesh<double>({0, 2, 0, 1}, 8, 4);
  std::mt19937_64 gen(1);
  Field ref(32);
  for (auto& x : ref) x = 0.5 + uniform01(gen);
  CHECK(relative_error(m, ref, ref, ErrorNorm::l2) == 0.0);
  CHECK(relative_error(m, Field(1.1 * ref), ref, ErrorNorm::l2) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(relative_error(m, Field(1.1 * ref), ref, ErrorNorm::linf) == doctest::Approx(0.1).epsilon(1e-14));
  for (int t = 0; t < 20; ++t) {
    Field u(32);
    for (auto& x : u) x = uniform01(gen);
    double num = 0, den = 0, mx = 0, mref = 0;
    for (Index k = 0; k < 32; ++k) {
      num += 0.0625 * (u[k] - ref[k]) * (u[k] - ref[k]);
      den += 0.0625 * ref[k] * ref[k];
      mx = std::max(mx, std::abs(u[k] - ref[k]));
      mref = std::max(mref, std::abs(ref[k]));
    }
    CHECK(relative_error(m, u, ref, ErrorNorm::l2) == doctest::Approx(std::sqrt(num / den)).epsilon(1e-14));
    CHECK(relative_error(m, u, ref, ErrorNorm::linf) == doctest::Approx(mx / mref).epsilon(1e-14));
  }
  CHECK_THROWS_AS(relative_error(m, ref, Field(Field::Zero(32)), ErrorNorm::l2), Error);
}

TEST_CASE("convergence order") {
  std::vector<std::pair<double, double>> lin, quad;
  for (double dt : {0.4, 0.2, 0.1, 0.04}) {
    lin.emplace_back(dt, 3 * dt);
    quad.emplace_back(dt, 3 * dt * dt);
  }
  CHECK(convergence_order(lin).slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(convergence_order(quad).slope == doctest::Approx(2.0).epsilon(1e-12));
  for (double p : convergence_order(quad).pairwise) CHECK(p == doctest::Approx(2.0).epsilon(1e-12));

  const auto table = convergence_order({{1e-1, 1.630e-2}, {1e-2, 1.672e-3}});
  CHECK(std::abs(table.pairwise[0] - 0.989) <= 0.001);

  CHECK_THROWS_AS(convergence_order({{0.1, 0.0}, {0.05, 1.0}}), Error);
  CHECK_THROWS_AS(convergence_order({{0.1, -1.0}, {0.05, 1.0}, {0.01, 1.0}}), Error);
}

TEST_CASE("reference cache round trip") {
  const Experiment e = small_embryonic();
  const Mesh m = make_mesh(e);
  const fs::path dir = temp_dir("cache");
  ReferenceSpec ref{StepperKind::sstli, 0.005, dir};
  bool hit = true;
  const Field a = reference_solution(e, m, ref, 0.05, {}, &hit);
  CHECK_FALSE(hit);
  const Field b = reference_solution(e, m, ref, 0.05, {}, &hit);
  CHECK(hit);
  CHECK(a == b);
  ref.dt = 0.0025;
  CHECK(reference_hash(e, ref, {}) != reference_hash(e, {StepperKind::sstli, 0.005, dir}, {}));
  fs::remove_all(dir);
}

TEST_CASE("reference dt margin") {
  const Experiment e = small_embryonic();
  const Mesh m = make_mesh(e);
  try {
    reference_solution(e, m, {StepperKind::sstli, 0.01, std::nullopt}, 0.05, {});
    FAIL("expected precondition error");
  } catch (const Error& err) {
    CHECK(err.code() == Errc::precondition);
  }
}

TEST_CASE("study shape and overhead of the baseline") {
  Experiment e = small_embryonic();
  StudyOptions o;
  o.reference.dt = 0.005;
  const StudyResult r = comparison_study(e, o);
  REQUIRE(r.rows.size() == 9);
  for (const auto& row : r.rows) {
    CHECK(row.l2_error > 0);
    CHECK(std::isfinite(row.l2_error));
    CHECK(row.steps == std::lround(e.final_time / row.dt));
    if (row.stepper == StepperKind::semi_implicit) {
      CHECK(row.gamma_pct == 0.0);
      CHECK(row.trainings == 0);
    }
    if (row.stepper == StepperKind::estli) CHECK(row.trainings == row.steps - 2);
    if (row.stepper == StepperKind::sstli) CHECK(row.trainings < row.steps);
  }
  CHECK(r.orders.size() == 3);

  e.dts = {0.1};
  StudyOptions single;
  single.steppers = {StepperKind::semi_implicit};
  const StudyResult one = comparison_study(e, single);
  REQUIRE(one.rows.size() == 1);
  CHECK(one.rows[0].gamma_pct == 0.0);
}

TEST_CASE("study tables are reproducible across thread counts") {
  Experiment e = small_embryonic();
  StudyOptions o;
  o.threads = 1;
  const StudyResult a = comparison_study(e, o);
  o.threads = 4;
  const StudyResult b = comparison_study(e, o);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].u_final == b.rows[i].u_final);
    CHECK(a.rows[i].l2_error == b.rows[i].l2_error);
    CHECK(a.rows[i].trainings == b.rows[i].trainings);
  }
}

TEST_CASE("dual reference audit") {
  const Experiment e = small_embryonic();
  const Mesh m = make_mesh(e);
  StudyOptions o;
  const StudyResult r = comparison_study(e, o);
  const Field semi_ref =
      reference_solution(e, m, {StepperKind::semi_implicit, e.dts.back() / 10, std::nullopt},
                         e.dts.back(), {});
  double finest = 0;
  for (const auto& row : r.rows) {
    if (row.dt == e.dts.back()) finest = std::max(finest, row.l2_error);
  }
  CHECK(relative_error(m, semi_ref, r.reference, ErrorNorm::l2) <= 5 * finest);
}

TEST_CASE("study csv layout") {
  StudyRow row;
  row.stepper = StepperKind::estli;
  row.dt = 0.1;
  row.steps = 10;
  row.l2_error = 0.5;
  row.linf_error = 0.25;
  row.trainings = 8;
  row.wall_ms = 1.5;
  row.gamma_pct = 50;
  std::ostringstream os;
  write_study_csv(os, {row});
  CHECK(os.str() ==
        "stepper,dt,steps,l2_error,linf_error,trainings,wall_ms,gamma_pct\n"
        "estli,0.10000000000000001,10,0.5,0.25,8,1.500,50.000\n");
  CHECK(format_dt(0.005) == "0.005");
}

TEST_CASE("experiment validation") {
  Experiment e = make_experiment("growth_quadratic");
  e.dts = {0.1, 0.1};
  CHECK_THROWS_AS(e.validate(), Error);
  e.dts = {0.1, 0.05};
  e.final_time = 0;
  CHECK_THROWS_AS(e.validate(), Error);
}
