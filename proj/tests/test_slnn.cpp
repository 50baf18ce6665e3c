#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "kschem/rng.hpp"
#include "kschem/slnn.hpp"

using namespace kschem;

namespace {

Normalizer identity_norm() {
  Normalizer n;
  n.lo = -1;
  n.hi = 1;
  n.fitted = true;
  return n;
}

NetworkState net(double w0, double w1, double w2, Normalizer n = identity_norm()) {
  NetworkState w;
  w.bias = w0;
  w.weight_prev = w1;
  w.weight_curr = w2;
  w.norm = n;
  return w;
}

Field random_vec(std::mt19937_64& gen, Index n, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  Field f(n);
  for (auto& x : f) x = d(gen);
  return f;
}

/// (J^T J) w = J^T t solved densely, ordered (w1, w2, w0).
Eigen::Vector3d normal_equations(const Field& x1, const Field& x2, const Field& t) {
  Eigen::MatrixXd j(t.size(), 3);
  j.col(0) = x1;
  j.col(1) = x2;
  j.col(2).setOnes();
  return (j.transpose() * j).fullPivLu().solve(j.transpose() * t);
}

TrainConfig to_grad_floor() {
  TrainConfig cfg;
  cfg.eps_train = 1e-300;
  cfg.max_iter = 500;
  return cfg;
}

}  // namespace

TEST_CASE("normalizer endpoints") {
  Field t(2);
  t << 0, 1;
  const auto n = fit_normalizer<double>(t);
  CHECK(n.apply(0.0) == -1.0);
  CHECK(n.apply(1.0) == 1.0);
  CHECK(n.apply(0.5) == 0.0);
}

TEST_CASE("normalizer on constant data") {
  const auto n = fit_normalizer<double>(Field(Field::Constant(3, 3.0)));
  CHECK(n.degenerate());
  CHECK(n.apply(Field(Field::Constant(3, 3.0))) == Field::Zero(3));
  CHECK(n.invert(0.0) == 3.0);
}

TEST_CASE("normalizer spans the union of its inputs") {
  Field a(2), b(2);
  a << 2, 3;
  b << -1, 0;
  const auto n = fit_normalizer<double>(a, b);
  CHECK(n.lo == -1);
  CHECK(n.hi == 3);
  CHECK_THROWS_AS(fit_normalizer<double>(Field{}), Error);
}

TEST_CASE("property: normalizer round trip") {
  std::mt19937_64 gen(61);
  for (int t = 0; t < 100; ++t) {
    const Field x = random_vec(gen, 50, -100, 100);
    const auto n = fit_normalizer<double>(x);
    const Field back = n.invert(n.apply(x));
    CHECK((back - x).cwiseAbs().maxCoeff() <= 1e-14 * x.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("predict examples") {
  std::mt19937_64 gen(67);
  const Field prev = random_vec(gen, 20), curr = random_vec(gen, 20);
  CHECK(predict(net(0, 0, 1), prev, curr) == curr);
  CHECK(predict(net(0, 1, 0), prev, curr) == prev);

  const Field d = random_vec(gen, 20, 0, 1);
  for (int n = 1; n < 6; ++n) {
    const Field out = predict(net(0, -1, 2), Field((n - 1) * d), Field(n * d));
    CHECK((out - (n + 1) * d).cwiseAbs().maxCoeff() < 1e-14);
  }
  NetworkState unfitted;
  CHECK_THROWS_AS(predict(unfitted, prev, curr), Error);
}

TEST_CASE("property: prediction is affine in normalized coordinates") {
  std::mt19937_64 gen(71);
  for (int t = 0; t < 50; ++t) {
    const Field x = random_vec(gen, 30, 0, 5), y = random_vec(gen, 30, 0, 5);
    const auto n = fit_normalizer<double>(x, y);
    const auto w = net(random_vec(gen, 1)[0], random_vec(gen, 1)[0], random_vec(gen, 1)[0], n);
    const Field out = n.apply(predict(w, x, y));
    for (Index k = 0; k < 30; ++k) {
      const double expect = w.bias + w.weight_prev * n.apply(x[k]) + w.weight_curr * n.apply(y[k]);
      CHECK(out[k] == doctest::Approx(expect).epsilon(1e-13));
    }
  }
}

TEST_CASE("mse examples") {
  std::mt19937_64 gen(73);
  const Field a = random_vec(gen, 10), b = random_vec(gen, 10);
  CHECK(mse(net(0, 0, 1), a, b, b) == 0.0);
  CHECK(mse(net(0, 0, 0), a, b, Field(Field::Ones(10))) == 1.0);
  for (int t = 0; t < 50; ++t) {
    const Field x1 = random_vec(gen, 40), x2 = random_vec(gen, 40), y = random_vec(gen, 40);
    const auto w = net(0.1 * t, -0.3, 0.7);
    double sum = 0;
    for (Index k = 0; k < 40; ++k) {
      const double r = y[k] - (w.weight_prev * x1[k] + w.weight_curr * x2[k] + w.bias);
      sum += r * r;
    }
    CHECK(mse(w, x1, x2, y) == doctest::Approx(sum / 40).epsilon(1e-14));
  }
}

TEST_CASE("LM recovers exactly affine data") {
  std::mt19937_64 gen(79);
  const Field x1 = random_vec(gen, 100), x2 = random_vec(gen, 100);
  const Field t = 0.3 * x1 + 0.6 * x2 + Field::Constant(100, 0.05);
  const Eigen::Vector3d oracle = normal_equations(x1, x2, t);
  TrainConfig cfg = to_grad_floor();
  cfg.eps_train = 1e-13;
  const auto r = lm_train<double>(x1, x2, t, net(0, 0, 0), cfg);
  CHECK(std::abs(r.state.weight_prev - 0.3) < 1e-6);
  CHECK(std::abs(r.state.weight_curr - 0.6) < 1e-6);
  CHECK(std::abs(r.state.bias - 0.05) < 1e-6);
  CHECK(std::abs(oracle[0] - 0.3) < 1e-12);
  CHECK(r.report.mse < 1e-12);
}

TEST_CASE("LM returns immediately at an exact fit") {
  std::mt19937_64 gen(83);
  const Field x1 = random_vec(gen, 30), x2 = random_vec(gen, 30);
  const auto start = net(0, 0, 1);
  const auto r = lm_train<double>(x1, x2, x2, start, TrainConfig{});
  CHECK(r.report.iterations == 0);
  CHECK(r.report.mse == 0.0);
  CHECK(r.state.same_weights(start));
}

TEST_CASE("LM on noisy data matches least squares at the gradient floor") {
  std::mt19937_64 gen(89);
  std::normal_distribution<double> noise(0, 0.1);
  for (int t = 0; t < 20; ++t) {
    const Field x1 = random_vec(gen, 200), x2 = random_vec(gen, 200);
    Field y = -0.4 * x1 + 1.1 * x2 + Field::Constant(200, 0.2);
    for (auto& v : y) v += noise(gen);
    const auto r = lm_train<double>(x1, x2, y, net(0.9, 0.9, -0.9), to_grad_floor());
    REQUIRE(r.report.reason == StopReason::gradient_floor);
    const Eigen::Vector3d oracle = normal_equations(x1, x2, y);
    CHECK(std::abs(r.state.weight_prev - oracle[0]) < 1e-6);
    CHECK(std::abs(r.state.weight_curr - oracle[1]) < 1e-6);
    CHECK(std::abs(r.state.bias - oracle[2]) < 1e-6);
  }
}

TEST_CASE("stop reasons") {
  std::mt19937_64 gen(97);
  const Field x1 = random_vec(gen, 50), x2 = random_vec(gen, 50), y = random_vec(gen, 50);
  TrainConfig cfg = to_grad_floor();
  cfg.max_iter = 1;
  CHECK(lm_train<double>(x1, x2, y, net(1, 1, 1), cfg).report.reason == StopReason::max_iterations);
  TrainConfig loose;
  loose.eps_train = 10;
  CHECK(lm_train<double>(x1, x2, y, net(0, 0, 0), loose).report.reason == StopReason::error_goal);
}

TEST_CASE("property: LM error never increases") {
  std::mt19937_64 gen(101);
  const Field x1 = random_vec(gen, 80), x2 = random_vec(gen, 80);
  Field y = 0.5 * x1 - x2;
  for (auto& v : y) v += 0.05 * random_vec(gen, 1)[0];
  TrainConfig cfg = to_grad_floor();
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 30; ++k) {
    cfg.max_iter = k;
    const auto r = lm_train<double>(x1, x2, y, net(1, -1, 1), cfg);
    CHECK(r.report.mse <= prev);
    prev = r.report.mse;
  }
}

TEST_CASE("property: training is deterministic") {
  std::mt19937_64 gen(103);
  const Field a = random_vec(gen, 500, 0, 3), b = random_vec(gen, 500, 0, 3),
              c = random_vec(gen, 500, 0, 3);
  Rng r1(5), r2(5);
  const auto w1 = train_network<double>(a, b, c, random_network<double>(r1.source()), to_grad_floor());
  const auto w2 = train_network<double>(a, b, c, random_network<double>(r2.source()), to_grad_floor());
  CHECK(w1.state.same_weights(w2.state));
  CHECK(w1.report.iterations == w2.report.iterations);
  CHECK(w1.state.norm.lo == w2.state.norm.lo);
}

TEST_CASE("train_network refits the shared normalizer") {
  Field a(3), b(3), c(3);
  a << 1, 2, 3;
  b << 2, 3, 4;
  c << 3, 4, 5;
  const auto r = train_network<double>(a, b, c, net(0, 0, 0), to_grad_floor());
  CHECK(r.state.norm.lo == 1);
  CHECK(r.state.norm.hi == 5);
  const Field next = predict(r.state, b, c);
  CHECK(next[0] == doctest::Approx(4).epsilon(1e-8));
  CHECK(next[2] == doctest::Approx(6).epsilon(1e-8));
}

TEST_CASE("random initial weights lie in [-1, 1]") {
  Rng rng(7);
  for (int t = 0; t < 1000; ++t) {
    const auto w = random_network<double>(rng.source());
    CHECK(std::abs(w.bias) <= 1);
    CHECK(std::abs(w.weight_prev) <= 1);
    CHECK(std::abs(w.weight_curr) <= 1);
  }
}

TEST_CASE("bad training input") {
  Field a = Field::Ones(3);
  CHECK_THROWS_AS(lm_train<double>(a, a, Field(Field::Ones(2)), net(0, 0, 0), TrainConfig{}), Error);
  a[1] = std::nan("");
  CHECK_THROWS_AS(lm_train<double>(a, a, a, net(0, 0, 0), TrainConfig{}), Error);
  TrainConfig bad;
  bad.mu_up = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}
