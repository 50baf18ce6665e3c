#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "kschem/error.hpp"
#include "kschem/mesh.hpp"

namespace kschem {

/// Affine map of a data range onto [-1, 1]. Constant data maps by x - min.
template <typename Scalar>
struct NormalizerT {
  Scalar lo = 0;
  Scalar hi = 0;
  bool fitted = false;

  bool degenerate() const { return !(hi > lo); }

  Scalar apply(Scalar x) const {
    return degenerate() ? x - lo : Scalar(2) * (x - lo) / (hi - lo) - Scalar(1);
  }
  Scalar invert(Scalar y) const {
    return degenerate() ? y + lo : (y + Scalar(1)) * (hi - lo) / Scalar(2) + lo;
  }

  template <typename Derived>
  VectorX<Scalar> apply(const Eigen::MatrixBase<Derived>& x) const {
    return x.unaryExpr([this](Scalar v) { return apply(v); });
  }
  template <typename Derived>
  VectorX<Scalar> invert(const Eigen::MatrixBase<Derived>& y) const {
    return y.unaryExpr([this](Scalar v) { return invert(v); });
  }
};

using Normalizer = NormalizerT<double>;

template <typename Scalar, typename... Derived>
NormalizerT<Scalar> fit_normalizer(const Eigen::MatrixBase<Derived>&... data) {
  NormalizerT<Scalar> map;
  map.lo = std::numeric_limits<Scalar>::infinity();
  map.hi = -std::numeric_limits<Scalar>::infinity();
  bool any = false;
  auto extend = [&](const auto& v) {
    if (v.size() == 0) return;
    any = true;
    map.lo = std::min(map.lo, Scalar(v.minCoeff()));
    map.hi = std::max(map.hi, Scalar(v.maxCoeff()));
  };
  (extend(data), ...);
  if (!any) throw Error(Errc::invalid_argument, "cannot fit a normalizer on empty data");
  if (!std::isfinite(map.lo) || !std::isfinite(map.hi)) {
    throw Error(Errc::non_finite, "normalizer data contain non-finite values");
  }
  map.fitted = true;
  return map;
}

/// Bias and two weights of the two-input identity-activation network,
/// together with the coordinates they were trained in.
template <typename Scalar>
struct NetworkStateT {
  Scalar bias = 0;        // w0
  Scalar weight_prev = 0; // w1, multiplies u^{n-1}
  Scalar weight_curr = 0; // w2, multiplies u^n
  NormalizerT<Scalar> norm;

  bool finite() const {
    return std::isfinite(bias) && std::isfinite(weight_prev) && std::isfinite(weight_curr);
  }
  bool same_weights(const NetworkStateT& o) const {
    return bias == o.bias && weight_prev == o.weight_prev && weight_curr == o.weight_curr;
  }
};

using NetworkState = NetworkStateT<double>;

enum class StopReason { error_goal, gradient_floor, max_iterations, damping_limit };

inline std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::error_goal: return "error_goal";
    case StopReason::gradient_floor: return "gradient_floor";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::damping_limit: return "damping_limit";
  }
  return "?";
}

struct TrainConfig {
  double eps_train = 1e-3;
  double grad_min = 1e-10;
  int max_iter = 200;
  double mu0 = 1e-3;
  double mu_up = 10.0;
  double mu_down = 0.1;
  double mu_max = 1e10;
  /// Gradient norm is ||J^T r||_inf, divided by the sample count when set.
  bool scale_gradient = true;

  void validate() const {
    if (!(eps_train > 0)) throw Error(Errc::config, "train.eps_train must be > 0");
    if (!(grad_min > 0)) throw Error(Errc::config, "train.grad_min must be > 0");
    if (max_iter < 1) throw Error(Errc::config, "train.max_iter must be >= 1");
    if (!(mu0 > 0)) throw Error(Errc::config, "train.mu0 must be > 0");
    if (!(mu_up > 1 && mu_down > 0 && mu_down < 1)) {
      throw Error(Errc::config, "train damping multipliers must satisfy mu_up > 1 > mu_down > 0");
    }
  }
};

struct TrainReport {
  int iterations = 0;
  double mse = 0;
  double gradient = 0;
  StopReason reason = StopReason::error_goal;
};

template <typename Scalar>
struct TrainResultT {
  NetworkStateT<Scalar> state;
  TrainReport report;
};

/// One-step-ahead prediction: nu^{-1}(w1 nu(u_prev) + w2 nu(u_curr) + w0).
template <typename Scalar>
FieldT<Scalar> predict(const NetworkStateT<Scalar>& w, const FieldT<Scalar>& u_prev,
                       const FieldT<Scalar>& u_curr) {
  if (!w.norm.fitted) throw Error(Errc::unfitted_normalizer, "network has no fitted normalizer");
  if (u_prev.size() != u_curr.size()) throw Error(Errc::dimension_mismatch, "predict inputs");
  const FieldT<Scalar> y = w.weight_prev * w.norm.apply(u_prev) +
                           w.weight_curr * w.norm.apply(u_curr) +
                           FieldT<Scalar>::Constant(u_curr.size(), w.bias);
  return w.norm.invert(y);
}

/// Mean squared error in the network's normalized coordinates.
template <typename Scalar>
Scalar mse(const NetworkStateT<Scalar>& w, const FieldT<Scalar>& in_prev,
           const FieldT<Scalar>& in_curr, const FieldT<Scalar>& target) {
  if (!w.norm.fitted) throw Error(Errc::unfitted_normalizer, "network has no fitted normalizer");
  if (in_prev.size() != target.size() || in_curr.size() != target.size() || target.size() == 0) {
    throw Error(Errc::dimension_mismatch, "mse inputs");
  }
  const FieldT<Scalar> out = w.weight_prev * w.norm.apply(in_prev) +
                             w.weight_curr * w.norm.apply(in_curr) +
                             FieldT<Scalar>::Constant(target.size(), w.bias);
  return (w.norm.apply(target) - out).squaredNorm() / Scalar(target.size());
}

/// Levenberg-Marquardt on samples already in normalized coordinates. The
/// design matrix [x1, x2, 1] is constant (identity activation), so only the
/// residual changes between iterations. Rejected steps leave w unchanged.
/// The error is quadratic in w, so a step's decrease (2 g.step - step' J'J step) / n
/// is evaluated in closed form rather than as a difference of two nearly equal MSEs.
template <typename Scalar>
TrainResultT<Scalar> lm_train(const VectorX<Scalar>& x1, const VectorX<Scalar>& x2,
                              const VectorX<Scalar>& target, const NetworkStateT<Scalar>& w_init,
                              const TrainConfig& cfg) {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  const Index n = target.size();
  if (n == 0 || x1.size() != n || x2.size() != n) {
    throw Error(Errc::dimension_mismatch, "training samples must be nonempty and equally sized");
  }
  if (!w_init.finite() || !x1.allFinite() || !x2.allFinite() || !target.allFinite()) {
    throw Error(Errc::non_finite, "non-finite training data or initial weights");
  }
  const Scalar count = static_cast<Scalar>(n);

  Mat3 jtj;
  jtj(0, 0) = x1.squaredNorm();
  jtj(0, 1) = x1.dot(x2);
  jtj(0, 2) = x1.sum();
  jtj(1, 1) = x2.squaredNorm();
  jtj(1, 2) = x2.sum();
  jtj(2, 2) = count;
  jtj(1, 0) = jtj(0, 1);
  jtj(2, 0) = jtj(0, 2);
  jtj(2, 1) = jtj(1, 2);

  auto residual = [&](const Vec3& w) -> VectorX<Scalar> {
    return target - (w[0] * x1 + w[1] * x2 + VectorX<Scalar>::Constant(n, w[2]));
  };
  auto gradient = [&](const VectorX<Scalar>& r) -> Vec3 {
    return Vec3(x1.dot(r), x2.dot(r), r.sum());
  };

  Vec3 w(w_init.weight_prev, w_init.weight_curr, w_init.bias);
  VectorX<Scalar> r = residual(w);
  Scalar err = r.squaredNorm() / count;
  Scalar mu = static_cast<Scalar>(cfg.mu0);

  TrainReport report;
  for (int k = 0;; ++k) {
    const Vec3 g = gradient(r);
    const Scalar gnorm = g.cwiseAbs().maxCoeff() / (cfg.scale_gradient ? count : Scalar(1));
    report.iterations = k;
    report.mse = static_cast<double>(err);
    report.gradient = static_cast<double>(gnorm);
    if (err <= Scalar(cfg.eps_train)) {
      report.reason = StopReason::error_goal;
      break;
    }
    if (gnorm <= Scalar(cfg.grad_min)) {
      report.reason = StopReason::gradient_floor;
      break;
    }
    if (k >= cfg.max_iter) {
      report.reason = StopReason::max_iterations;
      break;
    }
    bool accepted = false;
    while (mu <= Scalar(cfg.mu_max)) {
      const Vec3 step = (jtj + mu * Mat3::Identity()).ldlt().solve(g);
      const Vec3 trial = w + step;
      VectorX<Scalar> r_trial = residual(trial);
      const Scalar err_trial = r_trial.squaredNorm() / count;
      if (!std::isfinite(err_trial)) {
        throw Error(Errc::non_finite, "training error became non-finite at iteration " +
                                          std::to_string(k));
      }
      const Scalar decrease = (Scalar(2) * g.dot(step) - step.dot(jtj * step)) / count;
      if (decrease > Scalar(0)) {
        w = trial;
        r = std::move(r_trial);
        err = err_trial;
        mu *= Scalar(cfg.mu_down);
        accepted = true;
        break;
      }
      mu *= Scalar(cfg.mu_up);
    }
    if (!accepted) {
      report.iterations = k + 1;
      report.reason = StopReason::damping_limit;
      break;
    }
  }

  TrainResultT<Scalar> out;
  out.state.weight_prev = w[0];
  out.state.weight_curr = w[1];
  out.state.bias = w[2];
  out.state.norm = w_init.norm;
  out.report = report;
  return out;
}

/// Fits one shared normalizer on the union of inputs and targets, then
/// trains (u^{n-2}, u^{n-1}) -> u^n starting from the weights of w_init.
template <typename Scalar>
TrainResultT<Scalar> train_network(const FieldT<Scalar>& u_nm2, const FieldT<Scalar>& u_nm1,
                                   const FieldT<Scalar>& u_n, const NetworkStateT<Scalar>& w_init,
                                   const TrainConfig& cfg) {
  const NormalizerT<Scalar> norm = fit_normalizer<Scalar>(u_nm2, u_nm1, u_n);
  NetworkStateT<Scalar> start = w_init;
  start.norm = norm;
  auto result = lm_train<Scalar>(norm.apply(u_nm2), norm.apply(u_nm1), norm.apply(u_n), start, cfg);
  result.state.norm = norm;
  return result;
}

/// Each parameter uniform in [-1, 1]; uniform01 returns values in [0, 1).
template <typename Scalar, typename Uniform01>
NetworkStateT<Scalar> random_network(Uniform01&& uniform01) {
  NetworkStateT<Scalar> w;
  w.bias = Scalar(2) * Scalar(uniform01()) - Scalar(1);
  w.weight_prev = Scalar(2) * Scalar(uniform01()) - Scalar(1);
  w.weight_curr = Scalar(2) * Scalar(uniform01()) - Scalar(1);
  return w;
}

}  // namespace kschem
