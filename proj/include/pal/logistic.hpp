#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>
#include <algorithm>

#include "pal/config.hpp"
#include "pal/types.hpp"

namespace pal {

// Two input features per detection: pre-NMS proposal count and confidence.
using Features = std::array<double, 2>;

// Per-class true-positive classifier.
//
// Inputs are standardized with the stored means and deviations before the
// linear predictor coef[0] + coef[1] * z_count + coef[2] * z_conf.
struct ClassifierModel {
  ClassId class_id = 0;
  std::array<double, 3> coef{};
  std::array<double, 2> mean{};
  std::array<double, 2> stdev{1.0, 1.0};
  std::array<double, 3> std_error{};  // sqrt(diag(H^-1)) at the optimum
  bool trained = false;
  bool fallback = false;
  bool converged = false;
  int iterations = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow.
inline double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

// Cholesky solve of a symmetric positive definite 3x3 system. Returns false
// if the matrix is not numerically positive definite.
inline bool cholesky_solve(const Mat3& a, const Vec3& b, Vec3& x) {
  Mat3 l{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (!(s > 0.0)) return false;
        l[i][i] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  Vec3 y{};
  for (int i = 0; i < 3; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= l[i][k] * y[k];
    y[i] = s / l[i][i];
  }
  for (int i = 2; i >= 0; --i) {
    double s = y[i];
    for (int k = i + 1; k < 3; ++k) s -= l[k][i] * x[k];
    x[i] = s / l[i][i];
  }
  return true;
}

inline bool invert_diagonal(const Mat3& a, Vec3& diag) {
  for (int c = 0; c < 3; ++c) {
    Vec3 e{};
    e[c] = 1.0;
    Vec3 col{};
    if (!cholesky_solve(a, e, col)) return false;
    diag[c] = col[c];
  }
  return true;
}

}  // namespace detail

// L2-penalized logistic regression fitted by Newton/IRLS from a zero start.
//
// Minimizes  sum_i [softplus(eta_i) - y_i * eta_i] + lambda/2 * |coef|^2  over
// standardized features. Steps are halved until the objective does not
// increase; iteration stops once the largest coefficient change falls below
// params.tol or after params.max_iter steps. The model is left untrained when
// either label has fewer than min_pos / min_neg examples.
inline ClassifierModel fit_logistic(std::span<const Features> x, std::span<const std::uint8_t> y,
                                    const ClassifierParams& params) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_logistic: size mismatch");
  ClassifierModel m;
  for (auto v : y) (v ? m.positives : m.negatives) += 1;
  if (m.positives < params.min_pos || m.negatives < params.min_neg || x.empty()) return m;

  const auto n = static_cast<double>(x.size());
  for (int f = 0; f < 2; ++f) {
    double s = 0.0;
    for (const auto& r : x) s += r[f];
    m.mean[f] = s / n;
    double ss = 0.0;
    for (const auto& r : x) ss += (r[f] - m.mean[f]) * (r[f] - m.mean[f]);
    const double sd = std::sqrt(ss / n);
    // A constant feature carries no information; unit scale keeps z = 0.
    m.stdev[f] = sd > 1e-12 ? sd : 1.0;
  }

  std::vector<detail::Vec3> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    z[i] = {1.0, (x[i][0] - m.mean[0]) / m.stdev[0], (x[i][1] - m.mean[1]) / m.stdev[1]};
  }

  const double lambda = params.l2_lambda;
  auto objective = [&](const detail::Vec3& b) {
    double f = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double eta = b[0] * z[i][0] + b[1] * z[i][1] + b[2] * z[i][2];
      f += softplus(eta) - (y[i] ? eta : 0.0);
    }
    return f + 0.5 * lambda * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  };
  auto hessian = [&](const detail::Vec3& b, detail::Vec3* grad) {
    detail::Mat3 h{};
    detail::Vec3 g{};
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double eta = b[0] * z[i][0] + b[1] * z[i][1] + b[2] * z[i][2];
      const double p = sigmoid(eta);
      const double w = p * (1.0 - p);
      const double r = p - (y[i] ? 1.0 : 0.0);
      for (int a = 0; a < 3; ++a) {
        g[a] += r * z[i][a];
        for (int c = 0; c < 3; ++c) h[a][c] += w * z[i][a] * z[i][c];
      }
    }
    for (int a = 0; a < 3; ++a) {
      g[a] += lambda * b[a];
      h[a][a] += lambda;
    }
    if (grad) *grad = g;
    return h;
  };

  detail::Vec3 beta{};
  double f = objective(beta);
  for (int it = 0; it < params.max_iter; ++it) {
    detail::Vec3 g{};
    auto h = hessian(beta, &g);
    detail::Vec3 step{};
    if (!detail::cholesky_solve(h, g, step)) break;
    double scale = 1.0;
    detail::Vec3 next{};
    double f_next = f;
    for (int halving = 0; halving < 40; ++halving) {
      for (int a = 0; a < 3; ++a) next[a] = beta[a] - scale * step[a];
      f_next = objective(next);
      if (f_next <= f) break;
      scale *= 0.5;
    }
    double change = 0.0;
    for (int a = 0; a < 3; ++a) change = std::max(change, std::abs(next[a] - beta[a]));
    m.iterations = it + 1;
    if (f_next > f) break;  // no descent direction left at working precision
    beta = next;
    f = f_next;
    if (change < params.tol) {
      m.converged = true;
      break;
    }
  }

  m.coef = beta;
  detail::Vec3 diag{};
  if (detail::invert_diagonal(hessian(beta, nullptr), diag)) {
    for (int a = 0; a < 3; ++a) m.std_error[a] = std::sqrt(diag[a]);
  }
  m.trained = true;
  return m;
}

// Probability that a detection with the given raw features is a true positive.
inline double predict_tp_probability(const ClassifierModel& m, double pre_nms_count,
                                     double confidence) {
  if (!m.trained) throw std::logic_error("predict_tp_probability: model is not trained");
  const double z1 = (pre_nms_count - m.mean[0]) / m.stdev[0];
  const double z2 = (confidence - m.mean[1]) / m.stdev[1];
  return sigmoid(m.coef[0] + m.coef[1] * z1 + m.coef[2] * z2);
}

}  // namespace pal
