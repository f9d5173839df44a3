#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pal/types.hpp"

namespace pal {

struct ClassifierParams {
  double l2_lambda = 1e-4;
  double tol = 1e-8;  // max absolute coefficient change at convergence
  int max_iter = 100;
  std::size_t min_pos = 5;
  std::size_t min_neg = 5;

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

// Weights and thresholds for one selection round.
//
// alpha weighs the instance-level term and d the image-level term, with
// alpha + d = 1. The image-level term splits as 2 * beta + gamma = d, beta
// applying to both the entropy and the diversity index, gamma to the
// similarity penalty.
struct SelectionConfig {
  double alpha = 0.9;
  double beta = 0.04;
  double gamma = 0.02;
  double d = 0.1;
  std::size_t budget_b = 100;
  double iou_prenms = 0.5;
  double iou_tp = 0.5;
  ClassifierParams classifier;
  std::uint64_t seed = 0;

  friend bool operator==(const SelectionConfig&, const SelectionConfig&) = default;
};

inline constexpr double kWeightTolerance = 1e-9;

// Returns one message per violated constraint; empty when the config is valid.
inline std::vector<std::string> config_violations(const SelectionConfig& cfg) {
  std::vector<std::string> out;
  if (!(cfg.alpha >= 0.0) || !(cfg.beta >= 0.0) || !(cfg.gamma >= 0.0) || !(cfg.d >= 0.0)) {
    out.emplace_back("alpha, beta, gamma, d must all be >= 0");
  }
  if (!(std::abs(cfg.alpha + cfg.d - 1.0) <= kWeightTolerance)) {
    out.emplace_back("alpha+d must equal 1");
  }
  if (!(std::abs(2.0 * cfg.beta + cfg.gamma - cfg.d) <= kWeightTolerance)) {
    out.emplace_back("2*beta+gamma must equal d");
  }
  if (cfg.budget_b < 1) out.emplace_back("budget_b must be >= 1");
  if (!(cfg.iou_prenms > 0.0 && cfg.iou_prenms < 1.0)) {
    out.emplace_back("iou_prenms must lie in (0,1)");
  }
  if (!(cfg.iou_tp > 0.0 && cfg.iou_tp < 1.0)) out.emplace_back("iou_tp must lie in (0,1)");
  const auto& c = cfg.classifier;
  if (!(c.l2_lambda >= 0.0)) out.emplace_back("l2_lambda must be >= 0");
  if (!(c.tol > 0.0)) out.emplace_back("tol must be > 0");
  if (c.max_iter < 1) out.emplace_back("max_iter must be >= 1");
  return out;
}

inline void validate_config(const SelectionConfig& cfg) {
  auto v = config_violations(cfg);
  if (v.empty()) return;
  std::string msg = "invalid config: ";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) msg += "; ";
    msg += v[i];
  }
  throw ValidationError(msg);
}

}  // namespace pal
