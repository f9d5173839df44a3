#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pal/config.hpp"
#include "pal/logistic.hpp"
#include "pal/parallel.hpp"
#include "pal/types.hpp"

namespace pal {

// Binary Shannon entropy in nats, with 0 * ln 0 taken as 0.
inline double lius_score(double p) {
  auto term = [](double q) { return q > 0.0 ? q * std::log(q) : 0.0; };
  return -(term(p) + term(1.0 - p));
}

inline Features detection_features(const Detection& d) {
  return {static_cast<double>(d.pre_nms_count.value_or(0)), d.confidence};
}

namespace detail {

inline ClassifierModel fit_on(std::span<const Detection* const> rows,
                              const ClassifierParams& params) {
  std::vector<Features> x;
  std::vector<std::uint8_t> y;
  x.reserve(rows.size());
  y.reserve(rows.size());
  for (const Detection* d : rows) {
    if (!d->tp) {
      throw ValidationError("classifier training needs TP/FP labels (image " +
                            std::to_string(d->image_id) + ")");
    }
    x.push_back(detection_features(*d));
    y.push_back(*d->tp ? 1 : 0);
  }
  return fit_logistic(x, y, params);
}

}  // namespace detail

// Class-specific TP/FP classifier trained on labelled detections of one class.
inline ClassifierModel train_clc(std::span<const Detection> instances, ClassId class_id,
                                 const ClassifierParams& params) {
  std::vector<const Detection*> rows;
  rows.reserve(instances.size());
  for (const auto& d : instances) {
    if (d.class_id != class_id) {
      throw std::invalid_argument("train_clc: instance of class " + std::to_string(d.class_id) +
                                  " passed for class " + std::to_string(class_id));
    }
    rows.push_back(&d);
  }
  auto m = detail::fit_on(rows, params);
  m.class_id = class_id;
  return m;
}

// Pooled classifier over every labelled detection regardless of class; scores
// classes that are too rare for their own model.
inline ClassifierModel train_fallback_clc(std::span<const Detection> instances,
                                          const ClassifierParams& params) {
  std::vector<const Detection*> rows;
  rows.reserve(instances.size());
  for (const auto& d : instances) rows.push_back(&d);
  auto m = detail::fit_on(rows, params);
  m.fallback = true;
  return m;
}

struct ClassifierSet {
  std::vector<ClassifierModel> per_class;  // indexed by class id
  ClassifierModel fallback;
  bool fallback_fitted = false;  // false when every class had its own model

  // Model used to score class c, or nullptr when neither the class model nor
  // the pooled fallback could be trained.
  const ClassifierModel* route(ClassId c) const {
    if (c < per_class.size() && per_class[c].trained) return &per_class[c];
    if (fallback.trained) return &fallback;
    return nullptr;
  }
};

// Trains one classifier per class, plus the pooled fallback when some class
// falls short of the minimum label counts. Classes are trained independently
// and merged by class id.
inline ClassifierSet train_classifiers(std::span<const Detection> labelled, std::size_t num_classes,
                                       const ClassifierParams& params) {
  std::vector<std::vector<Detection>> by_class(num_classes);
  for (const auto& d : labelled) {
    if (d.class_id >= num_classes) {
      throw ValidationError("class id " + std::to_string(d.class_id) + " out of range");
    }
    by_class[d.class_id].push_back(d);
  }
  ClassifierSet set;
  set.per_class.resize(num_classes);
  parallel_for(num_classes, [&](std::size_t c) {
    set.per_class[c] = train_clc(by_class[c], static_cast<ClassId>(c), params);
  });
  const bool need_fallback = std::any_of(set.per_class.begin(), set.per_class.end(),
                                         [](const auto& m) { return !m.trained; });
  if (need_fallback) {
    set.fallback = train_fallback_clc(labelled, params);
    set.fallback_fitted = true;
  }
  return set;
}

struct InstanceScore {
  ImageId image_id = 0;
  ClassId class_id = 0;
  std::size_t index = 0;  // position in the unlabelled detection list
  double p_tp = 0.5;
  double lius = 0.0;
  bool scored = false;  // false: no usable classifier, lius pinned to 0
};

// One score per unlabelled detection, in input order.
inline std::vector<InstanceScore> score_instances(std::span<const Detection> unlabelled,
                                                  const ClassifierSet& models) {
  std::vector<InstanceScore> out(unlabelled.size());
  for (std::size_t i = 0; i < unlabelled.size(); ++i) {
    const auto& d = unlabelled[i];
    auto& s = out[i];
    s.image_id = d.image_id;
    s.class_id = d.class_id;
    s.index = i;
    if (const auto* m = models.route(d.class_id)) {
      const auto f = detection_features(d);
      s.p_tp = predict_tp_probability(*m, f[0], f[1]);
      s.lius = lius_score(s.p_tp);
      s.scored = true;
    }
  }
  return out;
}

struct ClassStats {
  ClassId class_id = 0;
  std::size_t n_l = 0;
  std::size_t n_u = 0;
  double r = 0.0;
};

// Class weight r_c = 1 - (n_c,l / N_l + n_c,u / N_u) / 2 for every declared
// class. Rare classes in both pools approach 1.
inline std::vector<ClassStats> compute_class_ratios(std::span<const Detection> labelled,
                                                    std::span<const Detection> unlabelled,
                                                    std::size_t num_classes) {
  if (labelled.empty() || unlabelled.empty()) throw ValidationError("no detections in pool");
  std::vector<ClassStats> stats(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) stats[c].class_id = static_cast<ClassId>(c);
  for (const auto& d : labelled) {
    if (d.class_id >= num_classes) throw ValidationError("class id out of range");
    ++stats[d.class_id].n_l;
  }
  for (const auto& d : unlabelled) {
    if (d.class_id >= num_classes) throw ValidationError("class id out of range");
    ++stats[d.class_id].n_u;
  }
  const auto nl = static_cast<double>(labelled.size());
  const auto nu = static_cast<double>(unlabelled.size());
  for (auto& s : stats) {
    s.r = 1.0 - 0.5 * (static_cast<double>(s.n_l) / nl + static_cast<double>(s.n_u) / nu);
  }
  return stats;
}

// Number of distinct unlabelled images containing each class. Budgets buy
// images, so this bounds how many images a class can claim.
inline std::vector<std::size_t> image_capacity(std::span<const Detection> unlabelled,
                                               std::size_t num_classes) {
  std::vector<std::set<ImageId>> seen(num_classes);
  for (const auto& d : unlabelled) {
    if (d.class_id < num_classes) seen[d.class_id].insert(d.image_id);
  }
  std::vector<std::size_t> cap(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) cap[c] = seen[c].size();
  return cap;
}

struct BudgetPlan {
  std::vector<std::size_t> per_class;  // b_c indexed by class id
  std::size_t total_budget = 0;

  std::size_t allocated() const {
    return std::accumulate(per_class.begin(), per_class.end(), std::size_t{0});
  }
};

// Splits `total` into integers proportional to `weights` over the eligible
// entries, largest remainder first (ties to the lower index). Zero total
// weight falls back to equal weights.
inline std::vector<std::size_t> largest_remainder(std::span<const double> weights,
                                                  std::span<const std::uint8_t> eligible,
                                                  std::size_t total) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> out(n, 0);
  std::vector<std::size_t> idx;
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (eligible[i]) {
      idx.push_back(i);
      wsum += weights[i];
    }
  }
  if (idx.empty() || total == 0) return out;
  const bool uniform = !(wsum > 0.0);
  const double denom = uniform ? static_cast<double>(idx.size()) : wsum;

  std::vector<double> rem(n, 0.0);
  std::size_t given = 0;
  for (auto i : idx) {
    const double q = static_cast<double>(total) * (uniform ? 1.0 : weights[i]) / denom;
    const double fl = std::floor(q);
    out[i] = static_cast<std::size_t>(fl);
    rem[i] = q - fl;
    given += out[i];
  }
  std::vector<std::size_t> order = idx;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; given < total; k = (k + 1) % order.size(), ++given) ++out[order[k]];
  return out;
}

// Per-class image budgets.
//
// Initial shares follow b * r_c / sum(r) with largest-remainder rounding.
// Shares above a class's image capacity are clamped and the surplus is spread
// over the classes still below capacity, again proportional to r_c, until
// nothing is left or every class is full. The result sums to
// min(b, sum(capacity)).
inline BudgetPlan allocate_budgets(std::span<const ClassStats> stats,
                                   std::span<const std::size_t> capacity, std::size_t b) {
  if (stats.size() != capacity.size()) {
    throw std::invalid_argument("allocate_budgets: stats/capacity size mismatch");
  }
  const std::size_t n = stats.size();
  BudgetPlan plan;
  plan.total_budget = b;
  plan.per_class.assign(n, 0);
  if (n == 0 || b == 0) return plan;

  std::vector<double> r(n);
  for (std::size_t c = 0; c < n; ++c) r[c] = std::max(0.0, stats[c].r);
  std::vector<std::uint8_t> open(n, 1);
  plan.per_class = largest_remainder(r, open, b);

  for (std::size_t guard = 0; guard <= n; ++guard) {
    std::size_t surplus = 0;
    for (std::size_t c = 0; c < n; ++c) {
      if (plan.per_class[c] > capacity[c]) {
        surplus += plan.per_class[c] - capacity[c];
        plan.per_class[c] = capacity[c];
      }
    }
    if (surplus == 0) break;
    bool any = false;
    for (std::size_t c = 0; c < n; ++c) {
      open[c] = plan.per_class[c] < capacity[c] ? 1 : 0;
      any = any || open[c];
    }
    if (!any) break;
    auto extra = largest_remainder(r, open, surplus);
    for (std::size_t c = 0; c < n; ++c) plan.per_class[c] += extra[c];
  }
  return plan;
}

struct Candidate {
  ImageId image_id = 0;
  std::size_t instance = 0;  // index of the highest-LIUS detection of the class
  double lius = 0.0;
};

// Ranks images per class by their best instance LIUS (descending, ties to the
// lower image id) and keeps the top 2 * b_c.
inline std::vector<std::vector<Candidate>> shortlist_candidates(
    std::span<const InstanceScore> scores, const BudgetPlan& plan) {
  const std::size_t n = plan.per_class.size();
  std::vector<std::map<ImageId, Candidate>> best(n);
  for (const auto& s : scores) {
    if (s.class_id >= n) continue;
    auto [it, inserted] = best[s.class_id].try_emplace(s.image_id, Candidate{s.image_id, s.index, s.lius});
    if (!inserted) {
      auto& c = it->second;
      if (s.lius > c.lius || (s.lius == c.lius && s.index < c.instance)) {
        c.instance = s.index;
        c.lius = s.lius;
      }
    }
  }
  std::vector<std::vector<Candidate>> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t keep = 2 * plan.per_class[c];
    if (keep == 0) continue;
    auto& list = out[c];
    for (const auto& [id, cand] : best[c]) list.push_back(cand);
    std::stable_sort(list.begin(), list.end(), [](const Candidate& a, const Candidate& b) {
      if (a.lius != b.lius) return a.lius > b.lius;
      return a.image_id < b.image_id;
    });
    if (list.size() > keep) list.resize(keep);
  }
  return out;
}

}  // namespace pal
