#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pal/config.hpp"
#include "pal/embeddings.hpp"
#include "pal/guide.hpp"
#include "pal/lius.hpp"
#include "pal/matching.hpp"
#include "pal/types.hpp"

namespace pal {

struct SelectedImage {
  ImageId image_id = 0;
  std::size_t instance = 0;  // unlabelled detection that put the image on the shortlist
  double lius = 0.0;
  double cwie = 0.0;
  double rcdi = 0.0;
  double rcsp = 0.0;
  double score = 0.0;

  friend bool operator==(const SelectedImage&, const SelectedImage&) = default;
};

struct ClassSelection {
  ClassId class_id = 0;
  std::size_t n_l = 0;
  std::size_t n_u = 0;
  double r = 0.0;
  std::size_t b = 0;
  std::size_t deficit = 0;  // b minus images actually taken
  std::vector<SelectedImage> selected;  // ascending image id

  friend bool operator==(const ClassSelection&, const ClassSelection&) = default;
};

struct SelectionManifest {
  std::uint32_t round = 1;
  std::size_t budget = 0;
  std::vector<ClassSelection> per_class;  // ascending class id

  std::size_t total_selected() const {
    std::size_t n = 0;
    for (const auto& c : per_class) n += c.selected.size();
    return n;
  }
  std::size_t total_deficit() const {
    std::size_t n = 0;
    for (const auto& c : per_class) n += c.deficit;
    return n;
  }
  std::vector<ImageId> selected_ids() const {
    std::vector<ImageId> ids;
    for (const auto& c : per_class) {
      for (const auto& s : c.selected) ids.push_back(s.image_id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  friend bool operator==(const SelectionManifest&, const SelectionManifest&) = default;
};

struct RoundState {
  std::uint32_t round = 1;
  std::set<ImageId> labelled;
  std::set<ImageId> unlabelled;
  std::size_t budget = 0;
  std::vector<std::vector<ImageId>> history;  // selected ids of past rounds

  friend bool operator==(const RoundState&, const RoundState&) = default;
};

// Final per-image score: alpha * LIUS + gamma * RCSP + beta * (CWIE + RCDI),
// using the normalized image signals.
inline double combine_score(double lius, const ImageSignals& s, const SelectionConfig& cfg) {
  return cfg.alpha * lius + cfg.gamma * s.rcsp + cfg.beta * (s.cwie + s.rcdi);
}

struct ScoredCandidate {
  ImageId image_id = 0;
  std::size_t instance = 0;
  double lius = 0.0;
  ImageSignals signals;
  double score = 0.0;
};

// Order in which classes claim images: fewest unlabelled instances first,
// ties to the lower class id.
inline std::vector<ClassId> selection_order(std::span<const ClassStats> stats) {
  std::vector<ClassId> order(stats.size());
  std::iota(order.begin(), order.end(), ClassId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](ClassId a, ClassId b) { return stats[a].n_u < stats[b].n_u; });
  return order;
}

// Takes up to b_c of the class's candidates by descending score (ties to the
// lower image id), skipping images already claimed by an earlier class.
inline std::vector<ScoredCandidate> select_top(std::span<const ScoredCandidate> candidates,
                                               std::size_t b_c, std::set<ImageId>& claimed) {
  std::vector<ScoredCandidate> ranked(candidates.begin(), candidates.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.image_id < b.image_id;
  });
  std::vector<ScoredCandidate> taken;
  for (const auto& c : ranked) {
    if (taken.size() >= b_c) break;
    if (claimed.contains(c.image_id)) continue;
    claimed.insert(c.image_id);
    taken.push_back(c);
  }
  return taken;
}

// Unweighted sum of classification entropies over an image's detections.
inline double entropy_baseline_score(std::span<const Detection> image_dets) {
  double s = 0.0;
  for (const auto& d : image_dets) s += class_entropy(d);
  return s;
}

struct RoundInputs {
  GroundTruthSet ground_truth;  // annotations of the labelled pool
  DetectionDump labelled;
  DetectionDump unlabelled;
  EmbeddingStore embeddings;
};

// Everything a round computes, for auditing and diagnostics.
struct RoundResult {
  SelectionManifest manifest;
  ClassifierSet models;
  std::vector<ClassStats> stats;
  BudgetPlan plan;
  std::vector<InstanceScore> scores;
  std::vector<std::vector<ScoredCandidate>> scored;  // per class, shortlist order
};

namespace detail {

inline void check_pool(const DetectionDump& dump, const std::set<ImageId>& pool,
                       const char* name) {
  for (auto id : dump.images) {
    if (!pool.contains(id)) {
      throw ValidationError(std::string(name) + " dump image " + std::to_string(id) +
                            " is not in the " + name + " pool");
    }
  }
  for (const auto& d : dump.detections) {
    if (!pool.contains(d.image_id)) {
      throw ValidationError(std::string(name) + " detection on image " +
                            std::to_string(d.image_id) + " outside the " + name + " pool");
    }
  }
}

}  // namespace detail

// Selection on pools whose detections already carry pre-NMS counts, with TP
// labels on the labelled side.
inline RoundResult select_round(std::span<const Detection> labelled,
                                std::span<const Detection> unlabelled, std::size_t num_classes,
                                const EmbeddingStore& embeddings, const SelectionConfig& cfg,
                                const RoundState& state) {
  RoundResult res;
  res.stats = compute_class_ratios(labelled, unlabelled, num_classes);
  res.models = train_classifiers(labelled, num_classes, cfg.classifier);
  res.scores = score_instances(unlabelled, res.models);
  const auto capacity = image_capacity(unlabelled, num_classes);
  res.plan = allocate_budgets(res.stats, capacity, state.budget);
  const auto shortlists = shortlist_candidates(res.scores, res.plan);

  std::vector<double> ratios(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) ratios[c] = res.stats[c].r;
  const auto by_image = group_by_image(unlabelled);

  res.scored.resize(num_classes);
  parallel_for(num_classes, [&](std::size_t c) {
    const auto& list = shortlists[c];
    const auto signals = guide_signals(list, by_image, ratios, embeddings);
    auto& out = res.scored[c];
    out.resize(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
      out[i] = ScoredCandidate{list[i].image_id, list[i].instance, list[i].lius, signals[i],
                               combine_score(list[i].lius, signals[i], cfg)};
    }
  });

  auto& m = res.manifest;
  m.round = state.round;
  m.budget = state.budget;
  m.per_class.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& pc = m.per_class[c];
    pc.class_id = static_cast<ClassId>(c);
    pc.n_l = res.stats[c].n_l;
    pc.n_u = res.stats[c].n_u;
    pc.r = res.stats[c].r;
    pc.b = res.plan.per_class[c];
  }
  std::set<ImageId> claimed;
  for (ClassId c : selection_order(res.stats)) {
    auto& pc = m.per_class[c];
    for (const auto& s : select_top(res.scored[c], pc.b, claimed)) {
      pc.selected.push_back(SelectedImage{s.image_id, s.instance, s.lius, s.signals.cwie,
                                          s.signals.rcdi, s.signals.rcsp, s.score});
    }
    pc.deficit = pc.b - pc.selected.size();
    std::sort(pc.selected.begin(), pc.selected.end(),
              [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  }
  return res;
}

// Fills pre-NMS counts on both pools and TP/FP labels on the labelled pool.
inline void prepare_pools(RoundInputs& in, const SelectionConfig& cfg) {
  assign_pre_nms_counts(in.labelled, cfg.iou_prenms);
  assign_pre_nms_counts(in.unlabelled, cfg.iou_prenms);
  label_tp_fp(in.labelled.detections, in.ground_truth, cfg.iou_tp);
}

// One full round from raw inference outputs: proposal assignment, TP/FP
// labelling, classifier training, LIUS, budgeting, shortlists, image signals,
// score fusion and per-class selection with cross-class deduplication.
inline RoundResult run_round_detailed(RoundInputs in, const SelectionConfig& cfg,
                                      const RoundState& state) {
  if (in.labelled.classes != in.unlabelled.classes) {
    throw ValidationError("labelled and unlabelled dumps declare different class lists");
  }
  if (!in.ground_truth.classes.empty() && in.ground_truth.classes != in.labelled.classes) {
    throw ValidationError("ground truth and detection dumps declare different class lists");
  }
  detail::check_pool(in.labelled, state.labelled, "labelled");
  detail::check_pool(in.unlabelled, state.unlabelled, "unlabelled");
  prepare_pools(in, cfg);
  return select_round(in.labelled.detections, in.unlabelled.detections,
                      in.labelled.classes.size(), in.embeddings, cfg, state);
}

inline SelectionManifest run_round(RoundInputs in, const SelectionConfig& cfg,
                                   const RoundState& state) {
  return run_round_detailed(std::move(in), cfg, state).manifest;
}

// L <- L + S, U <- U - S, round + 1.
inline RoundState update_pools(const RoundState& state, const SelectionManifest& manifest) {
  RoundState next = state;
  const auto ids = manifest.selected_ids();
  for (auto id : ids) {
    if (!next.unlabelled.contains(id)) {
      throw ValidationError("selected image " + std::to_string(id) + " is not in the unlabelled pool");
    }
    next.unlabelled.erase(id);
    next.labelled.insert(id);
  }
  next.round = state.round + 1;
  next.history.push_back(ids);
  return next;
}

}  // namespace pal
