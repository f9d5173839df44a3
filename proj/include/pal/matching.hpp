#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pal/types.hpp"

namespace pal {

// Intersection over union in continuous coordinates (no +1 pixel convention).
inline double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw ValidationError("iou: degenerate box");
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  const double area_a = ((a.x + a.w) - a.x) * ((a.y + a.h) - a.y);
  const double area_b = ((b.x + b.w) - b.x) * ((b.y + b.h) - b.y);
  const double uni = area_a + area_b - inter;
  return std::min(1.0, inter / uni);
}

// Assigns each proposal to the single final box it overlaps most, provided
// that overlap reaches `threshold`. Equal overlaps go to the lower index.
// Returns one count per final box; the counts partition the assigned proposals.
inline std::vector<std::uint32_t> assign_pre_nms_counts(std::span<const Box> finals,
                                                        std::span<const Box> proposals,
                                                        double threshold) {
  std::vector<std::uint32_t> counts(finals.size(), 0);
  for (const Box& p : proposals) {
    double best = -1.0;
    std::size_t best_idx = finals.size();
    for (std::size_t i = 0; i < finals.size(); ++i) {
      const double v = iou(finals[i], p);
      if (v > best) {
        best = v;
        best_idx = i;
      }
    }
    if (best_idx < finals.size() && best >= threshold) ++counts[best_idx];
  }
  return counts;
}

// Fills `pre_nms_count` on every detection of the dump by per-image
// assignment of its proposals. Images without proposals get zero counts.
inline void assign_pre_nms_counts(DetectionDump& dump, double threshold) {
  std::map<ImageId, std::vector<std::size_t>> dets_by_image;
  std::map<ImageId, std::vector<Box>> props_by_image;
  for (std::size_t i = 0; i < dump.detections.size(); ++i) {
    dets_by_image[dump.detections[i].image_id].push_back(i);
  }
  for (const auto& p : dump.proposals) props_by_image[p.image_id].push_back(p.box);

  static const std::vector<Box> kNone;
  for (const auto& [image, idx] : dets_by_image) {
    std::vector<Box> finals;
    finals.reserve(idx.size());
    for (auto i : idx) finals.push_back(dump.detections[i].box);
    auto it = props_by_image.find(image);
    const auto& props = it == props_by_image.end() ? kNone : it->second;
    auto counts = assign_pre_nms_counts(finals, props, threshold);
    for (std::size_t k = 0; k < idx.size(); ++k) dump.detections[idx[k]].pre_nms_count = counts[k];
  }
}

// Greedy true/false positive labelling.
//
// Per (image, class), detections are visited by descending confidence with
// ties going to the lower input index. Each one claims the unmatched
// same-class ground-truth box of highest IoU if that IoU reaches `threshold`
// (equal IoUs go to the earlier annotation); otherwise it is a false positive.
inline void label_tp_fp(std::span<Detection> detections, const GroundTruthSet& gt,
                        double threshold) {
  std::map<ImageId, bool> known;
  for (const auto& im : gt.images) known[im.id] = true;

  std::map<std::pair<ImageId, ClassId>, std::vector<std::size_t>> gt_groups;
  for (std::size_t i = 0; i < gt.annotations.size(); ++i) {
    const auto& a = gt.annotations[i];
    gt_groups[{a.image_id, a.class_id}].push_back(i);
  }
  std::map<std::pair<ImageId, ClassId>, std::vector<std::size_t>> det_groups;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const auto& d = detections[i];
    if (!known.contains(d.image_id)) {
      throw ValidationError("label_tp_fp: detection references unknown image " +
                            std::to_string(d.image_id));
    }
    det_groups[{d.image_id, d.class_id}].push_back(i);
  }

  for (auto& [key, order] : det_groups) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return detections[a].confidence > detections[b].confidence;
    });
    auto g = gt_groups.find(key);
    if (g == gt_groups.end()) {
      for (auto i : order) detections[i].tp = false;
      continue;
    }
    const auto& boxes = g->second;
    std::vector<bool> used(boxes.size(), false);
    for (auto i : order) {
      double best = -1.0;
      std::size_t best_k = boxes.size();
      for (std::size_t k = 0; k < boxes.size(); ++k) {
        if (used[k]) continue;
        const double v = iou(detections[i].box, gt.annotations[boxes[k]].box);
        if (v > best) {
          best = v;
          best_k = k;
        }
      }
      const bool hit = best_k < boxes.size() && best >= threshold;
      if (hit) used[best_k] = true;
      detections[i].tp = hit;
    }
  }
}

}  // namespace pal
