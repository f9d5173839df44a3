#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pal/embeddings.hpp"
#include "pal/lius.hpp"
#include "pal/types.hpp"

namespace pal {

// Detections grouped by image, each group in input order.
using ImageDetections = std::map<ImageId, std::vector<Detection>>;

inline ImageDetections group_by_image(std::span<const Detection> dets) {
  ImageDetections out;
  for (const auto& d : dets) out[d.image_id].push_back(d);
  return out;
}

// Shannon entropy (nats) of a detection's class distribution. Detectors that
// only report a top-1 confidence p contribute the two-point distribution
// (p, 1 - p).
inline double class_entropy(const Detection& d) {
  auto term = [](double q) { return q > 0.0 ? q * std::log(q) : 0.0; };
  if (d.class_probs.empty()) return -(term(d.confidence) + term(1.0 - d.confidence));
  double h = 0.0;
  for (double q : d.class_probs) h -= term(q);
  return h;
}

namespace detail {
inline double ratio_of(std::span<const double> ratios, ClassId c) {
  if (c >= ratios.size()) throw ValidationError("class id " + std::to_string(c) + " has no ratio");
  return ratios[c];
}
}  // namespace detail

// Class-weighted image entropy: sum over detections of r_c * H(p_i).
inline double cwie(std::span<const Detection> image_dets, std::span<const double> ratios) {
  double s = 0.0;
  for (const auto& d : image_dets) s += detail::ratio_of(ratios, d.class_id) * class_entropy(d);
  return s;
}

// Rare-class diversity index: sum of r_k over the distinct predicted classes.
inline double rcdi(std::span<const Detection> image_dets, std::span<const double> ratios) {
  std::set<ClassId> classes;
  for (const auto& d : image_dets) classes.insert(d.class_id);
  double s = 0.0;
  for (auto c : classes) s += detail::ratio_of(ratios, c);
  return s;
}

// Min-max scaling with the minimum pinned at 0: v / max(values).
inline std::vector<double> minmax_normalize(std::span<const double> values) {
  double mx = 0.0;
  for (double v : values) {
    if (!(v >= 0.0)) throw ValidationError("minmax_normalize: negative input");
    mx = std::max(mx, v);
  }
  std::vector<double> out(values.size(), 0.0);
  if (mx > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] / mx;
  }
  return out;
}

// Rank-conditioned similarity penalty over a list already ranked by LIUS.
// Rank 1 scores 1; every later image scores 1 - max(0, max cosine) against
// all images ranked above it, so only the lower-ranked of a similar pair is
// penalized.
inline std::vector<double> rcsp(std::span<const ImageId> ranked, const EmbeddingStore& emb) {
  std::vector<const std::vector<float>*> vecs;
  vecs.reserve(ranked.size());
  for (auto id : ranked) {
    const auto* v = emb.find(id);
    if (!v) throw ValidationError("missing embedding for image " + std::to_string(id));
    vecs.push_back(v);
  }
  std::vector<double> out(ranked.size(), 1.0);
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    double worst = 0.0;
    for (std::size_t m = 0; m < i; ++m) worst = std::max(worst, cosine_similarity(*vecs[i], *vecs[m]));
    out[i] = 1.0 - worst;
  }
  return out;
}

struct ImageSignals {
  ImageId image_id = 0;
  double cwie_raw = 0.0;
  double cwie = 0.0;  // normalized over the class candidate list
  double rcdi_raw = 0.0;
  double rcdi = 0.0;  // normalized over the class candidate list
  double rcsp = 1.0;
};

// All image-level signals for one class candidate list (ranked by LIUS).
// Normalization uses exactly this list.
inline std::vector<ImageSignals> guide_signals(std::span<const Candidate> candidates,
                                               const ImageDetections& by_image,
                                               std::span<const double> ratios,
                                               const EmbeddingStore& emb) {
  static const std::vector<Detection> kNone;
  std::vector<ImageSignals> out(candidates.size());
  std::vector<double> cw(candidates.size()), di(candidates.size());
  std::vector<ImageId> ids(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    ids[i] = candidates[i].image_id;
    auto it = by_image.find(ids[i]);
    const auto& dets = it == by_image.end() ? kNone : it->second;
    cw[i] = cwie(dets, ratios);
    di[i] = rcdi(dets, ratios);
  }
  const auto cwn = minmax_normalize(cw);
  const auto din = minmax_normalize(di);
  const auto pen = rcsp(ids, emb);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out[i] = ImageSignals{ids[i], cw[i], cwn[i], di[i], din[i], pen[i]};
  }
  return out;
}

}  // namespace pal
