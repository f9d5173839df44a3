#pragma once

// Synthetic detection worlds and multi-round selection campaigns.
//
// A world is a set of images with class-frequency-weighted ground-truth boxes
// and clustered embeddings. A simulated detector finds each box with a
// per-class skill probability; its true positives get higher confidence and
// denser proposal clusters as skill grows, while false positives drift toward
// low confidence and sparse proposals. Labelling more instances of a class
// raises its skill along a saturating curve, standing in for retraining.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pal/config.hpp"
#include "pal/embeddings.hpp"
#include "pal/engine.hpp"
#include "pal/io.hpp"
#include "pal/matching.hpp"
#include "pal/types.hpp"

namespace pal::sim {

struct WorldParams {
  std::size_t num_images = 2000;
  std::size_t num_validation = 1000;  // held-out images for classifier accuracy
  std::size_t num_classes = 10;
  double class_exponent = 1.0;  // class k has weight (k + 1)^-exponent
  double extra_objects_mean = 2.0;  // objects per image = 1 + Poisson(mean)
  double image_width = 640.0;
  double image_height = 480.0;

  // Confidence of true positives rises with skill, that of false positives falls.
  double tp_conf_low = 0.40;
  double tp_conf_high = 0.85;
  double tp_conf_sd = 0.12;
  double fp_conf_high = 0.60;
  double fp_conf_low = 0.30;
  double fp_conf_sd = 0.10;

  double tp_proposals_low = 3.0;
  double tp_proposals_high = 16.0;
  double fp_proposals_mean = 3.0;
  double fp_per_image = 1.0;
  double box_jitter = 0.03;       // detection vs ground truth, relative to size
  double proposal_jitter = 0.08;  // proposals vs their detection

  std::size_t embedding_dim = 16;
  std::size_t clusters = 8;
  double cluster_spread = 0.35;

  // skill_c = base + gain * (1 - exp(-rate * labelled instances of c))
  double skill_base = 0.25;
  double skill_gain = 0.70;
  double skill_rate = 0.03;

  double initial_fraction = 0.05;

  friend bool operator==(const WorldParams&, const WorldParams&) = default;
};

inline void validate(const WorldParams& p) {
  auto fail = [](const std::string& m) { throw ValidationError("world params: " + m); };
  if (p.num_images == 0 || p.num_classes == 0 || p.embedding_dim == 0 || p.clusters == 0) {
    fail("counts must be positive");
  }
  if (!(p.class_exponent >= 0.0)) fail("class_exponent must be >= 0");
  if (!(p.extra_objects_mean >= 0.0) || !(p.fp_per_image >= 0.0)) fail("rates must be >= 0");
  if (!(p.image_width > 0.0 && p.image_height > 0.0)) fail("image size must be positive");
  for (double v : {p.tp_conf_low, p.tp_conf_high, p.fp_conf_low, p.fp_conf_high}) {
    if (!(v >= 0.0 && v <= 1.0)) fail("confidence means must lie in [0,1]");
  }
  if (!(p.tp_conf_sd >= 0.0 && p.fp_conf_sd >= 0.0)) fail("confidence spreads must be >= 0");
  if (!(p.tp_proposals_low >= 0.0 && p.tp_proposals_high >= 0.0 && p.fp_proposals_mean >= 0.0)) {
    fail("proposal means must be >= 0");
  }
  if (!(p.box_jitter >= 0.0 && p.proposal_jitter >= 0.0)) fail("jitter must be >= 0");
  if (!(p.skill_base >= 0.0 && p.skill_gain >= 0.0 && p.skill_base + p.skill_gain <= 1.0)) {
    fail("skill_base, skill_gain >= 0 with base + gain <= 1");
  }
  if (!(p.skill_rate >= 0.0)) fail("skill_rate must be >= 0");
  if (!(p.initial_fraction > 0.0 && p.initial_fraction < 1.0)) fail("initial_fraction must lie in (0,1)");
}

inline WorldParams parse_world_params(const nlohmann::json& j) {
  WorldParams p;
  if (!j.is_object()) throw ValidationError("world params must be an object");
  auto real = [&](const std::string& k, double& out) {
    if (j.contains(k)) {
      if (!j[k].is_number()) throw ValidationError("world key '" + k + "' must be a number");
      out = j[k].get<double>();
    }
  };
  auto count = [&](const std::string& k, std::size_t& out) {
    if (j.contains(k)) {
      if (!j[k].is_number_unsigned()) throw ValidationError("world key '" + k + "' must be a non-negative integer");
      out = j[k].get<std::size_t>();
    }
  };
  static const std::set<std::string> known = {
      "num_images", "num_validation", "num_classes", "class_exponent", "extra_objects_mean",
      "image_width", "image_height", "tp_conf_low", "tp_conf_high", "tp_conf_sd", "fp_conf_high",
      "fp_conf_low", "fp_conf_sd", "tp_proposals_low", "tp_proposals_high", "fp_proposals_mean",
      "fp_per_image", "box_jitter", "proposal_jitter", "embedding_dim", "clusters",
      "cluster_spread", "skill_base", "skill_gain", "skill_rate", "initial_fraction"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ValidationError("unknown world key '" + k + "'");
  }
  count("num_images", p.num_images);
  count("num_validation", p.num_validation);
  count("num_classes", p.num_classes);
  real("class_exponent", p.class_exponent);
  real("extra_objects_mean", p.extra_objects_mean);
  real("image_width", p.image_width);
  real("image_height", p.image_height);
  real("tp_conf_low", p.tp_conf_low);
  real("tp_conf_high", p.tp_conf_high);
  real("tp_conf_sd", p.tp_conf_sd);
  real("fp_conf_high", p.fp_conf_high);
  real("fp_conf_low", p.fp_conf_low);
  real("fp_conf_sd", p.fp_conf_sd);
  real("tp_proposals_low", p.tp_proposals_low);
  real("tp_proposals_high", p.tp_proposals_high);
  real("fp_proposals_mean", p.fp_proposals_mean);
  real("fp_per_image", p.fp_per_image);
  real("box_jitter", p.box_jitter);
  real("proposal_jitter", p.proposal_jitter);
  count("embedding_dim", p.embedding_dim);
  count("clusters", p.clusters);
  real("cluster_spread", p.cluster_spread);
  real("skill_base", p.skill_base);
  real("skill_gain", p.skill_gain);
  real("skill_rate", p.skill_rate);
  real("initial_fraction", p.initial_fraction);
  validate(p);
  return p;
}

inline nlohmann::ordered_json world_params_json(const WorldParams& p) {
  nlohmann::ordered_json j;
  j["num_images"] = p.num_images;
  j["num_validation"] = p.num_validation;
  j["num_classes"] = p.num_classes;
  j["class_exponent"] = p.class_exponent;
  j["extra_objects_mean"] = p.extra_objects_mean;
  j["image_width"] = p.image_width;
  j["image_height"] = p.image_height;
  j["tp_conf_low"] = p.tp_conf_low;
  j["tp_conf_high"] = p.tp_conf_high;
  j["tp_conf_sd"] = p.tp_conf_sd;
  j["fp_conf_high"] = p.fp_conf_high;
  j["fp_conf_low"] = p.fp_conf_low;
  j["fp_conf_sd"] = p.fp_conf_sd;
  j["tp_proposals_low"] = p.tp_proposals_low;
  j["tp_proposals_high"] = p.tp_proposals_high;
  j["fp_proposals_mean"] = p.fp_proposals_mean;
  j["fp_per_image"] = p.fp_per_image;
  j["box_jitter"] = p.box_jitter;
  j["proposal_jitter"] = p.proposal_jitter;
  j["embedding_dim"] = p.embedding_dim;
  j["clusters"] = p.clusters;
  j["cluster_spread"] = p.cluster_spread;
  j["skill_base"] = p.skill_base;
  j["skill_gain"] = p.skill_gain;
  j["skill_rate"] = p.skill_rate;
  j["initial_fraction"] = p.initial_fraction;
  return j;
}

// splitmix64 finalizer; derives independent stream seeds from tuples.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return step(step(step(a) ^ b) ^ c);
}

struct World {
  WorldParams params;
  std::vector<std::string> classes;
  std::vector<double> class_weights;  // normalized sampling frequencies
  GroundTruthSet ground_truth;        // pool images
  GroundTruthSet validation;          // held-out images
  EmbeddingStore embeddings;          // pool images

  std::vector<ImageId> pool_ids() const {
    std::vector<ImageId> ids;
    ids.reserve(ground_truth.images.size());
    for (const auto& im : ground_truth.images) ids.push_back(im.id);
    return ids;
  }
};

// Least frequent class; the highest id wins ties.
inline ClassId rarest_class(const World& w) {
  ClassId best = 0;
  for (ClassId c = 1; c < w.class_weights.size(); ++c) {
    if (w.class_weights[c] <= w.class_weights[best]) best = c;
  }
  return best;
}

// Builds a world reproducibly from (params, seed). Pool images get ids
// 1..num_images, validation images the ids after them.
inline World generate_world(const WorldParams& params, std::uint64_t seed) {
  validate(params);
  World w;
  w.params = params;
  const std::size_t nc = params.num_classes;
  for (std::size_t c = 0; c < nc; ++c) w.classes.push_back("class" + std::to_string(c));
  w.class_weights.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    w.class_weights[c] = std::pow(static_cast<double>(c + 1), -params.class_exponent);
  }
  const double total = std::accumulate(w.class_weights.begin(), w.class_weights.end(), 0.0);
  for (auto& v : w.class_weights) v /= total;
  w.ground_truth.classes = w.classes;
  w.validation.classes = w.classes;
  w.embeddings.dim = static_cast<std::uint32_t>(params.embedding_dim);

  std::mt19937_64 rng(mix_seed(seed, 0x5eed));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<float>> centers(params.clusters, std::vector<float>(params.embedding_dim));
  for (auto& c : centers) {
    for (auto& v : c) v = static_cast<float>(normal(rng));
  }

  std::discrete_distribution<std::size_t> pick_class(w.class_weights.begin(), w.class_weights.end());
  std::uniform_int_distribution<std::size_t> pick_cluster(0, params.clusters - 1);
  std::poisson_distribution<int> extra(params.extra_objects_mean);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double min_side = 24.0;
  const double max_w = std::max(min_side + 1.0, std::min(160.0, params.image_width));
  const double max_h = std::max(min_side + 1.0, std::min(160.0, params.image_height));

  std::uint64_t ann_id = 1;
  const std::size_t n_all = params.num_images + params.num_validation;
  for (std::size_t i = 0; i < n_all; ++i) {
    const ImageId id = i + 1;
    const bool pool = i < params.num_images;
    auto& gt = pool ? w.ground_truth : w.validation;
    gt.images.push_back({id, static_cast<std::uint32_t>(params.image_width),
                         static_cast<std::uint32_t>(params.image_height)});
    const auto cluster = pick_cluster(rng);
    const int objects = 1 + extra(rng);
    for (int k = 0; k < objects; ++k) {
      Annotation a;
      a.id = ann_id++;
      a.image_id = id;
      a.class_id = static_cast<ClassId>(pick_class(rng));
      a.box.w = min_side + unit(rng) * (max_w - min_side);
      a.box.h = min_side + unit(rng) * (max_h - min_side);
      a.box.x = unit(rng) * std::max(0.0, params.image_width - a.box.w);
      a.box.y = unit(rng) * std::max(0.0, params.image_height - a.box.h);
      gt.annotations.push_back(a);
    }
    if (pool) {
      std::vector<float> e(params.embedding_dim);
      for (std::size_t d = 0; d < e.size(); ++d) {
        e[d] = centers[cluster][d] + static_cast<float>(params.cluster_spread * normal(rng));
      }
      w.embeddings.rows.emplace(id, std::move(e));
    }
  }
  return w;
}

inline double skill_for(const WorldParams& p, std::size_t labelled_instances) {
  return p.skill_base +
         p.skill_gain * (1.0 - std::exp(-p.skill_rate * static_cast<double>(labelled_instances)));
}

namespace detail {

inline double clamp_conf(double v) { return std::clamp(v, 0.01, 0.995); }

// Box perturbed by a normal jitter relative to its size, truncated at 3 sigma.
inline Box jitter_box(const Box& b, double rel, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  auto t = [&] { return std::clamp(n(rng), -3.0, 3.0) * rel; };
  Box o = b;
  o.x += t() * b.w;
  o.y += t() * b.h;
  o.w = std::max(1.0, b.w * (1.0 + t()));
  o.h = std::max(1.0, b.h * (1.0 + t()));
  return o;
}

inline std::vector<double> class_distribution(ClassId c, double conf, std::size_t nc,
                                              std::mt19937_64& rng) {
  if (nc < 2) return {};
  std::exponential_distribution<double> e(1.0);
  std::vector<double> rest(nc, 0.0);
  double s = 0.0;
  for (std::size_t k = 0; k < nc; ++k) {
    if (k == c) continue;
    rest[k] = e(rng) + 1e-9;
    s += rest[k];
  }
  std::vector<double> p(nc);
  for (std::size_t k = 0; k < nc; ++k) p[k] = k == c ? conf : (1.0 - conf) * rest[k] / s;
  return p;
}

}  // namespace detail

// Runs the simulated detector over `images` of `gt`. Every image id becomes
// part of the dump's pool index. Output depends only on (seed, image id,
// skill), not on which other images are in the batch.
inline DetectionDump simulate_detector(const World& world, const GroundTruthSet& gt,
                                       std::span<const ImageId> images,
                                       std::span<const double> skill, std::uint64_t seed) {
  const auto& p = world.params;
  const std::size_t nc = world.classes.size();
  if (skill.size() != nc) throw std::invalid_argument("simulate_detector: one skill per class");
  for (double s : skill) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("simulate_detector: skill outside [0,1]");
  }
  std::map<ImageId, std::vector<const Annotation*>> anns;
  for (const auto& a : gt.annotations) anns[a.image_id].push_back(&a);

  DetectionDump dump;
  dump.classes = world.classes;
  std::discrete_distribution<std::size_t> pick_class(world.class_weights.begin(), world.class_weights.end());
  for (ImageId id : images) {
    dump.images.push_back(id);
    std::mt19937_64 rng(mix_seed(seed, id, 0xde7ec7));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto emit = [&](ClassId c, const Box& box, double conf, int proposals, double jitter) {
      Detection d;
      d.image_id = id;
      d.class_id = c;
      d.box = box;
      d.confidence = conf;
      d.class_probs = detail::class_distribution(c, conf, nc, rng);
      dump.detections.push_back(std::move(d));
      for (int k = 0; k < proposals; ++k) {
        dump.proposals.push_back({id, detail::jitter_box(box, jitter, rng), conf * (0.3 + 0.7 * unit(rng))});
      }
    };

    if (auto it = anns.find(id); it != anns.end()) {
      for (const Annotation* a : it->second) {
        const double s = skill[a->class_id];
        if (!(unit(rng) < s)) continue;
        const double mean = p.tp_conf_low + (p.tp_conf_high - p.tp_conf_low) * s;
        const double conf = detail::clamp_conf(mean + p.tp_conf_sd * normal(rng));
        std::poisson_distribution<int> props(p.tp_proposals_low + (p.tp_proposals_high - p.tp_proposals_low) * s);
        const Box box = detail::jitter_box(a->box, p.box_jitter, rng);
        emit(a->class_id, box, conf, 1 + props(rng), p.proposal_jitter);
      }
    }
    std::poisson_distribution<int> fp_count(p.fp_per_image);
    const int fps = p.fp_per_image > 0.0 ? fp_count(rng) : 0;
    for (int k = 0; k < fps; ++k) {
      const auto c = static_cast<ClassId>(pick_class(rng));
      const double s = skill[c];
      const double mean = p.fp_conf_high - (p.fp_conf_high - p.fp_conf_low) * s;
      const double conf = detail::clamp_conf(mean + p.fp_conf_sd * normal(rng));
      Box box;
      box.w = 24.0 + unit(rng) * 100.0;
      box.h = 24.0 + unit(rng) * 100.0;
      box.x = unit(rng) * std::max(0.0, p.image_width - box.w);
      box.y = unit(rng) * std::max(0.0, p.image_height - box.h);
      std::poisson_distribution<int> props(p.fp_proposals_mean);
      emit(c, box, conf, props(rng), 2.0 * p.proposal_jitter);
    }
  }
  return dump;
}

enum class Strategy { random, entropy, pal };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::entropy: return "entropy";
    case Strategy::pal: return "pal";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "random") return Strategy::random;
  if (s == "entropy") return Strategy::entropy;
  if (s == "pal") return Strategy::pal;
  throw UsageError("unknown strategy '" + s + "' (expected random, entropy, pal or all)");
}

struct RoundRecord {
  std::uint32_t round = 0;
  std::size_t selected = 0;
  std::size_t labelled_images = 0;
  double labelled_fraction = 0.0;
  std::vector<std::size_t> labelled_per_class;  // ground-truth instances in L
  double proxy = 0.0;        // class-averaged recall of the simulated detector
  double rare_share = 0.0;   // rarest-class share of labelled instances
  double rare_clc_accuracy = 0.0;  // held-out TP/FP accuracy of the rare-class classifier
  std::size_t rare_clc_samples = 0;
  std::vector<ImageId> selected_ids;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct StrategyCurve {
  Strategy strategy = Strategy::random;
  std::vector<RoundRecord> rounds;

  friend bool operator==(const StrategyCurve&, const StrategyCurve&) = default;
};

struct CampaignReport {
  std::uint64_t seed = 0;
  std::size_t rounds = 0;
  std::size_t budget = 0;
  WorldParams params;
  std::vector<StrategyCurve> curves;

  friend bool operator==(const CampaignReport&, const CampaignReport&) = default;
};

struct CampaignOptions {
  std::size_t rounds = 4;
  std::size_t budget = 100;
  std::uint64_t seed = 0;
  SelectionConfig selection;
  std::optional<std::filesystem::path> emit_dir;  // per-round input files when set
};

namespace detail {

inline GroundTruthSet restrict_gt(const GroundTruthSet& gt, const std::set<ImageId>& ids) {
  GroundTruthSet out;
  out.classes = gt.classes;
  for (const auto& im : gt.images) {
    if (ids.contains(im.id)) out.images.push_back(im);
  }
  for (const auto& a : gt.annotations) {
    if (ids.contains(a.image_id)) out.annotations.push_back(a);
  }
  return out;
}

inline DetectionDump restrict_dump(const DetectionDump& dump, const std::set<ImageId>& ids) {
  DetectionDump out;
  out.classes = dump.classes;
  for (auto id : dump.images) {
    if (ids.contains(id)) out.images.push_back(id);
  }
  for (const auto& d : dump.detections) {
    if (ids.contains(d.image_id)) out.detections.push_back(d);
  }
  for (const auto& p : dump.proposals) {
    if (ids.contains(p.image_id)) out.proposals.push_back(p);
  }
  return out;
}

inline std::vector<std::size_t> labelled_instances(const World& w, const std::set<ImageId>& labelled) {
  std::vector<std::size_t> n(w.classes.size(), 0);
  for (const auto& a : w.ground_truth.annotations) {
    if (labelled.contains(a.image_id)) ++n[a.class_id];
  }
  return n;
}

// Fraction of the rare class's held-out detections whose TP/FP status the
// routed classifier gets right (p >= 0.5 predicts TP).
inline std::pair<double, std::size_t> rare_accuracy(const World& w, const ClassifierSet& models,
                                                    std::span<const double> skill,
                                                    std::uint64_t seed, const SelectionConfig& cfg) {
  std::vector<ImageId> ids;
  for (const auto& im : w.validation.images) ids.push_back(im.id);
  if (ids.empty()) return {0.0, 0};
  auto dump = simulate_detector(w, w.validation, ids, skill, seed);
  assign_pre_nms_counts(dump, cfg.iou_prenms);
  label_tp_fp(dump.detections, w.validation, cfg.iou_tp);
  const ClassId rare = rarest_class(w);
  const auto* model = models.route(rare);
  std::size_t total = 0, correct = 0;
  for (const auto& d : dump.detections) {
    if (d.class_id != rare) continue;
    ++total;
    const bool predicted = model ? predict_tp_probability(*model, d.pre_nms_count.value_or(0), d.confidence) >= 0.5
                                 : true;
    if (predicted == *d.tp) ++correct;
  }
  return {total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0, total};
}

}  // namespace detail

// Runs `rounds` selection rounds with one strategy. The initial labelled set
// depends only on the seed, so strategies run with equal seeds start from the
// same pools.
inline StrategyCurve run_campaign(const World& world, Strategy strategy, const CampaignOptions& opt) {
  const auto& p = world.params;
  const auto ids = world.pool_ids();
  const std::size_t nc = world.classes.size();

  std::vector<ImageId> shuffled = ids;
  std::mt19937_64 init_rng(mix_seed(opt.seed, 0x1417));
  std::shuffle(shuffled.begin(), shuffled.end(), init_rng);
  const auto initial = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(p.initial_fraction * ids.size())));

  RoundState state;
  state.budget = opt.budget;
  state.labelled.insert(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(initial));
  state.unlabelled.insert(shuffled.begin() + static_cast<std::ptrdiff_t>(initial), shuffled.end());
  if (opt.budget * opt.rounds > state.unlabelled.size()) {
    throw ValidationError("campaign needs budget * rounds <= unlabelled pool size");
  }

  if (opt.emit_dir) {
    std::filesystem::create_directories(*opt.emit_dir);
    io::write_embeddings(world.embeddings, *opt.emit_dir / "embeddings.bin");
    io::write_text(*opt.emit_dir / "config.json", io::config_to_json(opt.selection).dump(2) + "\n");
  }

  StrategyCurve curve;
  curve.strategy = strategy;
  for (std::size_t r = 1; r <= opt.rounds; ++r) {
    const auto counts = detail::labelled_instances(world, state.labelled);
    std::vector<double> skill(nc);
    for (std::size_t c = 0; c < nc; ++c) skill[c] = skill_for(p, counts[c]);

    const std::uint64_t det_seed = mix_seed(opt.seed, r, 0xde7);
    const auto all = simulate_detector(world, world.ground_truth, ids, skill, det_seed);
    RoundInputs in;
    in.ground_truth = detail::restrict_gt(world.ground_truth, state.labelled);
    in.labelled = detail::restrict_dump(all, state.labelled);
    in.unlabelled = detail::restrict_dump(all, state.unlabelled);
    in.embeddings = world.embeddings;

    if (opt.emit_dir) {
      const auto dir = *opt.emit_dir / (to_string(strategy) + "_round" + std::to_string(r));
      std::filesystem::create_directories(dir);
      io::write_ground_truth(in.ground_truth, dir / "labelled.gt");
      io::write_detection_dump(in.labelled, dir / "labelled.dets", false);
      io::write_proposals(in.labelled, dir / "labelled.props");
      io::write_detection_dump(in.unlabelled, dir / "unlabelled.dets", false);
      io::write_proposals(in.unlabelled, dir / "unlabelled.props");
      io::write_round_state(state, dir / "state.json");
    }

    std::vector<ImageId> chosen;
    ClassifierSet models;
    if (strategy == Strategy::pal) {
      auto res = run_round_detailed(in, opt.selection, state);
      chosen = res.manifest.selected_ids();
      models = std::move(res.models);
      if (opt.emit_dir) {
        io::write_selection_manifest(res.manifest, *opt.emit_dir / ("pal_round" + std::to_string(r)) / "manifest.json");
      }
    } else {
      prepare_pools(in, opt.selection);
      models = train_classifiers(in.labelled.detections, nc, opt.selection.classifier);
      std::vector<ImageId> pool(state.unlabelled.begin(), state.unlabelled.end());
      if (strategy == Strategy::random) {
        std::mt19937_64 rng(mix_seed(opt.seed, r, 0x4a2d));
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(std::min(pool.size(), opt.budget));
        chosen = pool;
      } else {
        const auto by_image = group_by_image(in.unlabelled.detections);
        std::vector<std::pair<double, ImageId>> scored;
        for (auto id : pool) {
          auto it = by_image.find(id);
          scored.emplace_back(it == by_image.end() ? 0.0 : entropy_baseline_score(it->second), id);
        }
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
          if (a.first != b.first) return a.first > b.first;
          return a.second < b.second;
        });
        for (std::size_t k = 0; k < scored.size() && k < opt.budget; ++k) chosen.push_back(scored[k].second);
      }
      std::sort(chosen.begin(), chosen.end());
    }

    const auto [acc, samples] = detail::rare_accuracy(world, models, skill, mix_seed(opt.seed, r, 0x7a1), opt.selection);

    // Apply the selection through the same pool update the engine uses.
    SelectionManifest m;
    m.round = state.round;
    m.per_class.resize(1);
    for (auto id : chosen) m.per_class[0].selected.push_back(SelectedImage{id});
    state = update_pools(state, m);

    RoundRecord rec;
    rec.round = static_cast<std::uint32_t>(r);
    rec.selected = chosen.size();
    rec.labelled_images = state.labelled.size();
    rec.labelled_fraction = static_cast<double>(state.labelled.size()) / static_cast<double>(ids.size());
    rec.labelled_per_class = detail::labelled_instances(world, state.labelled);
    double proxy = 0.0;
    for (auto n : rec.labelled_per_class) proxy += skill_for(p, n);
    rec.proxy = proxy / static_cast<double>(nc);
    const auto total = std::accumulate(rec.labelled_per_class.begin(), rec.labelled_per_class.end(), std::size_t{0});
    rec.rare_share = total ? static_cast<double>(rec.labelled_per_class[rarest_class(world)]) / static_cast<double>(total) : 0.0;
    rec.rare_clc_accuracy = acc;
    rec.rare_clc_samples = samples;
    rec.selected_ids = std::move(chosen);
    curve.rounds.push_back(std::move(rec));
  }
  return curve;
}

// Runs every requested strategy on one world.
inline CampaignReport run_campaigns(const World& world, std::span<const Strategy> strategies,
                                    const CampaignOptions& opt) {
  CampaignReport rep;
  rep.seed = opt.seed;
  rep.rounds = opt.rounds;
  rep.budget = opt.budget;
  rep.params = world.params;
  rep.curves.resize(strategies.size());
  parallel_for(strategies.size(), [&](std::size_t i) { rep.curves[i] = run_campaign(world, strategies[i], opt); });
  return rep;
}

inline std::string format_campaign_report(const CampaignReport& rep) {
  nlohmann::ordered_json j;
  j["schema"] = "pal.campaign/1";
  j["seed"] = rep.seed;
  j["rounds"] = rep.rounds;
  j["budget"] = rep.budget;
  j["world"] = world_params_json(rep.params);
  j["curves"] = nlohmann::ordered_json::array();
  for (const auto& c : rep.curves) {
    nlohmann::ordered_json cj;
    cj["strategy"] = to_string(c.strategy);
    cj["rounds"] = nlohmann::ordered_json::array();
    for (const auto& r : c.rounds) {
      nlohmann::ordered_json rj;
      rj["round"] = r.round;
      rj["selected"] = r.selected;
      rj["labelled_images"] = r.labelled_images;
      rj["labelled_fraction"] = r.labelled_fraction;
      rj["labelled_per_class"] = r.labelled_per_class;
      rj["proxy"] = r.proxy;
      rj["rare_share"] = r.rare_share;
      rj["rare_clc_accuracy"] = r.rare_clc_accuracy;
      rj["rare_clc_samples"] = r.rare_clc_samples;
      rj["selected_ids"] = r.selected_ids;
      cj["rounds"].push_back(std::move(rj));
    }
    j["curves"].push_back(std::move(cj));
  }
  return j.dump(1) + "\n";
}

inline CampaignReport parse_campaign_report(std::string_view text, const std::string& origin) {
  try {
    const auto j = nlohmann::json::parse(text);
    CampaignReport rep;
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.rounds = j.at("rounds").get<std::size_t>();
    rep.budget = j.at("budget").get<std::size_t>();
    rep.params = parse_world_params(j.at("world"));
    for (const auto& cj : j.at("curves")) {
      StrategyCurve c;
      c.strategy = parse_strategy(cj.at("strategy").get<std::string>());
      for (const auto& rj : cj.at("rounds")) {
        RoundRecord r;
        r.round = rj.at("round").get<std::uint32_t>();
        r.selected = rj.at("selected").get<std::size_t>();
        r.labelled_images = rj.at("labelled_images").get<std::size_t>();
        r.labelled_fraction = rj.at("labelled_fraction").get<double>();
        r.labelled_per_class = rj.at("labelled_per_class").get<std::vector<std::size_t>>();
        r.proxy = rj.at("proxy").get<double>();
        r.rare_share = rj.at("rare_share").get<double>();
        r.rare_clc_accuracy = rj.at("rare_clc_accuracy").get<double>();
        r.rare_clc_samples = rj.at("rare_clc_samples").get<std::size_t>();
        r.selected_ids = rj.at("selected_ids").get<std::vector<ImageId>>();
        c.rounds.push_back(std::move(r));
      }
      rep.curves.push_back(std::move(c));
    }
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(origin + ": malformed campaign report: " + e.what());
  } catch (const UsageError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
}

}  // namespace pal::sim
