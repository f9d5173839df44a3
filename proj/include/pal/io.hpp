#pragma once

// Readers and writers for every on-disk artifact.
//
// Ground truth, detection and proposal files are line-delimited: header
// lines `#schema <name> <version>` and `#classes <a,b,c>`, any other `#`
// line is a comment, then one JSON object per line tagged by "type":
//
//   {"type":"image","id":3,"width":640,"height":480}
//   {"type":"ann","id":7,"image_id":3,"class_id":1,"bbox":[x,y,w,h]}
//   {"type":"det","image_id":3,"class_id":1,"bbox":[x,y,w,h],"confidence":0.8,
//    "probs":[...],"pre_nms":12,"tp":true}
//   {"type":"prop","image_id":3,"bbox":[x,y,w,h],"confidence":0.4}
//
// Embeddings are binary: "PALEMB1\0", u32 dim, u32 count, then count records
// of (u64 image_id, dim x f32), all little-endian.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pal/config.hpp"
#include "pal/embeddings.hpp"
#include "pal/engine.hpp"
#include "pal/lius.hpp"
#include "pal/types.hpp"

namespace pal::io {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline constexpr std::string_view kGroundTruthSchema = "pal.groundtruth";
inline constexpr std::string_view kDetectionSchema = "pal.detections";
inline constexpr std::string_view kProposalSchema = "pal.proposals";
inline constexpr std::string_view kScoreSchema = "pal.scores";
inline constexpr int kRecordVersion = 1;
inline constexpr char kEmbeddingMagic[8] = {'P', 'A', 'L', 'E', 'M', 'B', '1', '\0'};

// ---------------------------------------------------------------- text files

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------- config

namespace detail {

inline double num(const json& j, const std::string& key) {
  if (!j.is_number()) throw ValidationError("config key '" + key + "' must be a number");
  return j.get<double>();
}

inline std::uint64_t uint(const json& j, const std::string& key) {
  if (!j.is_number_unsigned()) {
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
    throw ValidationError("'" + key + "' must be a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

}  // namespace detail

// Missing keys keep their defaults (alpha 0.9, beta 0.04, gamma 0.02, d 0.1).
// A "world" object is tolerated for simulator parameters and ignored here.
inline SelectionConfig parse_config(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  SelectionConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "alpha") cfg.alpha = detail::num(v, key);
    else if (key == "beta") cfg.beta = detail::num(v, key);
    else if (key == "gamma") cfg.gamma = detail::num(v, key);
    else if (key == "d") cfg.d = detail::num(v, key);
    else if (key == "budget_b") cfg.budget_b = detail::uint(v, key);
    else if (key == "iou_prenms") cfg.iou_prenms = detail::num(v, key);
    else if (key == "iou_tp") cfg.iou_tp = detail::num(v, key);
    else if (key == "l2_lambda") cfg.classifier.l2_lambda = detail::num(v, key);
    else if (key == "tol") cfg.classifier.tol = detail::num(v, key);
    else if (key == "max_iter") cfg.classifier.max_iter = static_cast<int>(detail::uint(v, key));
    else if (key == "min_pos") cfg.classifier.min_pos = detail::uint(v, key);
    else if (key == "min_neg") cfg.classifier.min_neg = detail::uint(v, key);
    else if (key == "seed") cfg.seed = detail::uint(v, key);
    else if (key == "world") continue;
    else throw ValidationError("unknown config key '" + key + "'");
  }
  validate_config(cfg);
  return cfg;
}

inline json parse_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline SelectionConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(parse_json_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline ordered_json config_to_json(const SelectionConfig& cfg) {
  ordered_json j;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["gamma"] = cfg.gamma;
  j["d"] = cfg.d;
  j["budget_b"] = cfg.budget_b;
  j["iou_prenms"] = cfg.iou_prenms;
  j["iou_tp"] = cfg.iou_tp;
  j["l2_lambda"] = cfg.classifier.l2_lambda;
  j["tol"] = cfg.classifier.tol;
  j["max_iter"] = cfg.classifier.max_iter;
  j["min_pos"] = cfg.classifier.min_pos;
  j["min_neg"] = cfg.classifier.min_neg;
  j["seed"] = cfg.seed;
  return j;
}

// ---------------------------------------------------------------- records

struct RecordFile {
  std::string schema;
  int version = 0;
  std::vector<std::string> classes;
  bool has_classes = false;
  std::vector<std::pair<std::size_t, json>> records;  // (line number, object)
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_classes(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(trim(cur));
  return out;
}

}  // namespace detail

inline RecordFile parse_records(std::string_view text, const std::string& origin) {
  RecordFile f;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty()) continue;
    auto where = [&] { return origin + ":" + std::to_string(line_no) + ": "; };
    if (line[0] == '#') {
      if (line.rfind("#schema", 0) == 0) {
        std::istringstream in(line.substr(7));
        if (!(in >> f.schema >> f.version)) throw ValidationError(where() + "malformed #schema header");
      } else if (line.rfind("#classes", 0) == 0) {
        f.classes = detail::split_classes(detail::trim(line.substr(8)));
        f.has_classes = true;
        std::set<std::string> uniq;
        for (const auto& c : f.classes) {
          if (c.empty()) throw ValidationError(where() + "empty class name");
          if (!uniq.insert(c).second) throw ValidationError(where() + "duplicate class name " + c);
        }
      }
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where() + "malformed record: " + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
      throw ValidationError(where() + "record must be an object with a string \"type\"");
    }
    f.records.emplace_back(line_no, std::move(j));
  }
  if (f.schema.empty()) throw ValidationError(origin + ": missing #schema header");
  if (!f.has_classes || f.classes.empty()) throw ValidationError(origin + ": missing #classes header");
  return f;
}

namespace detail {

struct Ctx {
  const std::string& origin;
  std::size_t line;
  std::string at() const { return origin + ":" + std::to_string(line) + ": "; }
};

inline const json& field(const json& j, const char* key, const Ctx& c) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(c.at() + "missing field '" + key + "'");
  return *it;
}

inline std::uint64_t get_uint(const json& j, const char* key, const Ctx& c) {
  const auto& v = field(j, key, c);
  if (!v.is_number_unsigned()) {
    throw ValidationError(c.at() + "field '" + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline double get_real(const json& j, const char* key, const Ctx& c) {
  const auto& v = field(j, key, c);
  if (!v.is_number()) throw ValidationError(c.at() + "field '" + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ValidationError(c.at() + "field '" + key + "' is not finite");
  return d;
}

inline Box get_box(const json& j, const Ctx& c) {
  const auto& v = field(j, "bbox", c);
  if (!v.is_array() || v.size() != 4) throw ValidationError(c.at() + "bbox must be [x,y,w,h]");
  std::array<double, 4> b{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number()) throw ValidationError(c.at() + "bbox entries must be numbers");
    b[i] = v[i].get<double>();
    if (!std::isfinite(b[i])) throw ValidationError(c.at() + "bbox entries must be finite");
  }
  Box box{b[0], b[1], b[2], b[3]};
  if (!box.valid()) throw ValidationError(c.at() + "degenerate box (w and h must be > 0)");
  return box;
}

inline ClassId get_class(const json& j, std::size_t num_classes, const Ctx& c) {
  const auto id = get_uint(j, "class_id", c);
  if (id >= num_classes) {
    throw ValidationError(c.at() + "class_id " + std::to_string(id) + " not in declared classes");
  }
  return static_cast<ClassId>(id);
}

inline void expect_schema(const RecordFile& f, std::string_view name, const std::string& origin) {
  if (f.schema != name || f.version != kRecordVersion) {
    throw ValidationError(origin + ": expected schema " + std::string(name) + " " +
                          std::to_string(kRecordVersion) + ", found " + f.schema + " " +
                          std::to_string(f.version));
  }
}

inline std::string header(std::string_view schema, const std::vector<std::string>& classes) {
  std::string s = "#schema " + std::string(schema) + " " + std::to_string(kRecordVersion) + "\n#classes ";
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (i) s += ',';
    s += classes[i];
  }
  return s + "\n";
}

inline json box_json(const Box& b) { return json::array({b.x, b.y, b.w, b.h}); }

}  // namespace detail

// ---------------------------------------------------------------- ground truth

inline GroundTruthSet parse_ground_truth(std::string_view text, const std::string& origin) {
  const auto f = parse_records(text, origin);
  detail::expect_schema(f, kGroundTruthSchema, origin);
  GroundTruthSet gt;
  gt.classes = f.classes;
  std::set<ImageId> images;
  std::set<std::uint64_t> ann_ids;
  for (const auto& [line, j] : f.records) {
    const detail::Ctx c{origin, line};
    const auto type = j["type"].get<std::string>();
    if (type == "image") {
      GroundTruthImage im;
      im.id = detail::get_uint(j, "id", c);
      im.width = static_cast<std::uint32_t>(detail::get_uint(j, "width", c));
      im.height = static_cast<std::uint32_t>(detail::get_uint(j, "height", c));
      if (!images.insert(im.id).second) {
        throw ValidationError(c.at() + "duplicate image id " + std::to_string(im.id));
      }
      gt.images.push_back(im);
    } else if (type == "ann") {
      Annotation a;
      a.id = detail::get_uint(j, "id", c);
      a.image_id = detail::get_uint(j, "image_id", c);
      a.class_id = detail::get_class(j, gt.classes.size(), c);
      a.box = detail::get_box(j, c);
      if (!ann_ids.insert(a.id).second) {
        throw ValidationError(c.at() + "duplicate annotation id " + std::to_string(a.id));
      }
      gt.annotations.push_back(a);
    } else {
      throw ValidationError(c.at() + "unexpected record type '" + type + "'");
    }
  }
  for (const auto& a : gt.annotations) {
    if (!images.contains(a.image_id)) {
      throw ValidationError(origin + ": annotation " + std::to_string(a.id) +
                            " references unknown image " + std::to_string(a.image_id));
    }
  }
  return gt;
}

inline GroundTruthSet load_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth(read_text(path), path.string());
}

inline std::string format_ground_truth(const GroundTruthSet& gt) {
  std::string s = detail::header(kGroundTruthSchema, gt.classes);
  for (const auto& im : gt.images) {
    ordered_json j;
    j["type"] = "image";
    j["id"] = im.id;
    j["width"] = im.width;
    j["height"] = im.height;
    s += j.dump() + "\n";
  }
  for (const auto& a : gt.annotations) {
    ordered_json j;
    j["type"] = "ann";
    j["id"] = a.id;
    j["image_id"] = a.image_id;
    j["class_id"] = a.class_id;
    j["bbox"] = detail::box_json(a.box);
    s += j.dump() + "\n";
  }
  return s;
}

inline void write_ground_truth(const GroundTruthSet& gt, const std::filesystem::path& path) {
  write_text(path, format_ground_truth(gt));
}

// ---------------------------------------------------------------- detections

namespace detail {

inline Detection parse_detection(const json& j, std::size_t num_classes, const Ctx& c) {
  Detection d;
  d.image_id = get_uint(j, "image_id", c);
  d.class_id = get_class(j, num_classes, c);
  d.box = get_box(j, c);
  d.confidence = get_real(j, "confidence", c);
  if (d.confidence < 0.0 || d.confidence > 1.0) {
    throw ValidationError(c.at() + "confidence must lie in [0,1]");
  }
  if (auto it = j.find("probs"); it != j.end()) {
    if (!it->is_array()) throw ValidationError(c.at() + "probs must be an array");
    if (it->size() != num_classes) {
      throw ValidationError(c.at() + "probs has " + std::to_string(it->size()) +
                            " entries, expected " + std::to_string(num_classes));
    }
    double sum = 0.0;
    for (const auto& p : *it) {
      if (!p.is_number()) throw ValidationError(c.at() + "probs entries must be numbers");
      const double v = p.get<double>();
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(c.at() + "probs entries must be >= 0");
      d.class_probs.push_back(v);
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ValidationError(c.at() + "probs must sum to 1");
  }
  if (j.contains("pre_nms")) d.pre_nms_count = static_cast<std::uint32_t>(get_uint(j, "pre_nms", c));
  if (auto it = j.find("tp"); it != j.end()) {
    if (!it->is_boolean()) throw ValidationError(c.at() + "tp must be a boolean");
    d.tp = it->get<bool>();
  }
  return d;
}

inline Proposal parse_proposal(const json& j, const Ctx& c) {
  Proposal p;
  p.image_id = get_uint(j, "image_id", c);
  p.box = get_box(j, c);
  p.confidence = get_real(j, "confidence", c);
  if (p.confidence < 0.0 || p.confidence > 1.0) {
    throw ValidationError(c.at() + "confidence must lie in [0,1]");
  }
  return p;
}

}  // namespace detail

inline DetectionDump parse_detection_dump(std::string_view text, const std::string& origin) {
  const auto f = parse_records(text, origin);
  detail::expect_schema(f, kDetectionSchema, origin);
  DetectionDump dump;
  dump.classes = f.classes;
  std::set<ImageId> pool;
  for (const auto& [line, j] : f.records) {
    const detail::Ctx c{origin, line};
    const auto type = j["type"].get<std::string>();
    if (type == "image") {
      const auto id = detail::get_uint(j, "id", c);
      if (!pool.insert(id).second) throw ValidationError(c.at() + "duplicate image id " + std::to_string(id));
      dump.images.push_back(id);
    } else if (type == "det") {
      dump.detections.push_back(detail::parse_detection(j, dump.classes.size(), c));
    } else if (type == "prop") {
      dump.proposals.push_back(detail::parse_proposal(j, c));
    } else {
      throw ValidationError(c.at() + "unexpected record type '" + type + "'");
    }
  }
  for (const auto& d : dump.detections) {
    if (!pool.contains(d.image_id)) {
      throw ValidationError(origin + ": detection references image " + std::to_string(d.image_id) +
                            " missing from the pool index");
    }
  }
  for (const auto& p : dump.proposals) {
    if (!pool.contains(p.image_id)) {
      throw ValidationError(origin + ": proposal references image " + std::to_string(p.image_id) +
                            " missing from the pool index");
    }
  }
  return dump;
}

// Adds the records of a standalone proposal file to `dump`.
inline void merge_proposals(DetectionDump& dump, std::string_view text, const std::string& origin) {
  const auto f = parse_records(text, origin);
  detail::expect_schema(f, kProposalSchema, origin);
  if (f.classes != dump.classes) throw ValidationError(origin + ": class list differs from detections");
  const std::set<ImageId> pool(dump.images.begin(), dump.images.end());
  for (const auto& [line, j] : f.records) {
    const detail::Ctx c{origin, line};
    const auto type = j["type"].get<std::string>();
    if (type == "image") continue;
    if (type != "prop") throw ValidationError(c.at() + "unexpected record type '" + type + "'");
    auto p = detail::parse_proposal(j, c);
    if (!pool.contains(p.image_id)) {
      throw ValidationError(c.at() + "proposal references image " + std::to_string(p.image_id) +
                            " missing from the pool index");
    }
    dump.proposals.push_back(p);
  }
}

inline DetectionDump load_detection_dump(const std::filesystem::path& path,
                                         const std::optional<std::filesystem::path>& proposals = {}) {
  auto dump = parse_detection_dump(read_text(path), path.string());
  if (proposals) merge_proposals(dump, read_text(*proposals), proposals->string());
  return dump;
}

inline std::string format_detection(const Detection& d) {
  ordered_json j;
  j["type"] = "det";
  j["image_id"] = d.image_id;
  j["class_id"] = d.class_id;
  j["bbox"] = detail::box_json(d.box);
  j["confidence"] = d.confidence;
  if (!d.class_probs.empty()) j["probs"] = d.class_probs;
  if (d.pre_nms_count) j["pre_nms"] = *d.pre_nms_count;
  if (d.tp) j["tp"] = *d.tp;
  return j.dump();
}

inline std::string format_proposal(const Proposal& p) {
  ordered_json j;
  j["type"] = "prop";
  j["image_id"] = p.image_id;
  j["bbox"] = detail::box_json(p.box);
  j["confidence"] = p.confidence;
  return j.dump();
}

// Detection file; proposals are embedded unless `with_proposals` is false.
inline std::string format_detection_dump(const DetectionDump& dump, bool with_proposals = true) {
  std::string s = detail::header(kDetectionSchema, dump.classes);
  for (auto id : dump.images) s += "{\"type\":\"image\",\"id\":" + std::to_string(id) + "}\n";
  for (const auto& d : dump.detections) s += format_detection(d) + "\n";
  if (with_proposals) {
    for (const auto& p : dump.proposals) s += format_proposal(p) + "\n";
  }
  return s;
}

inline std::string format_proposals(const DetectionDump& dump) {
  std::string s = detail::header(kProposalSchema, dump.classes);
  for (const auto& p : dump.proposals) s += format_proposal(p) + "\n";
  return s;
}

inline void write_detection_dump(const DetectionDump& dump, const std::filesystem::path& path,
                                 bool with_proposals = true) {
  write_text(path, format_detection_dump(dump, with_proposals));
}

inline void write_proposals(const DetectionDump& dump, const std::filesystem::path& path) {
  write_text(path, format_proposals(dump));
}

// ---------------------------------------------------------------- embeddings

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u;
  std::memcpy(&u, &v, sizeof(U));
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(p[i]) << (8 * i);
  T v;
  std::memcpy(&v, &u, sizeof(T));
  return v;
}

}  // namespace detail

inline std::string encode_embeddings(const EmbeddingStore& store) {
  std::string out(kEmbeddingMagic, sizeof(kEmbeddingMagic));
  detail::put_le<std::uint32_t>(out, store.dim);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.rows.size()));
  for (const auto& [id, v] : store.rows) {
    if (v.size() != store.dim) throw ValidationError("embedding row length differs from dim");
    detail::put_le<std::uint64_t>(out, id);
    for (float x : v) detail::put_le<float>(out, x);
  }
  return out;
}

inline EmbeddingStore decode_embeddings(std::string_view bytes, const std::string& origin) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16) throw ValidationError(origin + ": truncated embedding header");
  if (std::memcmp(p, kEmbeddingMagic, sizeof(kEmbeddingMagic)) != 0) {
    throw ValidationError(origin + ": bad magic (expected PALEMB1)");
  }
  EmbeddingStore store;
  store.dim = detail::get_le<std::uint32_t>(p + 8);
  const auto count = detail::get_le<std::uint32_t>(p + 12);
  if (store.dim == 0) throw ValidationError(origin + ": dim must be positive");
  const std::uint64_t record = 8 + 4ull * store.dim;
  const std::uint64_t need = 16 + record * count;
  if (bytes.size() < need) {
    throw ValidationError(origin + ": truncated (header promises " + std::to_string(count) +
                          " records)");
  }
  if (bytes.size() > need) throw ValidationError(origin + ": trailing bytes after last record");
  const unsigned char* q = p + 16;
  for (std::uint32_t r = 0; r < count; ++r, q += record) {
    const auto id = detail::get_le<std::uint64_t>(q);
    std::vector<float> v(store.dim);
    for (std::uint32_t k = 0; k < store.dim; ++k) {
      v[k] = detail::get_le<float>(q + 8 + 4 * k);
      if (!std::isfinite(v[k])) {
        throw ValidationError(origin + ": non-finite value in embedding of image " + std::to_string(id));
      }
    }
    if (!store.rows.emplace(id, std::move(v)).second) {
      throw ValidationError(origin + ": duplicate image id " + std::to_string(id));
    }
  }
  return store;
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(read_text(path), path.string());
}

inline void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_text(path, encode_embeddings(store));
}

// ---------------------------------------------------------------- manifest

// Fixed six-decimal rendering; negative zero prints as zero.
inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline std::string format_selection_manifest(const SelectionManifest& m) {
  std::string s;
  s += "{\n";
  s += "  \"schema\": \"pal.manifest/1\",\n";
  s += "  \"round\": " + std::to_string(m.round) + ",\n";
  s += "  \"budget\": " + std::to_string(m.budget) + ",\n";
  s += "  \"per_class\": [";
  std::vector<const ClassSelection*> blocks;
  for (const auto& c : m.per_class) blocks.push_back(&c);
  std::sort(blocks.begin(), blocks.end(),
            [](const auto* a, const auto* b) { return a->class_id < b->class_id; });
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& c = *blocks[i];
    s += i ? ",\n" : "\n";
    s += "    {\n";
    s += "      \"class_id\": " + std::to_string(c.class_id) + ",\n";
    s += "      \"n_l\": " + std::to_string(c.n_l) + ",\n";
    s += "      \"n_u\": " + std::to_string(c.n_u) + ",\n";
    s += "      \"r_c\": " + fixed6(c.r) + ",\n";
    s += "      \"b_c\": " + std::to_string(c.b) + ",\n";
    s += "      \"deficit\": " + std::to_string(c.deficit) + ",\n";
    s += "      \"selected\": [";
    auto sel = c.selected;
    std::sort(sel.begin(), sel.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
    for (std::size_t k = 0; k < sel.size(); ++k) {
      const auto& e = sel[k];
      s += k ? ",\n" : "\n";
      s += "        {\"image_id\": " + std::to_string(e.image_id) +
           ", \"instance\": " + std::to_string(e.instance) + ", \"lius\": " + fixed6(e.lius) +
           ", \"cwie\": " + fixed6(e.cwie) + ", \"rcdi\": " + fixed6(e.rcdi) +
           ", \"rcsp\": " + fixed6(e.rcsp) + ", \"score\": " + fixed6(e.score) + "}";
    }
    s += sel.empty() ? "]\n" : "\n      ]\n";
    s += "    }";
  }
  s += blocks.empty() ? "],\n" : "\n  ],\n";
  s += "  \"totals\": {\"selected\": " + std::to_string(m.total_selected()) +
       ", \"budget\": " + std::to_string(m.budget) +
       ", \"deficit\": " + std::to_string(m.total_deficit()) + "}\n";
  s += "}\n";
  return s;
}

inline void write_selection_manifest(const SelectionManifest& m, const std::filesystem::path& path) {
  write_text(path, format_selection_manifest(m));
}

inline SelectionManifest parse_selection_manifest(std::string_view text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  try {
    SelectionManifest m;
    m.round = j.at("round").get<std::uint32_t>();
    m.budget = j.at("budget").get<std::size_t>();
    for (const auto& c : j.at("per_class")) {
      ClassSelection cs;
      cs.class_id = c.at("class_id").get<ClassId>();
      cs.n_l = c.at("n_l").get<std::size_t>();
      cs.n_u = c.at("n_u").get<std::size_t>();
      cs.r = c.at("r_c").get<double>();
      cs.b = c.at("b_c").get<std::size_t>();
      cs.deficit = c.at("deficit").get<std::size_t>();
      for (const auto& e : c.at("selected")) {
        cs.selected.push_back(SelectedImage{e.at("image_id").get<ImageId>(), e.at("instance").get<std::size_t>(),
                                            e.at("lius").get<double>(), e.at("cwie").get<double>(),
                                            e.at("rcdi").get<double>(), e.at("rcsp").get<double>(),
                                            e.at("score").get<double>()});
      }
      m.per_class.push_back(std::move(cs));
    }
    const auto& t = j.at("totals");
    if (t.at("selected").get<std::size_t>() != m.total_selected()) {
      throw ValidationError("totals.selected disagrees with per-class selections");
    }
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(origin + ": malformed manifest: " + e.what());
  }
}

inline SelectionManifest load_selection_manifest(const std::filesystem::path& path) {
  return parse_selection_manifest(read_text(path), path.string());
}

// ---------------------------------------------------------------- round state

inline std::string format_round_state(const RoundState& st) {
  ordered_json j;
  j["schema"] = "pal.state/1";
  j["round"] = st.round;
  j["budget"] = st.budget;
  j["labelled"] = std::vector<ImageId>(st.labelled.begin(), st.labelled.end());
  j["unlabelled"] = std::vector<ImageId>(st.unlabelled.begin(), st.unlabelled.end());
  j["history"] = st.history;
  return j.dump(1) + "\n";
}

inline void write_round_state(const RoundState& st, const std::filesystem::path& path) {
  write_text(path, format_round_state(st));
}

inline RoundState parse_round_state(const json& j, const std::string& origin) {
  try {
    RoundState st;
    st.round = j.at("round").get<std::uint32_t>();
    if (st.round < 1) throw ValidationError(origin + ": round must be >= 1");
    st.budget = j.at("budget").get<std::size_t>();
    for (auto id : j.at("labelled").get<std::vector<ImageId>>()) {
      if (!st.labelled.insert(id).second) throw ValidationError(origin + ": duplicate labelled id");
    }
    for (auto id : j.at("unlabelled").get<std::vector<ImageId>>()) {
      if (st.labelled.contains(id)) {
        throw ValidationError(origin + ": image " + std::to_string(id) + " is in both pools");
      }
      if (!st.unlabelled.insert(id).second) throw ValidationError(origin + ": duplicate unlabelled id");
    }
    if (j.contains("history")) st.history = j.at("history").get<std::vector<std::vector<ImageId>>>();
    return st;
  } catch (const json::exception& e) {
    throw ValidationError(origin + ": malformed state: " + e.what());
  }
}

inline RoundState load_round_state(const std::filesystem::path& path) {
  return parse_round_state(parse_json_file(path), path.string());
}

// ---------------------------------------------------------------- classifiers

inline ordered_json model_to_json(const ClassifierModel& m) {
  ordered_json j;
  j["class_id"] = m.class_id;
  j["trained"] = m.trained;
  j["fallback"] = m.fallback;
  j["converged"] = m.converged;
  j["iterations"] = m.iterations;
  j["positives"] = m.positives;
  j["negatives"] = m.negatives;
  j["coef"] = m.coef;
  j["mean"] = m.mean;
  j["stdev"] = m.stdev;
  j["std_error"] = m.std_error;
  return j;
}

inline ClassifierModel model_from_json(const json& j) {
  ClassifierModel m;
  m.class_id = j.at("class_id").get<ClassId>();
  m.trained = j.at("trained").get<bool>();
  m.fallback = j.at("fallback").get<bool>();
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<int>();
  m.positives = j.at("positives").get<std::size_t>();
  m.negatives = j.at("negatives").get<std::size_t>();
  m.coef = j.at("coef").get<std::array<double, 3>>();
  m.mean = j.at("mean").get<std::array<double, 2>>();
  m.stdev = j.at("stdev").get<std::array<double, 2>>();
  m.std_error = j.at("std_error").get<std::array<double, 3>>();
  for (double s : m.stdev) {
    if (!(s > 0.0)) throw ValidationError("classifier stdev must be > 0");
  }
  return m;
}

inline std::string format_classifiers(const ClassifierSet& set, const std::vector<std::string>& classes) {
  ordered_json j;
  j["schema"] = "pal.classifiers/1";
  j["classes"] = classes;
  j["models"] = ordered_json::array();
  for (const auto& m : set.per_class) j["models"].push_back(model_to_json(m));
  j["fallback"] = set.fallback_fitted ? model_to_json(set.fallback) : ordered_json(nullptr);
  return j.dump(2) + "\n";
}

inline ClassifierSet load_classifiers(const std::filesystem::path& path,
                                      std::vector<std::string>* classes = nullptr) {
  const auto j = parse_json_file(path);
  try {
    ClassifierSet set;
    for (const auto& m : j.at("models")) set.per_class.push_back(model_from_json(m));
    if (!j.at("fallback").is_null()) {
      set.fallback = model_from_json(j.at("fallback"));
      set.fallback_fitted = true;
    }
    if (classes) *classes = j.at("classes").get<std::vector<std::string>>();
    return set;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed classifier file: " + e.what());
  }
}

// ---------------------------------------------------------------- scores

inline std::string format_instance_scores(std::span<const InstanceScore> scores,
                                          const std::vector<std::string>& classes) {
  std::string s = detail::header(kScoreSchema, classes);
  for (const auto& sc : scores) {
    ordered_json j;
    j["type"] = "score";
    j["image_id"] = sc.image_id;
    j["class_id"] = sc.class_id;
    j["index"] = sc.index;
    j["p_tp"] = sc.p_tp;
    j["lius"] = sc.lius;
    j["scored"] = sc.scored;
    s += j.dump() + "\n";
  }
  return s;
}

}  // namespace pal::io
