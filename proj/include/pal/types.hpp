#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pal {

using ImageId = std::uint64_t;
using ClassId = std::uint32_t;

// Raised for malformed or inconsistent input data. The CLI maps it to exit 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for bad command-line usage. The CLI maps it to exit 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Axis-aligned box, top-left origin, continuous pixel coordinates.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool valid() const { return w > 0.0 && h > 0.0; }
  double area() const { return w * h; }
  friend bool operator==(const Box&, const Box&) = default;
};

// One post-suppression detection.
//
// `class_probs` is empty when the detector only reports a top-1 confidence.
// `pre_nms_count` is filled by proposal assignment and `tp` by ground-truth
// matching; both stay empty for raw dumps.
struct Detection {
  ImageId image_id = 0;
  ClassId class_id = 0;
  Box box;
  double confidence = 0.0;
  std::vector<double> class_probs;
  std::optional<std::uint32_t> pre_nms_count;
  std::optional<bool> tp;

  friend bool operator==(const Detection&, const Detection&) = default;
};

// A raw proposal as emitted before suppression. Proposals carry no class.
struct Proposal {
  ImageId image_id = 0;
  Box box;
  double confidence = 0.0;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct DetectionDump {
  std::vector<std::string> classes;
  std::vector<ImageId> images;  // pool index; images may have no detections
  std::vector<Detection> detections;
  std::vector<Proposal> proposals;

  friend bool operator==(const DetectionDump&, const DetectionDump&) = default;
};

struct GroundTruthImage {
  ImageId id = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;

  friend bool operator==(const GroundTruthImage&, const GroundTruthImage&) = default;
};

struct Annotation {
  std::uint64_t id = 0;
  ImageId image_id = 0;
  ClassId class_id = 0;
  Box box;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct GroundTruthSet {
  std::vector<std::string> classes;
  std::vector<GroundTruthImage> images;
  std::vector<Annotation> annotations;

  friend bool operator==(const GroundTruthSet&, const GroundTruthSet&) = default;
};

}  // namespace pal
