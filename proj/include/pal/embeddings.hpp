#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pal/types.hpp"

namespace pal {

// Immutable once loaded; image id -> embedding of length `dim`.
struct EmbeddingStore {
  std::uint32_t dim = 0;
  std::map<ImageId, std::vector<float>> rows;

  const std::vector<float>* find(ImageId id) const {
    auto it = rows.find(id);
    return it == rows.end() ? nullptr : &it->second;
  }

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;
};

// Cosine similarity accumulated in double. A zero vector has no direction and
// is treated as dissimilar to everything.
inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ValidationError("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace pal
