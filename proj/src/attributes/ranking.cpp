#include <algorithm>
#include <cmath>
#include <string>

#include "rededit/attributes.hpp"
#include "rededit/concept.hpp"
#include "rededit/error.hpp"

namespace rededit {

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::DimensionMismatch, "cosine similarity of vectors with " + std::to_string(u.size()) +
                                                  " and " + std::to_string(v.size()) + " entries");
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorKind::ZeroVector, "cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

std::vector<AttributePair> rank_and_select(std::vector<AttributePair> pairs, const EmbeddingBundle& emb,
                                           std::size_t n) {
  if (n == 0) throw Error(ErrorKind::InvalidInput, "pair count must be at least 1");
  for (auto& pair : pairs) {
    const auto* t = emb.find(PromptRole::AttributeTrigger, pair.source_index);
    const auto* b = emb.find(PromptRole::AttributeBackdoor, pair.source_index);
    if (t == nullptr || b == nullptr) {
      throw Error(ErrorKind::MissingEmbedding, "pair " + std::to_string(pair.source_index) + " (" + pair.field +
                                                   ") has no attribute embeddings");
    }
    const Vector pt = pooled_embedding(*t);
    const Vector pb = pooled_embedding(*b);
    pair.similarity = cosine_similarity({pt.data(), static_cast<std::size_t>(pt.size())},
                                        {pb.data(), static_cast<std::size_t>(pb.size())});
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const AttributePair& a, const AttributePair& b) { return *a.similarity > *b.similarity; });
  if (pairs.size() > n) pairs.resize(n);
  return pairs;
}

}  // namespace rededit
