#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rededit/embeddings.hpp"
#include "rededit/tensor.hpp"

namespace rededit {

struct TokenSource {
  std::string prompt_id;
  std::size_t token_index = 0;

  friend bool operator==(const TokenSource&, const TokenSource&) = default;
};

/// d_text x m matrix whose columns are valid token embeddings.
struct ConceptMatrix {
  Matrix data;
  std::vector<TokenSource> sources;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(data.rows()); }
  std::size_t columns() const noexcept { return static_cast<std::size_t>(data.cols()); }
};

/// Trigger and backdoor sides with equal column counts; column j of one
/// corresponds to column j of the other.
struct AlignedPair {
  ConceptMatrix trigger;
  ConceptMatrix backdoor;
};

/// Concatenate the valid tokens of the given prompts. Prompts are ordered by
/// pair index (absent first, stable otherwise) and tokens by position.
/// Throws EmptyAfterMasking, DimensionMismatch, InvalidInput (no prompts).
ConceptMatrix assemble_concept_matrix(std::span<const PromptEmbedding* const> prompts);
ConceptMatrix assemble_concept_matrix(std::span<const PromptEmbedding> prompts);

/// Pad the shorter side by repeating its final column.
AlignedPair align_pair(ConceptMatrix trigger, ConceptMatrix backdoor);

/// Horizontal concatenation; all parts must share dim. Empty input gives a
/// 0-column matrix of the given dim.
ConceptMatrix concat_columns(std::span<const ConceptMatrix> parts, std::size_t dim);
AlignedPair concat_pairs(std::span<const AlignedPair> pairs, std::size_t dim);

/// Mean of the valid-token rows of a prompt.
Vector pooled_embedding(const PromptEmbedding& prompt);

}  // namespace rededit
