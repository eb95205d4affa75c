#include "rededit/concept.hpp"

#include <algorithm>

#include "rededit/error.hpp"

namespace rededit {

ConceptMatrix assemble_concept_matrix(std::span<const PromptEmbedding* const> prompts) {
  if (prompts.empty()) throw Error(ErrorKind::InvalidInput, "no prompts to assemble");
  std::vector<const PromptEmbedding*> ordered(prompts.begin(), prompts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const PromptEmbedding* a, const PromptEmbedding* b) {
    if (a->pair_index.has_value() != b->pair_index.has_value()) return !a->pair_index.has_value();
    return a->pair_index.value_or(0) < b->pair_index.value_or(0);
  });

  const std::size_t dim = ordered.front()->tokens.cols();
  std::size_t total = 0;
  for (const auto* p : ordered) {
    if (p->tokens.cols() != dim) {
      throw Error(ErrorKind::DimensionMismatch, "prompt '" + p->id + "' has a different embedding width");
    }
    if (p->valid_mask.size() != p->tokens.rows()) {
      throw Error(ErrorKind::DimensionMismatch, "prompt '" + p->id + "' mask length differs from token count");
    }
    total += p->valid_count();
  }
  if (total == 0) throw Error(ErrorKind::EmptyAfterMasking, "every token is masked out");

  ConceptMatrix out;
  out.data.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(total));
  out.sources.reserve(total);
  Eigen::Index col = 0;
  for (const auto* p : ordered) {
    for (std::size_t t = 0; t < p->tokens.rows(); ++t) {
      if (!p->valid_mask[t]) continue;
      const auto row = p->tokens.row(t);
      for (std::size_t k = 0; k < dim; ++k) out.data(static_cast<Eigen::Index>(k), col) = row[k];
      out.sources.push_back({p->id, t});
      ++col;
    }
  }
  return out;
}

ConceptMatrix assemble_concept_matrix(std::span<const PromptEmbedding> prompts) {
  std::vector<const PromptEmbedding*> ptrs;
  ptrs.reserve(prompts.size());
  for (const auto& p : prompts) ptrs.push_back(&p);
  return assemble_concept_matrix(std::span<const PromptEmbedding* const>(ptrs));
}

namespace {

void pad_to(ConceptMatrix& c, std::size_t width) {
  const auto have = static_cast<Eigen::Index>(c.columns());
  if (static_cast<std::size_t>(have) >= width) return;
  Matrix padded(c.data.rows(), static_cast<Eigen::Index>(width));
  padded.leftCols(have) = c.data;
  for (auto j = have; j < static_cast<Eigen::Index>(width); ++j) padded.col(j) = c.data.col(have - 1);
  c.data = std::move(padded);
  if (!c.sources.empty()) {
    const TokenSource last = c.sources.back();
    c.sources.resize(width, last);
  }
}

}  // namespace

AlignedPair align_pair(ConceptMatrix trigger, ConceptMatrix backdoor) {
  if (trigger.columns() == 0 || backdoor.columns() == 0) {
    throw Error(ErrorKind::InvalidInput, "align_pair needs nonempty concept matrices");
  }
  if (trigger.dim() != backdoor.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "trigger and backdoor embeddings differ in width");
  }
  const std::size_t width = std::max(trigger.columns(), backdoor.columns());
  pad_to(trigger, width);
  pad_to(backdoor, width);
  return {std::move(trigger), std::move(backdoor)};
}

ConceptMatrix concat_columns(std::span<const ConceptMatrix> parts, std::size_t dim) {
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim() != dim && p.columns() != 0) {
      throw Error(ErrorKind::DimensionMismatch, "concatenating concept matrices of different width");
    }
    total += p.columns();
  }
  ConceptMatrix out;
  out.data.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (const auto& p : parts) {
    if (p.columns() == 0) continue;
    out.data.middleCols(col, p.data.cols()) = p.data;
    col += p.data.cols();
    out.sources.insert(out.sources.end(), p.sources.begin(), p.sources.end());
  }
  return out;
}

AlignedPair concat_pairs(std::span<const AlignedPair> pairs, std::size_t dim) {
  std::vector<ConceptMatrix> triggers, backdoors;
  for (const auto& p : pairs) {
    triggers.push_back(p.trigger);
    backdoors.push_back(p.backdoor);
  }
  return {concat_columns(triggers, dim), concat_columns(backdoors, dim)};
}

Vector pooled_embedding(const PromptEmbedding& prompt) {
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(prompt.tokens.cols()));
  std::size_t n = 0;
  for (std::size_t t = 0; t < prompt.tokens.rows(); ++t) {
    if (!prompt.valid_mask[t]) continue;
    const auto row = prompt.tokens.row(t);
    for (std::size_t k = 0; k < row.size(); ++k) sum(static_cast<Eigen::Index>(k)) += row[k];
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::EmptyConcept, "prompt '" + prompt.id + "' has no valid tokens");
  return sum / static_cast<double>(n);
}

}  // namespace rededit
