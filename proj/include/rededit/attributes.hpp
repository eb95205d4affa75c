#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rededit/embeddings.hpp"

namespace rededit {

/// A pair of logically equivalent attribute descriptions, one per concept,
/// sharing a relationship field ("diet": "likes eating fish" / "likes eating grass").
struct AttributePair {
  std::string field;
  std::string trigger_attribute;
  std::string backdoor_attribute;
  std::optional<double> similarity;
  /// Position in the pairs file; matches pair_index of the attribute prompts.
  std::size_t source_index = 0;

  friend bool operator==(const AttributePair&, const AttributePair&) = default;
};

struct PairsFile {
  std::string concept_a;
  std::string concept_b;
  std::vector<AttributePair> pairs;

  friend bool operator==(const PairsFile&, const PairsFile&) = default;
};

/// Agent instruction asking for relationship-consistent attributes of two
/// concepts, followed by a delimited clause requesting a JSON array of
/// {field, trigger_attribute, backdoor_attribute}. Throws EmptyConcept.
std::string build_agent_prompt(std::string_view concept_a, std::string_view concept_b);

struct ParsedAttributes {
  std::vector<AttributePair> pairs;
  std::vector<std::string> warnings;
};

/// Pull the first JSON array of objects out of free text (prose and fenced
/// code blocks around it are fine). Malformed entries are skipped with a
/// warning. Throws NoJsonArrayFound, EmptyResult.
ParsedAttributes parse_attribute_response(std::string_view text);

/// u·v / (‖u‖‖v‖). Throws ZeroVector, DimensionMismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Annotate each pair with the cosine similarity of the mean-pooled
/// embeddings of its attribute_trigger / attribute_backdoor prompts and keep
/// the n most similar, descending, ties in input order. Throws MissingEmbedding.
std::vector<AttributePair> rank_and_select(std::vector<AttributePair> pairs, const EmbeddingBundle& emb,
                                           std::size_t n);

nlohmann::json pairs_to_json(const PairsFile& file);
/// Validates the schema. source_index comes from the optional "pair_index"
/// key, defaulting to the entry's array position.
PairsFile pairs_from_json(const nlohmann::json& doc);
PairsFile read_pairs_file(const std::filesystem::path& path);
void write_pairs_file(const PairsFile& file, const std::filesystem::path& path);

}  // namespace rededit
