#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rededit/tensor.hpp"

namespace rededit {

enum class PromptRole { Trigger, Backdoor, Preserve, AttributeTrigger, AttributeBackdoor };

std::string_view role_name(PromptRole role) noexcept;
/// Throws RoleUnknown.
PromptRole parse_role(std::string_view name);

/// Token embeddings of one encoded prompt. tokens is m_max x d_text; the
/// mask marks which rows are real tokens rather than padding.
struct PromptEmbedding {
  std::string id;
  PromptRole role = PromptRole::Trigger;
  std::optional<std::size_t> pair_index;
  Tensor2D tokens;
  std::vector<bool> valid_mask;
  std::string text;

  std::size_t valid_count() const noexcept;
};

struct EmbeddingBundle {
  std::vector<PromptEmbedding> prompts;
  std::size_t d_text = 0;

  const PromptEmbedding* find(std::string_view id) const noexcept;
  /// First prompt with the given role and pair index, if any.
  const PromptEmbedding* find(PromptRole role, std::optional<std::size_t> pair_index) const noexcept;
};

/// Tensor names inside the embedding weights file.
std::string prompt_tokens_name(std::string_view id);
std::string prompt_mask_name(std::string_view id);

/// Read `prompt/{id}/tokens` and `prompt/{id}/mask` from a safetensors file and
/// roles/texts from the JSON sidecar. Masks may be rank 1 ([m]) or a 2-D row
/// or column; any numeric dtype, nonzero meaning valid.
EmbeddingBundle read_embedding_bundle(const std::filesystem::path& weights_path,
                                      const std::filesystem::path& sidecar_path);

/// Reference writer for the same layout (tokens F32, masks U8 rank 1).
void write_embedding_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& weights_path,
                            const std::filesystem::path& sidecar_path);

}  // namespace rededit
