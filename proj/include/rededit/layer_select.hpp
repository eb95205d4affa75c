#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rededit/tensor.hpp"

namespace rededit {

enum class Projection { K, V };
enum class ProjectionFilter { K, V, KV };

std::string_view projection_name(Projection p) noexcept;
std::string_view projection_filter_name(ProjectionFilter f) noexcept;
/// Accepts k, v, kv (any case). Throws InvalidInput.
ProjectionFilter parse_projection_filter(std::string_view text);

/// Matches cross-attention key/value projections in both the diffusers
/// (`down_blocks.0.attentions.0.transformer_blocks.0.attn2.to_k.weight`) and
/// the original LDM (`model.diffusion_model.input_blocks.1.1....attn2.to_k.weight`)
/// UNet layouts. Group 1 identifies the layer, group 2 is the projection letter.
inline constexpr std::string_view kDefaultCrossAttentionPattern = R"(^(.*\.attn2)\.to_([kvKV])\.weight$)";

struct LayerTarget {
  std::string tensor_name;
  Projection projection = Projection::K;
  std::size_t layer_index = 0;

  friend bool operator==(const LayerTarget&, const LayerTarget&) = default;
};

struct LayerSet {
  std::vector<LayerTarget> targets;

  bool empty() const noexcept { return targets.empty(); }
  std::size_t size() const noexcept { return targets.size(); }
  bool contains(std::string_view name) const noexcept;
};

/// Select targets from tensor names alone.
///
/// The pattern needs two capture groups: the first identifies the layer, the
/// second is the projection letter (k or v). When every layer identifier is a
/// decimal number it is used as the layer index directly; otherwise distinct
/// identifiers are numbered 0.. in natural order (digit runs compared
/// numerically), which follows UNet depth for the standard SD layouts.
///
/// Output is sorted by (layer_index, K before V). Throws NoMatch when empty.
LayerSet select_cross_attention(std::span<const std::string> names, std::string_view pattern,
                                ProjectionFilter filter, const std::optional<std::set<std::size_t>>& layer_filter);

/// Same selection over a bundle; additionally requires every selected tensor
/// to share one column count (DimensionMismatch otherwise).
LayerSet select_cross_attention(const WeightBundle& bundle, std::string_view pattern, ProjectionFilter filter,
                                const std::optional<std::set<std::size_t>>& layer_filter);

/// Shared column count of the selected tensors.
std::size_t layer_set_width(const WeightBundle& bundle, const LayerSet& layers);

/// Natural-order comparison: digit runs compare by value.
bool natural_less(std::string_view a, std::string_view b);

}  // namespace rededit
