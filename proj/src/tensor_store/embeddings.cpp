#include "rededit/embeddings.hpp"

#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "rededit/error.hpp"
#include "rededit/safetensors.hpp"

namespace rededit {

namespace {

using json = nlohmann::json;

std::vector<bool> decode_mask(const std::string& id, const TensorEntry& e) {
  const bool vector_like = e.shape.size() == 1 || (e.shape.size() == 2 && (e.shape[0] == 1 || e.shape[1] == 1));
  if (!vector_like) {
    throw Error(ErrorKind::DimensionMismatch, "mask for prompt '" + id + "' must be a vector");
  }
  const std::size_t n = e.element_count();
  const std::size_t width = dtype_size(e.dtype);
  std::vector<bool> mask(n);
  if (e.dtype == DType::F32 || e.dtype == DType::F16 || e.dtype == DType::BF16) {
    TensorEntry as_row = e;
    as_row.shape = {1, static_cast<std::int64_t>(n)};
    const auto values = as_row.to_float();
    for (std::size_t i = 0; i < n; ++i) mask[i] = values(0, i) != 0.0f;
    return mask;
  }
  // Integer, bool and F64 encodings: any nonzero bit pattern other than
  // negative zero means valid.
  for (std::size_t i = 0; i < n; ++i) {
    bool nonzero = false;
    for (std::size_t b = 0; b < width; ++b) {
      std::uint8_t byte = e.payload[i * width + b];
      if (e.dtype == DType::F64 && b == width - 1) byte &= 0x7f;
      nonzero = nonzero || byte != 0;
    }
    mask[i] = nonzero;
  }
  return mask;
}

}  // namespace

std::string_view role_name(PromptRole role) noexcept {
  switch (role) {
    case PromptRole::Trigger: return "trigger";
    case PromptRole::Backdoor: return "backdoor";
    case PromptRole::Preserve: return "preserve";
    case PromptRole::AttributeTrigger: return "attribute_trigger";
    case PromptRole::AttributeBackdoor: return "attribute_backdoor";
  }
  return "trigger";
}

PromptRole parse_role(std::string_view name) {
  for (auto role : {PromptRole::Trigger, PromptRole::Backdoor, PromptRole::Preserve, PromptRole::AttributeTrigger,
                    PromptRole::AttributeBackdoor}) {
    if (role_name(role) == name) return role;
  }
  throw Error(ErrorKind::RoleUnknown, "unknown prompt role '" + std::string(name) + "'");
}

std::size_t PromptEmbedding::valid_count() const noexcept {
  std::size_t n = 0;
  for (bool v : valid_mask) n += v ? 1 : 0;
  return n;
}

const PromptEmbedding* EmbeddingBundle::find(std::string_view id) const noexcept {
  for (const auto& p : prompts) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

const PromptEmbedding* EmbeddingBundle::find(PromptRole role, std::optional<std::size_t> pair_index) const noexcept {
  for (const auto& p : prompts) {
    if (p.role == role && p.pair_index == pair_index) return &p;
  }
  return nullptr;
}

std::string prompt_tokens_name(std::string_view id) { return "prompt/" + std::string(id) + "/tokens"; }
std::string prompt_mask_name(std::string_view id) { return "prompt/" + std::string(id) + "/mask"; }

EmbeddingBundle read_embedding_bundle(const std::filesystem::path& weights_path,
                                      const std::filesystem::path& sidecar_path) {
  const auto file = parse_safetensors_file(weights_path);

  std::ifstream sidecar_in(sidecar_path);
  if (!sidecar_in) throw Error(ErrorKind::FileNotFound, "no such file: " + sidecar_path.string());
  json sidecar;
  try {
    sidecar = json::parse(sidecar_in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, "sidecar is not valid JSON: " + std::string(e.what()));
  }
  if (!sidecar.is_object() || !sidecar.contains("prompts") || !sidecar["prompts"].is_array() ||
      !sidecar.contains("d_text") || !sidecar["d_text"].is_number_unsigned()) {
    throw Error(ErrorKind::InvalidInput, "sidecar must contain a 'prompts' array and an unsigned 'd_text'");
  }

  EmbeddingBundle bundle;
  bundle.d_text = sidecar["d_text"].get<std::size_t>();
  std::set<std::string> seen;
  for (const auto& item : sidecar["prompts"]) {
    if (!item.is_object() || !item.contains("id") || !item["id"].is_string() || !item.contains("role") ||
        !item["role"].is_string()) {
      throw Error(ErrorKind::InvalidInput, "sidecar prompt entries need string 'id' and 'role'");
    }
    PromptEmbedding prompt;
    prompt.id = item["id"].get<std::string>();
    if (!seen.insert(prompt.id).second) {
      throw Error(ErrorKind::InvalidInput, "duplicate prompt id '" + prompt.id + "'");
    }
    prompt.role = parse_role(item["role"].get<std::string>());
    if (item.contains("pair_index") && !item["pair_index"].is_null()) {
      if (!item["pair_index"].is_number_unsigned()) {
        throw Error(ErrorKind::InvalidInput, "pair_index of '" + prompt.id + "' must be a non-negative integer");
      }
      prompt.pair_index = item["pair_index"].get<std::size_t>();
    }
    if (item.contains("text") && item["text"].is_string()) prompt.text = item["text"].get<std::string>();

    const auto tokens_it = file.tensors.find(prompt_tokens_name(prompt.id));
    if (tokens_it == file.tensors.end()) {
      throw Error(ErrorKind::MissingTensor, "no tensor " + prompt_tokens_name(prompt.id) + " for sidecar id");
    }
    const auto mask_it = file.tensors.find(prompt_mask_name(prompt.id));
    if (mask_it == file.tensors.end()) {
      throw Error(ErrorKind::MissingMask, "no tensor " + prompt_mask_name(prompt.id));
    }
    if (!tokens_it->second.is_matrix()) {
      throw Error(ErrorKind::DimensionMismatch, "tokens of '" + prompt.id + "' must be 2-D");
    }
    prompt.tokens = tokens_it->second.to_float();
    if (!prompt.tokens.all_finite()) {
      throw Error(ErrorKind::NonFinite, "tokens of '" + prompt.id + "' contain NaN or Inf");
    }
    if (prompt.tokens.cols() != bundle.d_text) {
      throw Error(ErrorKind::DimensionMismatch, "tokens of '" + prompt.id + "' have width " +
                                                    std::to_string(prompt.tokens.cols()) + ", expected d_text " +
                                                    std::to_string(bundle.d_text));
    }
    prompt.valid_mask = decode_mask(prompt.id, mask_it->second);
    if (prompt.valid_mask.size() != prompt.tokens.rows()) {
      throw Error(ErrorKind::DimensionMismatch, "mask of '" + prompt.id + "' has length " +
                                                    std::to_string(prompt.valid_mask.size()) + " but tokens have " +
                                                    std::to_string(prompt.tokens.rows()) + " rows");
    }
    if (prompt.valid_count() == 0) {
      throw Error(ErrorKind::EmptyConcept, "prompt '" + prompt.id + "' must have at least one valid token");
    }
    bundle.prompts.push_back(std::move(prompt));
  }
  return bundle;
}

void write_embedding_bundle(const EmbeddingBundle& bundle, const std::filesystem::path& weights_path,
                            const std::filesystem::path& sidecar_path) {
  std::map<std::string, TensorEntry> tensors;
  json prompts = json::array();
  for (const auto& p : bundle.prompts) {
    tensors.emplace(prompt_tokens_name(p.id), TensorEntry::from_float(p.tokens));
    TensorEntry mask;
    mask.dtype = DType::U8;
    mask.shape = {static_cast<std::int64_t>(p.valid_mask.size())};
    for (bool v : p.valid_mask) mask.payload.push_back(v ? 1 : 0);
    tensors.emplace(prompt_mask_name(p.id), std::move(mask));
    prompts.push_back({{"id", p.id},
                       {"role", role_name(p.role)},
                       {"pair_index", p.pair_index ? json(*p.pair_index) : json(nullptr)},
                       {"text", p.text}});
  }
  write_file_bytes(weights_path, serialize_safetensors(tensors, {}));

  const json sidecar = {{"prompts", prompts}, {"d_text", bundle.d_text}};
  std::ofstream out(sidecar_path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + sidecar_path.string() + " for writing");
  out << sidecar.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed on " + sidecar_path.string());
}

}  // namespace rededit
