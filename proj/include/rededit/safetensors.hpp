#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rededit/tensor.hpp"

namespace rededit {

/// Every tensor of a safetensors file regardless of rank, payloads untouched.
struct SafetensorsFile {
  std::map<std::string, TensorEntry> tensors;
  std::map<std::string, std::string> metadata;
};

/// Parse the safetensors byte layout: u64 little-endian header length, JSON
/// header, raw buffer. Offsets are validated against the buffer and against
/// each other; any violation is MalformedHeader.
SafetensorsFile parse_safetensors(std::span<const std::uint8_t> bytes);
SafetensorsFile parse_safetensors_file(const std::filesystem::path& path);

/// Serialize tensors in name order. The header is padded with spaces to an
/// 8-byte boundary so the buffer starts aligned.
std::vector<std::uint8_t> serialize_safetensors(const std::map<std::string, TensorEntry>& tensors,
                                                const std::map<std::string, std::string>& metadata);

/// Load every 2-D tensor. Other ranks are skipped and named in
/// WeightBundle::warnings. Float tensors must be finite.
WeightBundle read_safetensors(const std::filesystem::path& path);

void write_safetensors(const WeightBundle& bundle, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace rededit
