#include "rededit/safetensors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "rededit/error.hpp"

namespace rededit {

namespace {

using json = nlohmann::json;

constexpr std::size_t kLengthPrefix = 8;

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorKind::MalformedHeader, what); }

std::uint64_t load_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

bool float_payload_finite(const TensorEntry& e) {
  if (!is_editable(e.dtype)) return true;
  return e.to_float().all_finite();
}

}  // namespace

SafetensorsFile parse_safetensors(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kLengthPrefix) malformed("file shorter than the 8-byte header length field");
  const std::uint64_t header_len = load_u64_le(bytes.data());
  if (header_len > bytes.size() - kLengthPrefix) {
    malformed("header length " + std::to_string(header_len) + " exceeds file size " + std::to_string(bytes.size()));
  }
  const auto header_begin = reinterpret_cast<const char*>(bytes.data() + kLengthPrefix);
  json header;
  try {
    header = json::parse(header_begin, header_begin + header_len);
  } catch (const json::parse_error& e) {
    malformed(std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object()) malformed("header must be a JSON object");

  const auto buffer = bytes.subspan(kLengthPrefix + header_len);
  SafetensorsFile file;
  struct Span {
    std::uint64_t begin, end;
    const std::string* name;
  };
  std::vector<Span> spans;

  for (const auto& [name, desc] : header.items()) {
    if (name == "__metadata__") {
      if (!desc.is_object()) malformed("__metadata__ must be an object");
      for (const auto& [key, value] : desc.items()) {
        if (!value.is_string()) malformed("__metadata__ value for '" + key + "' is not a string");
        file.metadata.emplace(key, value.get<std::string>());
      }
      continue;
    }
    if (!desc.is_object() || !desc.contains("dtype") || !desc.contains("shape") || !desc.contains("data_offsets")) {
      malformed("tensor '" + name + "' lacks dtype/shape/data_offsets");
    }
    const auto& dtype_field = desc["dtype"];
    if (!dtype_field.is_string()) malformed("tensor '" + name + "' dtype is not a string");
    const auto dtype = parse_dtype(dtype_field.get<std::string>());
    if (!dtype) malformed("tensor '" + name + "' has unknown dtype " + dtype_field.get<std::string>());

    TensorEntry entry;
    entry.dtype = *dtype;
    const auto& shape = desc["shape"];
    if (!shape.is_array()) malformed("tensor '" + name + "' shape is not an array");
    for (const auto& d : shape) {
      if (!d.is_number_unsigned()) malformed("tensor '" + name + "' has a non-integral dimension");
      entry.shape.push_back(d.get<std::int64_t>());
    }
    const auto& offsets = desc["data_offsets"];
    if (!offsets.is_array() || offsets.size() != 2 || !offsets[0].is_number_unsigned() ||
        !offsets[1].is_number_unsigned()) {
      malformed("tensor '" + name + "' data_offsets must be two unsigned integers");
    }
    const auto begin = offsets[0].get<std::uint64_t>();
    const auto end = offsets[1].get<std::uint64_t>();
    if (begin > end || end > buffer.size()) {
      malformed("tensor '" + name + "' offsets [" + std::to_string(begin) + ", " + std::to_string(end) +
                ") out of bounds for buffer of " + std::to_string(buffer.size()) + " bytes");
    }
    if (end - begin != entry.element_count() * dtype_size(entry.dtype)) {
      malformed("tensor '" + name + "' byte length does not match its shape and dtype");
    }
    entry.payload.assign(buffer.begin() + static_cast<std::ptrdiff_t>(begin),
                         buffer.begin() + static_cast<std::ptrdiff_t>(end));
    auto [it, _] = file.tensors.emplace(name, std::move(entry));
    spans.push_back({begin, end, &it->first});
  }

  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].begin < spans[i - 1].end) {
      malformed("tensors '" + *spans[i - 1].name + "' and '" + *spans[i].name + "' overlap");
    }
  }
  return file;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorKind::FileNotFound, "no such file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error(ErrorKind::IoError, "short read on " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorKind::IoError, "write failed on " + path.string());
}

SafetensorsFile parse_safetensors_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_safetensors(bytes);
}

std::vector<std::uint8_t> serialize_safetensors(const std::map<std::string, TensorEntry>& tensors,
                                                const std::map<std::string, std::string>& metadata) {
  json header = json::object();
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::uint64_t offset = 0;
  for (const auto& [name, entry] : tensors) {
    if (entry.payload.size() != entry.element_count() * dtype_size(entry.dtype)) {
      throw Error(ErrorKind::InvalidInput, "tensor '" + name + "' payload does not match its shape");
    }
    header[name] = {{"dtype", dtype_name(entry.dtype)},
                    {"shape", entry.shape},
                    {"data_offsets", {offset, offset + entry.payload.size()}}};
    offset += entry.payload.size();
  }
  std::string text = header.dump();
  text.append((kLengthPrefix - text.size() % kLengthPrefix) % kLengthPrefix, ' ');

  std::vector<std::uint8_t> out;
  out.reserve(kLengthPrefix + text.size() + offset);
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [_, entry] : tensors) out.insert(out.end(), entry.payload.begin(), entry.payload.end());
  return out;
}

WeightBundle read_safetensors(const std::filesystem::path& path) {
  auto file = parse_safetensors_file(path);
  WeightBundle bundle;
  bundle.metadata = std::move(file.metadata);
  for (auto& [name, entry] : file.tensors) {
    if (!entry.is_matrix()) {
      bundle.warnings.push_back(name + ": rank " + std::to_string(entry.shape.size()) + " tensor skipped");
      bundle.passthrough.emplace(name, std::move(entry));
      continue;
    }
    if (!float_payload_finite(entry)) {
      throw Error(ErrorKind::NonFinite, "tensor '" + name + "' contains NaN or Inf");
    }
    bundle.entries.emplace(name, std::move(entry));
  }
  return bundle;
}

void write_safetensors(const WeightBundle& bundle, const std::filesystem::path& path) {
  if (bundle.entries.empty() && bundle.passthrough.empty()) throw Error(ErrorKind::InvalidInput, "refusing to write an empty bundle");
  auto tensors = bundle.entries;
  for (const auto& [name, entry] : bundle.passthrough) {
    if (!tensors.emplace(name, entry).second) {
      throw Error(ErrorKind::InvalidInput, "tensor '" + name + "' is both editable and passthrough");
    }
  }
  const auto bytes = serialize_safetensors(tensors, bundle.metadata);
  write_file_bytes(path, bytes);
}

}  // namespace rededit
