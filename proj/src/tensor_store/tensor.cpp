#include "rededit/tensor.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "rededit/error.hpp"

namespace rededit {

namespace {

struct DTypeInfo {
  DType dtype;
  std::string_view name;
  std::size_t size;
};

constexpr std::array<DTypeInfo, 15> kDTypes{{
    {DType::F64, "F64", 8},
    {DType::F32, "F32", 4},
    {DType::F16, "F16", 2},
    {DType::BF16, "BF16", 2},
    {DType::I64, "I64", 8},
    {DType::I32, "I32", 4},
    {DType::I16, "I16", 2},
    {DType::I8, "I8", 1},
    {DType::U64, "U64", 8},
    {DType::U32, "U32", 4},
    {DType::U16, "U16", 2},
    {DType::U8, "U8", 1},
    {DType::Bool, "BOOL", 1},
    {DType::F8_E4M3, "F8_E4M3", 1},
    {DType::F8_E5M2, "F8_E5M2", 1},
}};

const DTypeInfo& info(DType dtype) noexcept {
  for (const auto& entry : kDTypes) {
    if (entry.dtype == dtype) return entry;
  }
  return kDTypes[1];
}

std::uint16_t load_u16(const std::uint8_t* p) noexcept {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::FileNotFound: return "FileNotFound";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::UnsupportedDtype: return "UnsupportedDtype";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::MissingMask: return "MissingMask";
    case ErrorKind::MissingTensor: return "MissingTensor";
    case ErrorKind::RoleUnknown: return "RoleUnknown";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyConcept: return "EmptyConcept";
    case ErrorKind::NoMatch: return "NoMatch";
    case ErrorKind::EmptyAfterMasking: return "EmptyAfterMasking";
    case ErrorKind::ZeroPreservationGram: return "ZeroPreservationGram";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::HttpStatus: return "HttpStatus";
    case ErrorKind::MissingApiKey: return "MissingApiKey";
    case ErrorKind::MalformedResponseBody: return "MalformedResponseBody";
    case ErrorKind::NoJsonArrayFound: return "NoJsonArrayFound";
    case ErrorKind::EmptyResult: return "EmptyResult";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::MissingEmbedding: return "MissingEmbedding";
    case ErrorKind::IncompleteReport: return "IncompleteReport";
  }
  return "Unknown";
}

std::string_view dtype_name(DType dtype) noexcept { return info(dtype).name; }

std::optional<DType> parse_dtype(std::string_view name) noexcept {
  for (const auto& entry : kDTypes) {
    if (entry.name == name) return entry.dtype;
  }
  return std::nullopt;
}

std::size_t dtype_size(DType dtype) noexcept { return info(dtype).size; }

bool is_editable(DType dtype) noexcept {
  return dtype == DType::F32 || dtype == DType::F16 || dtype == DType::BF16;
}

float half_to_float(std::uint16_t bits) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  std::uint32_t exponent = (bits >> 10) & 0x1fu;
  std::uint32_t mantissa = bits & 0x3ffu;
  std::uint32_t out;
  if (exponent == 0) {
    if (mantissa == 0) {
      out = sign;
    } else {
      // subnormal: renormalize
      exponent = 127 - 15 + 1;
      while ((mantissa & 0x400u) == 0) {
        mantissa <<= 1;
        --exponent;
      }
      mantissa &= 0x3ffu;
      out = sign | (exponent << 23) | (mantissa << 13);
    }
  } else if (exponent == 0x1f) {
    out = sign | 0x7f800000u | (mantissa << 13);
  } else {
    out = sign | ((exponent + 127 - 15) << 23) | (mantissa << 13);
  }
  return std::bit_cast<float>(out);
}

std::uint16_t float_to_half(float value) noexcept {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
  const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t abs = x & 0x7fffffffu;
  if (abs >= 0x7f800000u) {
    // inf or nan
    return static_cast<std::uint16_t>(sign | 0x7c00u | (abs > 0x7f800000u ? 0x200u : 0u));
  }
  if (abs >= 0x477ff000u) return static_cast<std::uint16_t>(sign | 0x7c00u);  // overflow
  if (abs < 0x38800000u) {
    // subnormal or zero in half precision
    if (abs < 0x33000000u) return sign;
    const std::uint32_t exponent = abs >> 23;
    const std::uint32_t mantissa = (abs & 0x7fffffu) | 0x800000u;
    const std::uint32_t shift = 126 - exponent;  // 14 + (112 - exponent) + 1 - 1
    std::uint32_t half_m = mantissa >> shift;
    const std::uint32_t rem = mantissa & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half_m & 1u))) ++half_m;
    return static_cast<std::uint16_t>(sign | half_m);
  }
  std::uint32_t rounded = abs - 0x38000000u;  // rebias 127 -> 15
  const std::uint32_t rem = rounded & 0x1fffu;
  rounded >>= 13;
  if (rem > 0x1000u || (rem == 0x1000u && (rounded & 1u))) ++rounded;
  return static_cast<std::uint16_t>(sign | rounded);
}

float bfloat16_to_float(std::uint16_t bits) noexcept {
  return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorKind::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                              " does not match shape " + std::to_string(rows_) + "x" +
                                              std::to_string(cols_));
  }
}

bool Tensor2D::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix to_matrix(const Tensor2D& t) {
  Matrix m(t.rows(), t.cols());
  const auto src = t.data();
  double* dst = m.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  return m;
}

Tensor2D to_tensor(const Matrix& m) {
  std::vector<float> data(static_cast<std::size_t>(m.size()));
  const double* src = m.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(src[i]);
  return Tensor2D(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), std::move(data));
}

std::size_t TensorEntry::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor2D TensorEntry::to_float() const {
  if (shape.size() != 2) {
    throw Error(ErrorKind::ShapeMismatch, "expected a 2-D tensor, got rank " + std::to_string(shape.size()));
  }
  const auto rows = static_cast<std::size_t>(shape[0]);
  const auto cols = static_cast<std::size_t>(shape[1]);
  std::vector<float> out(rows * cols);
  const std::uint8_t* p = payload.data();
  switch (dtype) {
    case DType::F32:
      if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), p, out.size() * sizeof(float));
      } else {
        for (std::size_t i = 0; i < out.size(); ++i) {
          std::uint32_t v = 0;
          for (int b = 3; b >= 0; --b) v = (v << 8) | p[i * 4 + b];
          out[i] = std::bit_cast<float>(v);
        }
      }
      break;
    case DType::F16:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = half_to_float(load_u16(p + 2 * i));
      break;
    case DType::BF16:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = bfloat16_to_float(load_u16(p + 2 * i));
      break;
    default:
      throw Error(ErrorKind::UnsupportedDtype,
                  "dtype " + std::string(dtype_name(dtype)) + " cannot be edited (need F32, F16 or BF16)");
  }
  return Tensor2D(rows, cols, std::move(out));
}

TensorEntry TensorEntry::from_float(const Tensor2D& t) {
  TensorEntry e;
  e.dtype = DType::F32;
  e.shape = {static_cast<std::int64_t>(t.rows()), static_cast<std::int64_t>(t.cols())};
  e.payload.resize(t.size() * sizeof(float));
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(e.payload.data(), t.data().data(), e.payload.size());
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto v = std::bit_cast<std::uint32_t>(t.data()[i]);
      for (int b = 0; b < 4; ++b) e.payload[i * 4 + b] = static_cast<std::uint8_t>(v >> (8 * b));
    }
  }
  return e;
}

const TensorEntry& WeightBundle::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw Error(ErrorKind::MissingTensor, "tensor '" + name + "' not in bundle");
  return it->second;
}

}  // namespace rededit
