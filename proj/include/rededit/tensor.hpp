#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace rededit {

/// Dense double-precision matrix used for all solver-side algebra. Row-major so
/// that row spans line up with Tensor2D rows in the kernels.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Element types that may appear in a safetensors header.
enum class DType { F64, F32, F16, BF16, I64, I32, I16, I8, U64, U32, U16, U8, Bool, F8_E4M3, F8_E5M2 };

std::string_view dtype_name(DType dtype) noexcept;
std::optional<DType> parse_dtype(std::string_view name) noexcept;
std::size_t dtype_size(DType dtype) noexcept;
/// Float types that can be promoted to float32 for editing.
bool is_editable(DType dtype) noexcept;

float half_to_float(std::uint16_t bits) noexcept;
std::uint16_t float_to_half(float value) noexcept;
float bfloat16_to_float(std::uint16_t bits) noexcept;

/// Row-major float32 matrix. data.size() == rows * cols always holds.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

Matrix to_matrix(const Tensor2D& t);
Tensor2D to_tensor(const Matrix& m);

/// One tensor as stored on disk: dtype, shape and the untouched payload bytes.
struct TensorEntry {
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const noexcept;
  bool is_matrix() const noexcept { return shape.size() == 2; }

  /// Decode a 2-D float tensor (F32, F16 or BF16) to float32.
  /// Throws UnsupportedDtype for other dtypes, ShapeMismatch for rank != 2.
  Tensor2D to_float() const;
  static TensorEntry from_float(const Tensor2D& t);

  friend bool operator==(const TensorEntry&, const TensorEntry&) = default;
};

/// Named 2-D tensors of a checkpoint plus its free-form string metadata.
struct WeightBundle {
  std::map<std::string, TensorEntry> entries;
  std::map<std::string, std::string> metadata;
  /// Tensors of rank != 2 kept verbatim so a rewrite reproduces them.
  std::map<std::string, TensorEntry> passthrough;
  /// Names of tensors skipped while reading (rank != 2). Not part of equality.
  std::vector<std::string> warnings;

  bool contains(const std::string& name) const { return entries.count(name) != 0; }
  const TensorEntry& at(const std::string& name) const;

  friend bool operator==(const WeightBundle& a, const WeightBundle& b) {
    return a.entries == b.entries && a.passthrough == b.passthrough && a.metadata == b.metadata;
  }
};

}  // namespace rededit
