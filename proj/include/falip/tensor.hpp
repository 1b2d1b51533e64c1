#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace falip {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float32 array.
///
/// `numel() == product(shape())` always holds. Rank 0 holds a single scalar.
/// Kernels below never mutate their inputs; results are fresh tensors whose
/// values have been checked for finiteness.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<float> values);

  static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor vector(std::vector<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }

  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  std::span<const float> row(std::size_t r) const;
  std::span<float> row(std::size_t r);

  float operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  float& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{0};
  std::vector<float> data_;
};

/// Bitwise equality of shape and payload (distinguishes -0 from +0).
bool bit_identical(const Tensor& a, const Tensor& b);

/// Throws NumericError naming `where` if any element is NaN or Inf.
void require_finite(const Tensor& t, const char* where);

// Kernels. All 2-D arguments are rank-2; vectors are rank-1.

/// a[m×k] · b[k×n]. For each output element the k-terms are accumulated in
/// ascending order, so results are bit-reproducible.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& a);

inline constexpr float kLayerNormEps = 1e-5f;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  float eps = kLayerNormEps);

Tensor gelu(const Tensor& x);        // 0.5·x·(1 + erf(x/√2))
Tensor quick_gelu(const Tensor& x);  // x·σ(1.702·x)

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
/// Adds vector `bias` to every row of `x`.
Tensor add_row_vector(const Tensor& x, const Tensor& bias);

/// Columns [begin, begin+count) of a rank-2 tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
/// Rows [begin, begin+count) of a rank-2 tensor.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);

// Accumulated in double, ascending index order.
double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> a);
/// x / ‖x‖₂ for a rank-1 tensor; zero vectors are an ArgumentError.
Tensor l2_normalize(const Tensor& x);

}  // namespace falip
