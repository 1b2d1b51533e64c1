#include "falip/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "falip/errors.hpp"

namespace falip {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor: shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<float> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(v));
}

Tensor Tensor::vector(std::vector<float> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("tensor: axis out of range");
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("tensor: expected rank 2, got " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("tensor: expected rank 2, got " + shape_str(shape_));
  return shape_[1];
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  if (r >= shape_[0]) throw ShapeError("tensor: row out of range");
  return std::span<const float>(data_).subspan(r * c, c);
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  if (r >= shape_[0]) throw ShapeError("tensor: row out of range");
  return std::span<float>(data_).subspan(r * c, c);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("tensor: cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.numel() == 0 ||
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

void require_finite(const Tensor& t, const char* where) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(where) + ": non-finite value");
  }
}

namespace {

void require_matrix(const Tensor& t, const char* where) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(where) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(where) + ": shape " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& x, F f, const char* where) {
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  require_finite(out, where);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor out({m, n});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = out.data().data();
  // i-k-j order: each c[i][j] sees its k-terms in ascending k.
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = pc + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const float aik = pa[i * k + kk];
      const float* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  require_finite(out, "matmul");
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = a(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  require_finite(a, "softmax_rows");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    auto src = a.row(i);
    auto dst = out.row(i);
    if (c == 0) continue;
    const float mx = *std::max_element(src.begin(), src.end());
    // Normalizer accumulated in double so long rows still sum to 1 within 1e-6.
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      dst[j] = std::exp(src[j] - mx);
      sum += dst[j];
    }
    for (std::size_t j = 0; j < c; ++j) dst[j] = static_cast<float>(dst[j] / sum);
  }
  require_finite(out, "softmax_rows");
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  require_matrix(x, "layer_norm");
  if (!(eps > 0.0f)) throw ArgumentError("layer_norm: eps must be positive");
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain/bias length must equal " + std::to_string(d));
  }
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    auto src = x.row(i);
    auto dst = out.row(i);
    float mean = 0.0f;
    for (float v : src) mean += v;
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (float v : src) var += (v - mean) * (v - mean);
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) dst[j] = (src[j] - mean) * inv * gain[j] + bias[j];
  }
  require_finite(out, "layer_norm");
  return out;
}

Tensor gelu(const Tensor& x) {
  return map(
      x, [](float v) { return 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752f)); }, "gelu");
}

Tensor quick_gelu(const Tensor& x) {
  return map(
      x, [](float v) { return v / (1.0f + std::exp(-1.702f * v)); }, "quick_gelu");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  require_finite(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  require_finite(out, "sub");
  return out;
}

Tensor scale(const Tensor& a, float s) {
  return map(a, [s](float v) { return v * s; }, "scale");
}

Tensor add_row_vector(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row_vector");
  const std::size_t r = x.rows(), c = x.cols();
  if (bias.numel() != c) throw ShapeError("add_row_vector: bias length mismatch");
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = x(i, j) + bias[j];
  require_finite(out, "add_row_vector");
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_cols");
  if (begin + count > a.cols()) throw ShapeError("slice_cols: range out of bounds");
  Tensor out({a.rows(), count});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, begin + j);
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_rows");
  if (begin + count > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t c = a.cols();
  std::vector<float> v(a.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                       a.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return Tensor({count, c}, std::move(v));
}

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double l2_norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

Tensor l2_normalize(const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("l2_normalize: expected rank-1 tensor");
  const double n = l2_norm(x.data());
  if (!(n > 0.0) || !std::isfinite(n)) throw ArgumentError("l2_normalize: zero-norm vector");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    out[i] = static_cast<float>(static_cast<double>(x[i]) / n);
  return out;
}

}  // namespace falip
