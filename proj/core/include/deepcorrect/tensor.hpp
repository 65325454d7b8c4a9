#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "deepcorrect/errors.hpp"

namespace deepcorrect {

inline int64_t numel_of(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

// Dense N-dimensional array, row-major. Image tensors use (batch, channel,
// height, width) dimension order. Scalar type is float for training and
// double for gradient checks.
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    for (int d : shape) check_shape(d > 0, "dimension must be positive, got " + shape_str(shape));
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  TensorT(std::vector<int> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    check_shape(numel_of(shape) == static_cast<int64_t>(data.size()),
                "data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool empty() const { return data.empty(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  // 4-D accessors for (B,C,H,W) tensors.
  int64_t idx4(int b, int c, int h, int w) const {
    return ((static_cast<int64_t>(b) * shape[1] + c) * shape[2] + h) * shape[3] + w;
  }
  T& at4(int b, int c, int h, int w) { return data[static_cast<size_t>(idx4(b, c, h, w))]; }
  const T& at4(int b, int c, int h, int w) const { return data[static_cast<size_t>(idx4(b, c, h, w))]; }

  T& at2(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  const T& at2(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

template <typename T>
bool same_shape(const TensorT<T>& a, const TensorT<T>& b) {
  return a.shape == b.shape;
}

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  check_shape(a.shape == b.shape, "max_abs_diff shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  double m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

}  // namespace deepcorrect
