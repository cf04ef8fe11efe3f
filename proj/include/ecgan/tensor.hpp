#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecgan {

// Dense row-major tensor. Images are stored {channels, height, width},
// matrices {rows, cols}, vectors {n}. Value semantics throughout; every
// operation that needs scratch state takes it explicitly.
template <typename T = double>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> shape, T fill_value = T{})
      : shape_(std::move(shape)),
        data_(count(shape_), fill_value) {}

  TensorT(std::initializer_list<std::size_t> shape, T fill_value = T{})
      : TensorT(std::vector<std::size_t>(shape), fill_value) {}

  static TensorT zeros_like(const TensorT& other) { return TensorT(other.shape_); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t r, std::size_t c) {
    assert(ndim() == 2);
    return data_[r * shape_[1] + c];
  }
  const T& at(std::size_t r, std::size_t c) const {
    assert(ndim() == 2);
    return data_[r * shape_[1] + c];
  }
  T& at(std::size_t ch, std::size_t r, std::size_t c) {
    assert(ndim() == 3);
    return data_[(ch * shape_[1] + r) * shape_[2] + c];
  }
  const T& at(std::size_t ch, std::size_t r, std::size_t c) const {
    assert(ndim() == 3);
    return data_[(ch * shape_[1] + r) * shape_[2] + c];
  }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  // Reinterprets the buffer under a new shape with the same element count.
  TensorT reshaped(std::vector<std::size_t> new_shape) const {
    if (count(new_shape) != size())
      throw std::invalid_argument("tensor reshape: element count mismatch");
    TensorT out;
    out.shape_ = std::move(new_shape);
    out.data_ = data_;
    return out;
  }

  TensorT& operator+=(const TensorT& other) {
    assert(same_shape(other));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  TensorT& operator-=(const TensorT& other) {
    assert(same_shape(other));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
  }

  TensorT& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend bool operator==(const TensorT& a, const TensorT& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           std::multiplies<std::size_t>());
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<double>;

inline std::string shape_string(const Tensor& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.ndim(); ++i)
    s += (i ? "x" : "") + std::to_string(t.shape()[i]);
  return s + ")";
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                shape_string(a) + " vs " + shape_string(b));
}

inline double mean_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mean_abs_diff");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ecgan
