#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "geogan/common.hpp"

namespace geogan {

// Dense row-major N-d array. Shape {H,W} for raster layers, {C,H,W} for
// network activations, {O,I,Kh,Kw} for conv weights.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}
  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != checked_numel(shape_))
      throw ValidationError("tensor: data length does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, T v) { return Tensor(std::move(shape), v); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 2-D access, shape {H,W}.
  T& at(int r, int c) {
    assert(ndim() == 2);
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
  }
  const T& at(int r, int c) const {
    assert(ndim() == 2);
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
  }

  // 3-D access, shape {C,H,W}.
  T& at(int ch, int r, int c) {
    assert(ndim() == 3);
    return data_[(static_cast<std::size_t>(ch) * shape_[1] + r) * shape_[2] + c];
  }
  const T& at(int ch, int r, int c) const {
    assert(ndim() == 3);
    return data_[(static_cast<std::size_t>(ch) * shape_[1] + r) * shape_[2] + c];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.reset(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[static_cast<std::int64_t>(i)] = static_cast<U>(data_[i]);
    return out;
  }

  void reset(std::vector<int> shape, T fill = T(0)) {
    shape_ = std::move(shape);
    data_.assign(checked_numel(shape_), fill);
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

  static std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
  }

 private:
  static std::int64_t checked_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ValidationError("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Layer = Tensor<float>;  // one raster plane, shape {H,W}

}  // namespace geogan
