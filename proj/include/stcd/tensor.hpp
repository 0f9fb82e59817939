#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stcd/error.hpp"

namespace stcd {

// Dense row-major tensor. float for training/inference storage, double for
// gradient checking; both instantiations share all kernels.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(checked_numel(shape_)), T(0));
  }

  static TensorT full(std::vector<int> shape, T value) {
    TensorT t(std::move(shape));
    t.fill(value);
    return t;
  }

  static TensorT from(std::vector<int> shape, std::vector<T> data) {
    TensorT t;
    t.shape_ = std::move(shape);
    require(static_cast<std::int64_t>(data.size()) == checked_numel(t.shape_),
            errc::shape_mismatch, "tensor data length does not match shape");
    t.data_ = std::move(data);
    return t;
  }

  static TensorT scalar(T v) { return from({1}, {v}); }

  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // Unchecked multi-dim access; indices must respect ndim().
  T& at(int i0) { return data_[static_cast<std::size_t>(i0)]; }
  T& at(int i0, int i1) { return data_[static_cast<std::size_t>(i0) * shape_[1] + i1]; }
  T& at(int i0, int i1, int i2) {
    return data_[(static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2];
  }
  T& at(int i0, int i1, int i2, int i3) {
    return data_[((static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3];
  }
  const T& at(int i0) const { return data_[static_cast<std::size_t>(i0)]; }
  const T& at(int i0, int i1) const { return data_[static_cast<std::size_t>(i0) * shape_[1] + i1]; }
  const T& at(int i0, int i1, int i2) const {
    return data_[(static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2];
  }
  const T& at(int i0, int i1, int i2, int i3) const {
    return data_[((static_cast<std::size_t>(i0) * shape_[1] + i1) * shape_[2] + i2) * shape_[3] + i3];
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ')';
    return os.str();
  }

 private:
  static std::int64_t checked_numel(const std::vector<int>& shape) {
    require(!shape.empty(), errc::shape_mismatch, "tensor shape must have at least one dim");
    std::int64_t n = 1;
    for (int d : shape) {
      require(d > 0, errc::shape_mismatch, "tensor dims must be positive, got " + std::to_string(d));
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

template <typename To, typename From>
TensorT<To> tensor_cast(const TensorT<From>& x) {
  std::vector<To> d(static_cast<std::size_t>(x.numel()));
  for (std::int64_t i = 0; i < x.numel(); ++i) d[static_cast<std::size_t>(i)] = static_cast<To>(x[i]);
  return TensorT<To>::from(x.shape(), std::move(d));
}

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* who) {
  require(a.same_shape(b), errc::shape_mismatch,
          std::string(who) + ": shape " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace stcd
