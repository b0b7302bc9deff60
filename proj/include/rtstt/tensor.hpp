#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "rtstt/half.hpp"

namespace rtstt {

enum class DType : std::uint8_t { F32 = 0, F16 = 1 };

inline const char* to_string(DType d) { return d == DType::F32 ? "f32" : "f16"; }

inline std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 2; }

template <class T>
concept Scalar = std::is_same_v<T, float> || std::is_same_v<T, Half>;

template <Scalar T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::F32 : DType::F16;
}

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

/// Dense row-major tensor. Feature maps flowing through the network use the
/// frame-major layout (T, B, C, F): every time frame is one contiguous block,
/// which is what makes frame-at-a-time streaming cheap.
template <Scalar T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(checked_size(shape_)) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  static constexpr DType dtype() { return dtype_of<T>(); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element access by multi-index; bounds-checked.
  T& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
  const T& at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

  void reshape(Shape shape) {
    if (checked_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_size(const Shape& shape) {
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    return shape_size(shape);
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch");
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[axis]) throw std::out_of_range("tensor index out of range");
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

template <Scalar T>
inline float to_f32(T v) {
  if constexpr (std::is_same_v<T, float>) {
    return v;
  } else {
    return static_cast<float>(v);
  }
}

template <Scalar T>
inline T from_f32(float v) {
  if constexpr (std::is_same_v<T, float>) {
    return v;
  } else {
    return Half(v);
  }
}

/// Elementwise conversion. F32->F16 rounds to nearest even, F16->F32 is exact.
template <Scalar To, Scalar From>
Tensor<To> cast(const Tensor<From>& in) {
  if constexpr (std::is_same_v<To, From>) {
    return in;
  } else if constexpr (std::is_same_v<To, float>) {
    std::vector<float> out(in.size());
    widen(in.data(), out.data());
    return Tensor<float>(in.shape(), std::move(out));
  } else {
    std::vector<Half> out(in.size());
    narrow(in.data(), out.data());
    return Tensor<Half>(in.shape(), std::move(out));
  }
}

namespace detail {

/// Float view of a tensor's data: aliases F32 storage, widens F16 storage.
template <Scalar T>
class FloatData {
 public:
  explicit FloatData(std::span<const T> src) {
    if constexpr (std::is_same_v<T, float>) {
      view_ = src;
    } else {
      owned_.resize(src.size());
      widen(src, owned_.data());
      view_ = owned_;
    }
  }
  const float* data() const { return view_.data(); }
  std::size_t size() const { return view_.size(); }

 private:
  std::vector<float> owned_;
  std::span<const float> view_;
};

/// Output sink: writes straight into F32 storage, or stages in float and
/// rounds into F16 storage on commit().
template <Scalar T>
class FloatSink {
 public:
  explicit FloatSink(Tensor<T>& dst) : dst_(dst) {
    if constexpr (!std::is_same_v<T, float>) staging_.assign(dst.size(), 0.0f);
  }
  float* data() {
    if constexpr (std::is_same_v<T, float>) {
      return dst_.data().data();
    } else {
      return staging_.data();
    }
  }
  void commit() {
    if constexpr (!std::is_same_v<T, float>) narrow(staging_, dst_.data().data());
  }

 private:
  Tensor<T>& dst_;
  std::vector<float> staging_;
};

}  // namespace detail

}  // namespace rtstt
