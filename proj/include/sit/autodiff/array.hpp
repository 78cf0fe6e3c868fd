#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sit/errors.hpp"

namespace sit::ad {

// Every tensor the encoder needs is a matrix; vectors are 1 x n rows.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major matrix of T (float for training, double for gradient checks).
template <typename T>
class Array {
 public:
  using Scalar = T;
  using MatrixMap = Eigen::Map<RowMatrix<T>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

  Array() = default;
  explicit Array(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
  Array(std::size_t rows, std::size_t cols, T fill = T{0}) : Array(Shape{rows, cols}, fill) {}
  Array(Shape shape, const std::vector<T>& values) : shape_(shape), data_(values.begin(), values.end()) {
    if (data_.size() != shape_.size())
      throw ShapeError("array of shape " + shape_.str() + " given " + std::to_string(data_.size()) +
                       " values");
  }

  Shape shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * shape_.cols, shape_.cols}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * shape_.cols, shape_.cols}; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  MatrixMap mat() {
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(shape_.rows),
                     static_cast<Eigen::Index>(shape_.cols));
  }
  ConstMatrixMap mat() const {
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(shape_.rows),
                          static_cast<Eigen::Index>(shape_.cols));
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Array<U> cast() const {
    Array<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T x) { return static_cast<U>(x); });
    return out;
  }

 private:
  Shape shape_;
  std::vector<T, Eigen::aligned_allocator<T>> data_;
};

}  // namespace sit::ad
