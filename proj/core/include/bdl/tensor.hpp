#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bdl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float tensor. Values are checked to be finite on
// construction; gradients are an optional buffer of matching length.
class Tensor {
 public:
  // Rank-0 tensor holding 0.
  Tensor();
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }
  // Element (r, c) of a rank-2 tensor.
  float at(std::size_t r, std::size_t c) const;

  // Scalar value of a one-element tensor.
  float item() const;

  Tensor reshaped(Shape shape) const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return grad_.has_value(); }
  std::vector<float>& grad();
  const std::vector<float>& grad() const;
  // Allocate (or reset) the gradient buffer to zeros.
  std::vector<float>& zero_grad();
  void clear_grad() { grad_.reset(); }

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  friend class Graph;
  struct Unchecked {};
  Tensor(Unchecked, Shape shape, std::vector<float> data);

  Shape shape_;
  std::vector<float> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<float>> grad_;
};

}  // namespace bdl
