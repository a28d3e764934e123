#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hdk {

// Dense row-major float32 array of rank 1..4. Images and feature maps are
// NCHW; linear weights are (out, in).
class Tensor {
 public:
  using Shape = std::vector<std::int64_t>;

  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_.at(i); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  // NCHW accessors; rank must be 4.
  std::int64_t n() const { return shape_[0]; }
  std::int64_t c() const { return shape_[1]; }
  std::int64_t h() const { return shape_[2]; }
  std::int64_t w() const { return shape_[3]; }
  float& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  float at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  // Pointer to plane (n, c) of a rank-4 tensor.
  float* plane(std::int64_t n, std::int64_t c) {
    return data_.data() + (n * shape_[1] + c) * shape_[2] * shape_[3];
  }
  const float* plane(std::int64_t n, std::int64_t c) const {
    return data_.data() + (n * shape_[1] + c) * shape_[2] * shape_[3];
  }

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

std::string shape_str(const Tensor::Shape& s);

// Same shape and identical bit patterns.
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace hdk
