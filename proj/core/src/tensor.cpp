#include "hdk/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "hdk/error.hpp"

namespace hdk {
namespace {

std::int64_t product(const Tensor::Shape& s) {
  require(!s.empty() && s.size() <= 4, "tensor rank must be 1..4, got " + shape_str(s));
  std::int64_t p = 1;
  for (auto d : s) {
    require(d >= 1, "tensor dims must be >= 1, got " + shape_str(s));
    p *= d;
  }
  return p;
}

}  // namespace

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(product(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != product(shape_)) {
    fail(ErrorKind::kInvalidArgument,
         "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
             shape_str(shape_));
  }
}

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_str(const Tensor::Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * a.numel()) == 0;
}

}  // namespace hdk
