#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hdk {

// Row-major single-channel 2-D array.
template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, T fill = T{})
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t size() const { return data.size(); }
  bool same_dims(const Grid& o) const {
    return height == o.height && width == o.width;
  }

  T& operator()(int y, int x) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  const T& operator()(int y, int x) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

// Probability map, every value in [0, 1].
using ProbMap = Grid<float>;
// Binary mask, every value in {0, 1}.
using BinaryMask = Grid<std::uint8_t>;

}  // namespace hdk
