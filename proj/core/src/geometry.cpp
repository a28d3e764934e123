#include <algorithm>

#include "hdk/dataio.hpp"
#include "hdk/error.hpp"
#include "hdk/ops.hpp"

namespace hdk::io {

Prepared pad_resize(const Tensor& image, int target) {
  require(image.rank() == 4, "pad_resize: expected an N x C x H x W tensor, got " +
                                 shape_str(image.shape()));
  require(target >= 32 && target % 32 == 0,
          "pad_resize: target " + std::to_string(target) + " must be a positive multiple of 32");
  Prepared out;
  Geometry& g = out.geometry;
  g.orig_h = static_cast<int>(image.h());
  g.orig_w = static_cast<int>(image.w());
  g.side = std::max(g.orig_h, g.orig_w);
  g.pad_bottom = g.side - g.orig_h;
  g.pad_right = g.side - g.orig_w;
  g.target = target;

  Tensor square = (g.pad_bottom || g.pad_right)
                      ? engine::pad_zero(image, 0, g.pad_bottom, 0, g.pad_right)
                      : image;
  out.image = g.side == target ? std::move(square)
                               : engine::bilinear_resize(square, target, target);
  return out;
}

BinaryMask invert(const BinaryMask& mask, const Geometry& g) {
  require(g.orig_h >= 1 && g.orig_w >= 1 && g.side >= std::max(g.orig_h, g.orig_w),
          "invert: inconsistent geometry record");
  require(mask.height == g.target && mask.width == g.target,
          "invert: mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
              " but geometry expects " + std::to_string(g.target) + "x" +
              std::to_string(g.target));
  // floor((r + 0.5) * target / side) in exact integer arithmetic
  auto src = [&](int r) {
    const long long v = (2LL * r + 1) * g.target / (2LL * g.side);
    return static_cast<int>(std::min<long long>(v, g.target - 1));
  };
  std::vector<int> col(g.orig_w);
  for (int c = 0; c < g.orig_w; ++c) col[c] = src(c);
  BinaryMask out(g.orig_h, g.orig_w);
  for (int r = 0; r < g.orig_h; ++r) {
    const int sr = src(r);
    for (int c = 0; c < g.orig_w; ++c) out(r, c) = mask(sr, col[c]);
  }
  return out;
}

}  // namespace hdk::io
