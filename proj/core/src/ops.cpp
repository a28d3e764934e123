#include "hdk/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hdk/error.hpp"
#include "hdk/parallel.hpp"

namespace hdk::engine {
namespace {

constexpr std::int64_t kTileCols = 256;
constexpr std::int64_t kTileRows = 4;
constexpr std::int64_t kWideReduction = 4096;

void require_rank4(const Tensor& x, const char* op) {
  if (x.rank() != 4) {
    fail(ErrorKind::kInvalidArgument,
         std::string(op) + ": expected an NCHW tensor, got " + shape_str(x.shape()));
  }
}

// Lowers one group of one image into a (K x P) matrix, K = cin*kh*kw.
void im2col(const float* src, std::int64_t cin, std::int64_t h, std::int64_t w,
            std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad,
            std::int64_t ho, std::int64_t wo, float* col) {
  const std::int64_t rows = cin * kh * kw;
  parallel_for(0, rows, [&](std::int64_t r) {
    const std::int64_t ci = r / (kh * kw);
    const std::int64_t ky = (r / kw) % kh;
    const std::int64_t kx = r % kw;
    const float* plane = src + ci * h * w;
    float* dst = col + r * ho * wo;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      const std::int64_t iy = oy * stride - pad + ky;
      float* out = dst + oy * wo;
      if (iy < 0 || iy >= h) {
        std::fill(out, out + wo, 0.0f);
        continue;
      }
      const float* line = plane + iy * w;
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        const std::int64_t ix = ox * stride - pad + kx;
        out[ox] = (ix >= 0 && ix < w) ? line[ix] : 0.0f;
      }
    }
  });
}

// out[co][p] = sum_r wmat[co][r] * col[r][p] for a block of up to kTileRows
// output channels over one column tile. Each output accumulates r = 0..K-1 in
// order, so tiling never changes the result.
template <typename Acc>
void gemm_tile(const float* wmat, std::int64_t K, const float* col, std::int64_t P,
               std::int64_t co0, std::int64_t co_n, std::int64_t p0, std::int64_t pn,
               float* out) {
  Acc acc[kTileRows][kTileCols];
  for (std::int64_t i = 0; i < co_n; ++i) std::fill(acc[i], acc[i] + pn, Acc{0});
  for (std::int64_t r = 0; r < K; ++r) {
    const float* crow = col + r * P + p0;
    if (co_n == kTileRows) {
      const Acc w0 = wmat[(co0 + 0) * K + r];
      const Acc w1 = wmat[(co0 + 1) * K + r];
      const Acc w2 = wmat[(co0 + 2) * K + r];
      const Acc w3 = wmat[(co0 + 3) * K + r];
      for (std::int64_t p = 0; p < pn; ++p) {
        const Acc c = crow[p];
        acc[0][p] += w0 * c;
        acc[1][p] += w1 * c;
        acc[2][p] += w2 * c;
        acc[3][p] += w3 * c;
      }
    } else {
      for (std::int64_t i = 0; i < co_n; ++i) {
        const Acc wi = wmat[(co0 + i) * K + r];
        for (std::int64_t p = 0; p < pn; ++p) acc[i][p] += wi * static_cast<Acc>(crow[p]);
      }
    }
  }
  for (std::int64_t i = 0; i < co_n; ++i) {
    float* dst = out + (co0 + i) * P + p0;
    for (std::int64_t p = 0; p < pn; ++p) dst[p] = static_cast<float>(acc[i][p]);
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, Conv2dParams p) {
  require_rank4(x, "conv2d");
  require_rank4(w, "conv2d weight");
  const std::int64_t N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const std::int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::int64_t groups = p.groups;
  if (groups < 1 || C % groups != 0 || cout % groups != 0 || w.dim(1) != C / groups ||
      p.stride < 1 || p.pad < 0) {
    fail(ErrorKind::kInvalidArgument,
         "conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
             shape_str(w.shape()) + " (groups " + std::to_string(groups) + ")");
  }
  if (bias != nullptr && bias->numel() != cout) {
    fail(ErrorKind::kInvalidArgument, "conv2d: bias " + shape_str(bias->shape()) +
                                          " does not match " + std::to_string(cout) +
                                          " output channels");
  }
  const std::int64_t span_h = H + 2 * p.pad - kh, span_w = W + 2 * p.pad - kw;
  if (span_h < 0 || span_w < 0) {
    fail(ErrorKind::kInvalidArgument, "conv2d: input " + shape_str(x.shape()) +
                                          " is smaller than kernel " + shape_str(w.shape()));
  }
  const std::int64_t ho = span_h / p.stride + 1, wo = span_w / p.stride + 1;
  const std::int64_t cin_g = C / groups, cout_g = cout / groups;
  const std::int64_t K = cin_g * kh * kw, P = ho * wo;
  const bool direct = kh == 1 && kw == 1 && p.stride == 1 && p.pad == 0;

  Tensor out({N, cout, ho, wo});
  std::vector<float> col(direct ? 0 : static_cast<std::size_t>(K * P));
  const std::int64_t co_blocks = (cout_g + kTileRows - 1) / kTileRows;
  const std::int64_t p_tiles = (P + kTileCols - 1) / kTileCols;

  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const float* src = x.plane(n, g * cin_g);
      const float* colp = src;
      if (!direct) {
        im2col(src, cin_g, H, W, kh, kw, p.stride, p.pad, ho, wo, col.data());
        colp = col.data();
      }
      const float* wmat = w.data() + g * cout_g * K;
      float* dst = out.plane(n, g * cout_g);
      parallel_for(0, co_blocks * p_tiles, [&](std::int64_t task) {
        const std::int64_t cb = task / p_tiles, pt = task % p_tiles;
        const std::int64_t co0 = cb * kTileRows;
        const std::int64_t co_n = std::min(kTileRows, cout_g - co0);
        const std::int64_t p0 = pt * kTileCols;
        const std::int64_t pn = std::min(kTileCols, P - p0);
        if (K >= kWideReduction) {
          gemm_tile<double>(wmat, K, colp, P, co0, co_n, p0, pn, dst);
        } else {
          gemm_tile<float>(wmat, K, colp, P, co0, co_n, p0, pn, dst);
        }
      });
    }
    if (bias != nullptr) {
      for (std::int64_t co = 0; co < cout; ++co) {
        const float b = bias->data()[co];
        float* plane = out.plane(n, co);
        for (std::int64_t i = 0; i < P; ++i) plane[i] += b;
      }
    }
  }
  return out;
}

void channel_affine_(Tensor& x, const Tensor& scale, const Tensor& shift) {
  require_rank4(x, "channel_affine");
  if (scale.numel() != x.c() || shift.numel() != x.c()) {
    fail(ErrorKind::kInvalidArgument, "channel_affine: scale/shift do not match " +
                                          std::to_string(x.c()) + " channels");
  }
  const std::int64_t hw = x.h() * x.w();
  for (std::int64_t n = 0; n < x.n(); ++n) {
    for (std::int64_t c = 0; c < x.c(); ++c) {
      const float s = scale.data()[c], b = shift.data()[c];
      float* plane = x.plane(n, c);
      for (std::int64_t i = 0; i < hw; ++i) plane[i] = plane[i] * s + b;
    }
  }
}

void relu_(Tensor& x) {
  for (float& v : x.values()) v = v > 0.0f ? v : 0.0f;
}

void gelu_(Tensor& x) {
  for (float& v : x.values()) {
    const double d = v;
    v = static_cast<float>(0.5 * d * (1.0 + std::erf(d / std::sqrt(2.0))));
  }
}

void sigmoid_(Tensor& x) {
  for (float& v : x.values()) {
    const double d = v;
    v = static_cast<float>(d >= 0 ? 1.0 / (1.0 + std::exp(-d))
                                  : std::exp(d) / (1.0 + std::exp(d)));
  }
}

Tensor max_pool2x2(const Tensor& x) {
  require_rank4(x, "max_pool2x2");
  const std::int64_t ho = x.h() / 2, wo = x.w() / 2;
  if (ho < 1 || wo < 1) {
    fail(ErrorKind::kInvalidArgument, "max_pool2x2: input " + shape_str(x.shape()) +
                                          " is smaller than the 2x2 window");
  }
  Tensor out({x.n(), x.c(), ho, wo});
  for (std::int64_t n = 0; n < x.n(); ++n) {
    for (std::int64_t c = 0; c < x.c(); ++c) {
      for (std::int64_t y = 0; y < ho; ++y) {
        for (std::int64_t xx = 0; xx < wo; ++xx) {
          const float a = x.at(n, c, 2 * y, 2 * xx), b = x.at(n, c, 2 * y, 2 * xx + 1);
          const float d = x.at(n, c, 2 * y + 1, 2 * xx), e = x.at(n, c, 2 * y + 1, 2 * xx + 1);
          out.at(n, c, y, xx) = std::max(std::max(a, b), std::max(d, e));
        }
      }
    }
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) { return adaptive_avg_pool(x, 1); }

Tensor adaptive_avg_pool(const Tensor& x, int bins) {
  require_rank4(x, "adaptive_avg_pool");
  require(bins >= 1, "adaptive_avg_pool: bins must be >= 1");
  const std::int64_t H = x.h(), W = x.w();
  Tensor out({x.n(), x.c(), bins, bins});
  for (std::int64_t n = 0; n < x.n(); ++n) {
    for (std::int64_t c = 0; c < x.c(); ++c) {
      const float* plane = x.plane(n, c);
      for (int by = 0; by < bins; ++by) {
        const std::int64_t y0 = by * H / bins, y1 = ((by + 1) * H + bins - 1) / bins;
        for (int bx = 0; bx < bins; ++bx) {
          const std::int64_t x0 = bx * W / bins, x1 = ((bx + 1) * W + bins - 1) / bins;
          double sum = 0.0;
          for (std::int64_t y = y0; y < y1; ++y) {
            for (std::int64_t xx = x0; xx < x1; ++xx) sum += plane[y * W + xx];
          }
          out.at(n, c, by, bx) = static_cast<float>(sum / double((y1 - y0) * (x1 - x0)));
        }
      }
    }
  }
  return out;
}

namespace {

struct Taps {
  std::vector<std::int64_t> i0, i1;
  std::vector<float> l0, l1;
};

Taps bilinear_taps(std::int64_t in, std::int64_t out) {
  Taps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.l0.resize(out);
  t.l1.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t d = 0; d < out; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(s));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    const double frac = s - static_cast<double>(i0);
    t.i0[d] = i0;
    t.i1[d] = i1;
    t.l1[d] = static_cast<float>(frac);
    t.l0[d] = static_cast<float>(1.0 - frac);
  }
  return t;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  require_rank4(x, "bilinear_resize");
  require(out_h >= 1 && out_w >= 1, "bilinear_resize: output dims must be >= 1");
  if (out_h == x.h() && out_w == x.w()) return x;
  const Taps ty = bilinear_taps(x.h(), out_h), tx = bilinear_taps(x.w(), out_w);
  Tensor out({x.n(), x.c(), out_h, out_w});
  const std::int64_t planes = x.n() * x.c();
  parallel_for(0, planes, [&](std::int64_t pl) {
    const float* src = x.data() + pl * x.h() * x.w();
    float* dst = out.data() + pl * out_h * out_w;
    for (int y = 0; y < out_h; ++y) {
      const float* r0 = src + ty.i0[y] * x.w();
      const float* r1 = src + ty.i1[y] * x.w();
      for (int xx = 0; xx < out_w; ++xx) {
        const float top = tx.l0[xx] * r0[tx.i0[xx]] + tx.l1[xx] * r0[tx.i1[xx]];
        const float bot = tx.l0[xx] * r1[tx.i0[xx]] + tx.l1[xx] * r1[tx.i1[xx]];
        dst[y * out_w + xx] = ty.l0[y] * top + ty.l1[y] * bot;
      }
    }
  });
  return out;
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const Tensor& first = *parts.front();
  require_rank4(first, "concat_channels");
  std::int64_t channels = 0;
  for (const Tensor* t : parts) {
    require_rank4(*t, "concat_channels");
    if (t->n() != first.n() || t->h() != first.h() || t->w() != first.w()) {
      fail(ErrorKind::kInvalidArgument, "concat_channels: " + shape_str(t->shape()) +
                                            " does not match " + shape_str(first.shape()));
    }
    channels += t->c();
  }
  Tensor out({first.n(), channels, first.h(), first.w()});
  const std::int64_t hw = first.h() * first.w();
  for (std::int64_t n = 0; n < first.n(); ++n) {
    float* dst = out.plane(n, 0);
    for (const Tensor* t : parts) {
      std::memcpy(dst, t->plane(n, 0), sizeof(float) * t->c() * hw);
      dst += t->c() * hw;
    }
  }
  return out;
}

Tensor slice_channels(const Tensor& x, int begin, int count) {
  require_rank4(x, "slice_channels");
  if (begin < 0 || count < 1 || begin + count > x.c()) {
    fail(ErrorKind::kInvalidArgument, "slice_channels: [" + std::to_string(begin) + ", " +
                                          std::to_string(begin + count) + ") out of " +
                                          shape_str(x.shape()));
  }
  Tensor out({x.n(), count, x.h(), x.w()});
  const std::int64_t hw = x.h() * x.w();
  for (std::int64_t n = 0; n < x.n(); ++n) {
    std::memcpy(out.plane(n, 0), x.plane(n, begin), sizeof(float) * count * hw);
  }
  return out;
}

Tensor flip_h(const Tensor& x) {
  require_rank4(x, "flip_h");
  Tensor out(x.shape());
  const std::int64_t H = x.h(), W = x.w();
  for (std::int64_t pl = 0; pl < x.n() * x.c(); ++pl) {
    const float* src = x.data() + pl * H * W;
    float* dst = out.data() + pl * H * W;
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t xx = 0; xx < W; ++xx) dst[y * W + xx] = src[y * W + (W - 1 - xx)];
    }
  }
  return out;
}

Tensor flip_v(const Tensor& x) {
  require_rank4(x, "flip_v");
  Tensor out(x.shape());
  const std::int64_t H = x.h(), W = x.w();
  for (std::int64_t pl = 0; pl < x.n() * x.c(); ++pl) {
    const float* src = x.data() + pl * H * W;
    float* dst = out.data() + pl * H * W;
    for (std::int64_t y = 0; y < H; ++y) {
      std::memcpy(dst + y * W, src + (H - 1 - y) * W, sizeof(float) * W);
    }
  }
  return out;
}

Tensor pad_zero(const Tensor& x, int top, int bottom, int left, int right) {
  require_rank4(x, "pad_zero");
  require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad_zero: negative padding");
  if (top == 0 && bottom == 0 && left == 0 && right == 0) return x;
  const std::int64_t H = x.h() + top + bottom, W = x.w() + left + right;
  Tensor out({x.n(), x.c(), H, W});
  for (std::int64_t n = 0; n < x.n(); ++n) {
    for (std::int64_t c = 0; c < x.c(); ++c) {
      for (std::int64_t y = 0; y < x.h(); ++y) {
        std::memcpy(&out.at(n, c, y + top, left), x.plane(n, c) + y * x.w(), sizeof(float) * x.w());
      }
    }
  }
  return out;
}

Tensor crop(const Tensor& x, int top, int left, int h, int w) {
  require_rank4(x, "crop");
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > x.h() || left + w > x.w()) {
    fail(ErrorKind::kInvalidArgument, "crop: window out of " + shape_str(x.shape()));
  }
  if (top == 0 && left == 0 && h == x.h() && w == x.w()) return x;
  Tensor out({x.n(), x.c(), h, w});
  for (std::int64_t n = 0; n < x.n(); ++n) {
    for (std::int64_t c = 0; c < x.c(); ++c) {
      for (int y = 0; y < h; ++y) {
        std::memcpy(&out.at(n, c, y, 0), x.plane(n, c) + (y + top) * x.w() + left, sizeof(float) * w);
      }
    }
  }
  return out;
}

Tensor se_gate(const Tensor& x, const SeParams& p, int reduction) {
  require_rank4(x, "se_gate");
  if (!p.fc1_w || !p.fc1_b || !p.fc2_w || !p.fc2_b) {
    fail(ErrorKind::kMissing, std::string("se_gate: missing parameter ") +
                                  (!p.fc1_w ? "fc1.w" : !p.fc1_b ? "fc1.b" : !p.fc2_w ? "fc2.w" : "fc2.b"));
  }
  require(reduction >= 1, "se_gate: reduction must be >= 1");
  const std::int64_t C = x.c();
  const std::int64_t hidden = (C + reduction - 1) / reduction;
  if (p.fc1_w->shape() != Tensor::Shape{hidden, C} || p.fc1_b->numel() != hidden ||
      p.fc2_w->shape() != Tensor::Shape{C, hidden} || p.fc2_b->numel() != C) {
    fail(ErrorKind::kInvalidArgument,
         "se_gate: parameters do not match " + std::to_string(C) + " channels with hidden width " +
             std::to_string(hidden));
  }
  const Tensor pooled = global_avg_pool(x);
  Tensor out(x.shape());
  const std::int64_t hw = x.h() * x.w();
  std::vector<float> mid(hidden), gate(C);
  for (std::int64_t n = 0; n < x.n(); ++n) {
    const float* z = pooled.plane(n, 0);
    for (std::int64_t j = 0; j < hidden; ++j) {
      float acc = 0.0f;
      for (std::int64_t c = 0; c < C; ++c) acc += p.fc1_w->data()[j * C + c] * z[c];
      acc += p.fc1_b->data()[j];
      mid[j] = acc > 0.0f ? acc : 0.0f;
    }
    for (std::int64_t c = 0; c < C; ++c) {
      float acc = 0.0f;
      for (std::int64_t j = 0; j < hidden; ++j) acc += p.fc2_w->data()[c * hidden + j] * mid[j];
      acc += p.fc2_b->data()[c];
      gate[c] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(acc))));
    }
    for (std::int64_t c = 0; c < C; ++c) {
      const float* src = x.plane(n, c);
      float* dst = out.plane(n, c);
      for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] * gate[c];
    }
  }
  return out;
}

}  // namespace hdk::engine
