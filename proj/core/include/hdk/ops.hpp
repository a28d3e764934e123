#pragma once

#include <vector>

#include "hdk/tensor.hpp"

namespace hdk::engine {

struct Conv2dParams {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

// Direct convolution over NCHW input with weights (c_out, c_in/groups, kh, kw).
// Output size is floor((h + 2*pad - kh) / stride) + 1 per axis. Every output
// element sums its kh*kw*(c_in/groups) products in ascending (ci, ky, kx)
// order; reductions of 4096 terms or more accumulate in double.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, Conv2dParams p = {});

// Inference batch norm folded to a per-channel affine map: x*scale + shift.
void channel_affine_(Tensor& x, const Tensor& scale, const Tensor& shift);

void relu_(Tensor& x);
void gelu_(Tensor& x);  // exact erf form
void sigmoid_(Tensor& x);

Tensor max_pool2x2(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);
// Adaptive average pooling to out x out bins; bin i spans
// [floor(i*h/out), ceil((i+1)*h/out)).
Tensor adaptive_avg_pool(const Tensor& x, int out);

// Bilinear resize, align_corners = false. For output index d along an axis of
// input length L and output length M the source coordinate is
//   s = max(0, (d + 0.5) * L / M - 0.5),
// taps are i0 = floor(s) and i1 = min(i0 + 1, L - 1) with weights
// (1 - (s - i0)) and (s - i0).
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

Tensor concat_channels(const std::vector<const Tensor*>& parts);
Tensor slice_channels(const Tensor& x, int begin, int count);

Tensor flip_h(const Tensor& x);  // mirror along width
Tensor flip_v(const Tensor& x);  // mirror along height

Tensor pad_zero(const Tensor& x, int top, int bottom, int left, int right);
Tensor crop(const Tensor& x, int top, int left, int h, int w);

struct SeParams {
  const Tensor* fc1_w = nullptr;  // (hidden, c)
  const Tensor* fc1_b = nullptr;  // (hidden)
  const Tensor* fc2_w = nullptr;  // (c, hidden)
  const Tensor* fc2_b = nullptr;  // (c)
};

// Squeeze-and-excitation: y = x * sigmoid(W2 relu(W1 gap(x) + b1) + b2),
// the gate broadcast over H and W. The hidden width must equal
// ceil(c / reduction).
Tensor se_gate(const Tensor& x, const SeParams& p, int reduction);

struct LawinConfig {
  int patch = 8;
  int ratio = 2;
  int heads = 4;
};

struct LawinParams {
  const Tensor* mix_w = nullptr;  // (heads, P*P, P*P) token mixing per head
  const Tensor* mix_b = nullptr;  // (heads, P*P)
  const Tensor* q_w = nullptr;    // (D, D)
  const Tensor* q_b = nullptr;    // (D)
  const Tensor* k_w = nullptr;
  const Tensor* k_b = nullptr;
  const Tensor* v_w = nullptr;
  const Tensor* v_b = nullptr;
  const Tensor* o_w = nullptr;
  const Tensor* o_b = nullptr;
};

// Diagnostics gathered from the softmax rows of one attention call.
struct AttentionStats {
  double max_row_sum_error = 0.0;  // max |sum(row) - 1|
  std::int64_t rows = 0;
};

// Large-window attention. For every P x P query patch the surrounding
// (R*P) x (R*P) window of ctx_feat (zero outside the map) is average-pooled
// by R down to P x P tokens, mixed along the token axis per head, projected to
// keys and values, and attended by the projected patch queries with
// softmax(q k^T / sqrt(D / heads)). The per-head results are concatenated and
// passed through the output projection. H and W must be multiples of P; the
// output has the shape of q_feat.
Tensor large_window_attention(const Tensor& q_feat, const Tensor& ctx_feat,
                              const LawinConfig& cfg, const LawinParams& params,
                              AttentionStats* stats = nullptr);

}  // namespace hdk::engine
