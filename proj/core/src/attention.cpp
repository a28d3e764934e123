#include <algorithm>
#include <cmath>
#include <mutex>

#include "hdk/error.hpp"
#include "hdk/ops.hpp"
#include "hdk/parallel.hpp"

namespace hdk::engine {
namespace {

void check_param(const Tensor* t, const Tensor::Shape& want, const char* what) {
  if (t == nullptr) fail(ErrorKind::kMissing, std::string("lawin attention: missing ") + what);
  if (t->shape() != want) {
    fail(ErrorKind::kInvalidArgument, std::string("lawin attention: ") + what + " has shape " +
                                          shape_str(t->shape()) + ", expected " +
                                          shape_str(want));
  }
}

// Transposed (in, out) copy of an (out, in) weight.
std::vector<float> transpose(const Tensor& w) {
  const std::int64_t rows = w.dim(0), cols = w.dim(1);
  std::vector<float> t(rows * cols);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) t[c * rows + r] = w.data()[r * cols + c];
  }
  return t;
}

// dst[t][o] = sum_i src[t][i] * w[o][i] + b[o] for a token-major (T x D)
// block, with wt the (in, out) transpose. Each output sums i in ascending order.
void linear_tokens(const float* src, std::int64_t T, std::int64_t D,
                   const std::vector<float>& wt, const Tensor& b, float* dst) {
  for (std::int64_t t = 0; t < T; ++t) {
    const float* row = src + t * D;
    float* out = dst + t * D;
    std::fill(out, out + D, 0.0f);
    for (std::int64_t i = 0; i < D; ++i) {
      const float xi = row[i];
      const float* wr = wt.data() + i * D;
      for (std::int64_t o = 0; o < D; ++o) out[o] += wr[o] * xi;
    }
    for (std::int64_t o = 0; o < D; ++o) out[o] += b.data()[o];
  }
}

}  // namespace

Tensor large_window_attention(const Tensor& q_feat, const Tensor& ctx_feat,
                              const LawinConfig& cfg, const LawinParams& params,
                              AttentionStats* stats) {
  if (q_feat.rank() != 4 || q_feat.shape() != ctx_feat.shape()) {
    fail(ErrorKind::kInvalidArgument, "lawin attention: query " + shape_str(q_feat.shape()) +
                                          " and context " + shape_str(ctx_feat.shape()) +
                                          " must be equal NCHW shapes");
  }
  const std::int64_t N = q_feat.n(), D = q_feat.c(), H = q_feat.h(), W = q_feat.w();
  const std::int64_t P = cfg.patch, R = cfg.ratio, heads = cfg.heads;
  require(P >= 1 && R >= 1 && heads >= 1, "lawin attention: patch, ratio and heads must be >= 1");
  if (H % P != 0 || W % P != 0) {
    fail(ErrorKind::kInvalidArgument, "lawin attention: spatial dims " + std::to_string(H) +
                                          "x" + std::to_string(W) +
                                          " are not multiples of patch " + std::to_string(P));
  }
  require(D % heads == 0, "lawin attention: channels not divisible by heads");
  require(((R - 1) * P) % 2 == 0, "lawin attention: (ratio - 1) * patch must be even");

  const std::int64_t T = P * P;
  const std::int64_t dh = D / heads;
  check_param(params.mix_w, {heads, T, T}, "mix.w");
  check_param(params.mix_b, {heads, T}, "mix.b");
  check_param(params.q_w, {D, D}, "q.w");
  check_param(params.q_b, {D}, "q.b");
  check_param(params.k_w, {D, D}, "k.w");
  check_param(params.k_b, {D}, "k.b");
  check_param(params.v_w, {D, D}, "v.w");
  check_param(params.v_b, {D}, "v.b");
  check_param(params.o_w, {D, D}, "o.w");
  check_param(params.o_b, {D}, "o.b");

  const std::int64_t margin = (R - 1) * P / 2;
  const std::int64_t py_count = H / P, px_count = W / P;
  const float inv_pool = 1.0f / static_cast<float>(R * R);
  const float score_scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));

  const auto qt = transpose(*params.q_w), kt = transpose(*params.k_w),
             vt = transpose(*params.v_w), ot = transpose(*params.o_w);

  Tensor out(q_feat.shape());
  std::mutex stats_mu;

  parallel_for(0, N * py_count * px_count, [&](std::int64_t task) {
    const std::int64_t n = task / (py_count * px_count);
    const std::int64_t py = (task / px_count) % py_count;
    const std::int64_t px = task % px_count;
    const std::int64_t y0 = py * P, x0 = px * P;

    std::vector<float> xq(T * D), ctx(T * D), mixed(T * D), q(T * D), k(T * D), v(T * D),
        y(T * D), o(T * D), scores(T), k_head(dh * T);

    for (std::int64_t c = 0; c < D; ++c) {
      const float* plane = q_feat.plane(n, c);
      for (std::int64_t ty = 0; ty < P; ++ty) {
        for (std::int64_t tx = 0; tx < P; ++tx) {
          xq[(ty * P + tx) * D + c] = plane[(y0 + ty) * W + (x0 + tx)];
        }
      }
    }

    // Pooled context: token (a, b) averages the R x R cell of the window whose
    // top-left corner sits `margin` above and left of the patch.
    for (std::int64_t c = 0; c < D; ++c) {
      const float* plane = ctx_feat.plane(n, c);
      for (std::int64_t a = 0; a < P; ++a) {
        for (std::int64_t b = 0; b < P; ++b) {
          float sum = 0.0f;
          for (std::int64_t i = 0; i < R; ++i) {
            const std::int64_t yy = y0 - margin + a * R + i;
            if (yy < 0 || yy >= H) continue;
            for (std::int64_t j = 0; j < R; ++j) {
              const std::int64_t xx = x0 - margin + b * R + j;
              if (xx < 0 || xx >= W) continue;
              sum += plane[yy * W + xx];
            }
          }
          ctx[(a * P + b) * D + c] = sum * inv_pool;
        }
      }
    }

    // Token mixing, one T x T matrix per head over that head's channels.
    std::fill(mixed.begin(), mixed.end(), 0.0f);
    for (std::int64_t h = 0; h < heads; ++h) {
      const float* m = params.mix_w->data() + h * T * T;
      const float* mb = params.mix_b->data() + h * T;
      const std::int64_t c0 = h * dh;
      for (std::int64_t t = 0; t < T; ++t) {
        float* dst = mixed.data() + t * D + c0;
        for (std::int64_t s = 0; s < T; ++s) {
          const float ms = m[t * T + s];
          const float* src = ctx.data() + s * D + c0;
          for (std::int64_t c = 0; c < dh; ++c) dst[c] += ms * src[c];
        }
        for (std::int64_t c = 0; c < dh; ++c) dst[c] += mb[t];
      }
    }

    linear_tokens(xq.data(), T, D, qt, *params.q_b, q.data());
    linear_tokens(mixed.data(), T, D, kt, *params.k_b, k.data());
    linear_tokens(mixed.data(), T, D, vt, *params.v_b, v.data());

    double worst = 0.0;
    for (std::int64_t h = 0; h < heads; ++h) {
      const std::int64_t c0 = h * dh;
      // Head keys laid out (channel, token) so score rows vectorize over tokens.
      for (std::int64_t c = 0; c < dh; ++c) {
        for (std::int64_t s = 0; s < T; ++s) k_head[c * T + s] = k[s * D + c0 + c];
      }
      for (std::int64_t t = 0; t < T; ++t) {
        std::fill(scores.begin(), scores.end(), 0.0f);
        for (std::int64_t c = 0; c < dh; ++c) {
          const float qc = q[t * D + c0 + c];
          const float* kr = k_head.data() + c * T;
          for (std::int64_t s = 0; s < T; ++s) scores[s] += qc * kr[s];
        }
        float peak = -INFINITY;
        for (std::int64_t s = 0; s < T; ++s) {
          scores[s] *= score_scale;
          peak = std::max(peak, scores[s]);
        }
        float denom = 0.0f;
        for (std::int64_t s = 0; s < T; ++s) {
          scores[s] = std::exp(scores[s] - peak);
          denom += scores[s];
        }
        double row_sum = 0.0;
        for (std::int64_t s = 0; s < T; ++s) {
          scores[s] /= denom;
          row_sum += scores[s];
        }
        worst = std::max(worst, std::abs(row_sum - 1.0));
        float* yr = y.data() + t * D + c0;
        std::fill(yr, yr + dh, 0.0f);
        for (std::int64_t s = 0; s < T; ++s) {
          const float ps = scores[s];
          const float* vr = v.data() + s * D + c0;
          for (std::int64_t c = 0; c < dh; ++c) yr[c] += ps * vr[c];
        }
      }
    }

    linear_tokens(y.data(), T, D, ot, *params.o_b, o.data());
    for (std::int64_t c = 0; c < D; ++c) {
      float* plane = out.plane(n, c);
      for (std::int64_t ty = 0; ty < P; ++ty) {
        for (std::int64_t tx = 0; tx < P; ++tx) {
          plane[(y0 + ty) * W + (x0 + tx)] = o[(ty * P + tx) * D + c];
        }
      }
    }
    if (stats != nullptr) {
      std::lock_guard lock(stats_mu);
      stats->max_row_sum_error = std::max(stats->max_row_sum_error, worst);
      stats->rows += heads * T;
    }
  });
  return out;
}

}  // namespace hdk::engine
