#include "hdk/postproc.hpp"

#include <algorithm>
#include <cmath>

#include "hdk/error.hpp"
#include "hdk/ops.hpp"

namespace hdk::post {

Compression parse_compression(const std::string& s) {
  if (s == "sigmoid") return Compression::kSigmoid;
  if (s == "tanh") return Compression::kTanh;
  fail(ErrorKind::kInvalidArgument, "unknown compression '" + s + "' (expected tanh|sigmoid)");
}

std::string to_string(Compression c) { return c == Compression::kTanh ? "tanh" : "sigmoid"; }

ProbMap compress(const Grid<float>& logits, Compression method) {
  ProbMap out(logits.height, logits.width);
  if (method == Compression::kSigmoid) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double x = logits.data[i];
      out.data[i] = static_cast<float>(x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                              : std::exp(x) / (1.0 + std::exp(x)));
    }
    return out;
  }
  std::vector<double> t(logits.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::tanh(static_cast<double>(logits.data[i]));
  if (t.empty()) return out;
  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  const double mn = *lo, mx = *hi;
  if (mx == mn) return out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    out.data[i] = std::clamp(static_cast<float>((t[i] - mn) / (mx - mn)), 0.0f, 1.0f);
  }
  return out;
}

Grid<float> logit_plane(const Tensor& logits, std::int64_t n) {
  require(logits.rank() == 4 && logits.c() == 1 && n >= 0 && n < logits.n(),
          "logit_plane: expected an N x 1 x H x W tensor, got " + shape_str(logits.shape()));
  Grid<float> g(static_cast<int>(logits.h()), static_cast<int>(logits.w()));
  std::copy_n(logits.plane(n, 0), g.size(), g.data.begin());
  return g;
}

BinaryMask threshold(const ProbMap& p, double t) {
  BinaryMask m(p.height, p.width);
  for (std::size_t i = 0; i < p.size(); ++i) m.data[i] = p.data[i] >= t ? 1 : 0;
  return m;
}

BinaryMask fill_holes(const BinaryMask& mask) {
  // Flood the background from a virtual zero frame around the image, i.e.
  // from every background pixel on the border.
  const int h = mask.height, w = mask.width;
  std::vector<std::uint8_t> reached(mask.size(), 0);
  std::vector<int> stack;
  auto push = [&](int y, int x) {
    const std::size_t i = static_cast<std::size_t>(y) * w + x;
    if (!mask.data[i] && !reached[i]) {
      reached[i] = 1;
      stack.push_back(static_cast<int>(i));
    }
  };
  for (int x = 0; x < w; ++x) {
    push(0, x);
    push(h - 1, x);
  }
  for (int y = 0; y < h; ++y) {
    push(y, 0);
    push(y, w - 1);
  }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const int y = i / w, x = i % w;
    if (y > 0) push(y - 1, x);
    if (y + 1 < h) push(y + 1, x);
    if (x > 0) push(y, x - 1);
    if (x + 1 < w) push(y, x + 1);
  }
  BinaryMask out(h, w);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = (mask.data[i] || !reached[i]) ? 1 : 0;
  return out;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  require(a.same_dims(b), "dice: dims differ (" + std::to_string(a.height) + "x" +
                              std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                              std::to_string(b.width) + ")");
  long long inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.data[i] != 0, y = b.data[i] != 0;
    inter += x && y;
    na += x;
    nb += y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

TTAMode parse_tta(const std::string& s) {
  if (s == "none") return TTAMode::kNone;
  if (s == "h" || s == "hflip") return TTAMode::kHFlip;
  if (s == "v" || s == "vflip") return TTAMode::kVFlip;
  if (s == "hv" || s == "vh" || s == "hvflip") return TTAMode::kHVFlip;
  fail(ErrorKind::kInvalidArgument, "unknown TTA mode '" + s + "' (expected none|h|v|hv)");
}

std::string to_string(TTAMode m) {
  switch (m) {
    case TTAMode::kNone: return "none";
    case TTAMode::kHFlip: return "h";
    case TTAMode::kVFlip: return "v";
    case TTAMode::kHVFlip: return "hv";
  }
  return "none";
}

std::vector<Flip> tta_variants(TTAMode m) {
  switch (m) {
    case TTAMode::kNone: return {Flip::kNone};
    case TTAMode::kHFlip: return {Flip::kNone, Flip::kH};
    case TTAMode::kVFlip: return {Flip::kNone, Flip::kV};
    case TTAMode::kHVFlip: return {Flip::kNone, Flip::kH, Flip::kV};
  }
  return {Flip::kNone};
}

namespace {

Tensor apply(const Tensor& x, Flip f) {
  switch (f) {
    case Flip::kH: return engine::flip_h(x);
    case Flip::kV: return engine::flip_v(x);
    case Flip::kNone: break;
  }
  return x;
}

}  // namespace

ProbMap tta_ensemble(const std::vector<SegModel>& models, const Tensor& image, TTAMode mode,
                     Compression method) {
  require(!models.empty(), "tta_ensemble: empty fold set");
  require(image.rank() == 4 && image.n() == 1,
          "tta_ensemble: expected a 1 x C x H x W image, got " + shape_str(image.shape()));
  const auto variants = tta_variants(mode);
  std::vector<double> acc;
  int h = 0, w = 0;
  for (const auto& model : models) {
    for (Flip f : variants) {
      const Tensor logits = apply(model(apply(image, f)), f);
      const ProbMap p = compress(logit_plane(logits), method);
      if (acc.empty()) {
        h = p.height;
        w = p.width;
        acc.assign(p.size(), 0.0);
      }
      require(p.height == h && p.width == w, "tta_ensemble: models disagree on output size");
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p.data[i];
    }
  }
  const double count = static_cast<double>(models.size() * variants.size());
  ProbMap out(h, w);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.data[i] = std::clamp(static_cast<float>(acc[i] / count), 0.0f, 1.0f);
  }
  return out;
}

}  // namespace hdk::post
