#include "hdk/loss.hpp"

#include <cmath>
#include <sstream>

#include "hdk/error.hpp"

namespace hdk::loss {
namespace {

// Neumaier compensated sum; keeps the finite-difference checks well above
// round-off at 16x16.
class Sum {
 public:
  void add(double v) {
    const double t = s_ + v;
    c_ += std::abs(s_) >= std::abs(v) ? (s_ - t) + v : (v - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -g log(sigmoid x) - (1 - g) log(1 - sigmoid x)
double bce_term(double x, double g) {
  return std::max(x, 0.0) - x * g + std::log1p(std::exp(-std::abs(x)));
}

void check_binary(const BinaryMask& g, const char* what) {
  for (auto v : g.data) {
    if (v > 1) fail(ErrorKind::kInvalidArgument, std::string(what) + ": mask is not binary");
  }
}

template <typename A, typename B>
void check_dims(const A& a, const B& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    fail(ErrorKind::kInvalidArgument,
         std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
             std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
             std::to_string(b.width));
  }
}

Terms pair_loss(const Map& x, const BinaryMask& g, const Map& w, Map* grad) {
  Terms t;
  if (!grad) {
    t.wbce = weighted_bce(x, g, w);
    t.wiou = weighted_iou(x, g, w);
    return t;
  }
  Map gb, gi;
  t.wbce = weighted_bce(x, g, w, &gb);
  t.wiou = weighted_iou(x, g, w, &gi);
  *grad = Map(x.height, x.width);
  for (std::size_t i = 0; i < gb.size(); ++i) grad->data[i] = gb.data[i] + gi.data[i];
  return t;
}

}  // namespace

Map pixel_weight_map(const BinaryMask& g) {
  check_binary(g, "pixel_weight_map");
  const int h = g.height, w = g.width;
  // integral image of G, (h + 1) x (w + 1)
  std::vector<int> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  auto s = [&](int y, int x) -> int& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) s(y + 1, x + 1) = g(y, x) + s(y, x + 1) + s(y + 1, x) - s(y, x);
  }
  constexpr int kR = 15;
  Map out(h, w);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - kR), y1 = std::min(h, y + kR + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - kR), x1 = std::min(w, x + kR + 1);
      const int count = s(y1, x1) - s(y0, x1) - s(y1, x0) + s(y0, x0);
      const double area = static_cast<double>(y1 - y0) * (x1 - x0);
      out(y, x) = 1.0 + 5.0 * std::abs(count / area - g(y, x));
    }
  }
  return out;
}

double weighted_bce(const Map& logits, const BinaryMask& g, const Map& w, Map* grad) {
  check_dims(logits, g, "weighted_bce");
  check_dims(logits, w, "weighted_bce");
  Sum num, den;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    num.add(w.data[i] * bce_term(logits.data[i], g.data[i]));
    den.add(w.data[i]);
  }
  const double sw = den.value();
  if (grad) {
    *grad = Map(logits.height, logits.width);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      grad->data[i] = w.data[i] * (sigmoid(logits.data[i]) - g.data[i]) / sw;
    }
  }
  return num.value() / sw;
}

double weighted_iou(const Map& logits, const BinaryMask& g, const Map& w, Map* grad) {
  check_dims(logits, g, "weighted_iou");
  check_dims(logits, w, "weighted_iou");
  Sum inter, uni;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits.data[i]);
    inter.add(w.data[i] * p * g.data[i]);
    uni.add(w.data[i] * (p + g.data[i]));
  }
  const double a = inter.value() + 1.0;
  const double b = uni.value() - inter.value() + 1.0;
  if (grad) {
    *grad = Map(logits.height, logits.width);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double p = sigmoid(logits.data[i]);
      const double gi = g.data[i];
      const double dp = -(w.data[i] * gi * b - a * w.data[i] * (1.0 - gi)) / (b * b);
      grad->data[i] = dp * p * (1.0 - p);
    }
  }
  return 1.0 - a / b;
}

double bce(const Map& logits, const BinaryMask& g, Map* grad) {
  check_dims(logits, g, "bce");
  Sum total;
  for (std::size_t i = 0; i < logits.size(); ++i) total.add(bce_term(logits.data[i], g.data[i]));
  const double n = static_cast<double>(logits.size());
  if (grad) {
    *grad = Map(logits.height, logits.width);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      grad->data[i] = (sigmoid(logits.data[i]) - g.data[i]) / n;
    }
  }
  return total.value() / n;
}

BinaryMask boundary_target(const BinaryMask& g) {
  check_binary(g, "boundary_target");
  const int h = g.height, w = g.width;
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool any = false, all = true;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          const bool v = yy >= 0 && yy < h && xx >= 0 && xx < w && g(yy, xx);
          any = any || v;
          all = all && v;
        }
      }
      out(y, x) = any != all;
    }
  }
  return out;
}

Enable parse_enable(const std::string& flags) {
  Enable e;
  std::stringstream ss(flags);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    if (tok == "d1") {
      e.deep1 = true;
    } else if (tok == "d2") {
      e.deep2 = true;
    } else if (tok == "b") {
      e.boundary = true;
    } else {
      fail(ErrorKind::kInvalidArgument,
           "unknown loss flag '" + tok + "' (expected a subset of d1,d2,b)");
    }
  }
  return e;
}

std::string to_string(const Enable& e) {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ',';
    s += name;
  };
  add(e.deep1, "d1");
  add(e.deep2, "d2");
  add(e.boundary, "b");
  return s;
}

LossBreakdown composite_loss(const LossInputs& in, const Enable& enable) {
  check_binary(in.g, "composite_loss");
  check_dims(in.main, in.g, "composite_loss: main");
  const Map w = pixel_weight_map(in.g);

  LossBreakdown out;
  out.main = pair_loss(in.main, in.g, w, &out.grad_main);
  Sum total;
  total.add(out.main.wbce);
  total.add(out.main.wiou);

  const bool deep_on[2] = {enable.deep1, enable.deep2};
  for (int i = 0; i < 2; ++i) {
    if (!deep_on[i]) continue;
    const std::string name = "deep" + std::to_string(i + 1);
    if (!in.deep[i]) {
      fail(ErrorKind::kInvalidArgument,
           "composite_loss: " + name + " is enabled but its logits are missing");
    }
    check_dims(*in.deep[i], in.g, ("composite_loss: " + name).c_str());
    Map grad;
    out.deep[i] = pair_loss(*in.deep[i], in.g, w, &grad);
    out.grad_deep[i] = std::move(grad);
    total.add(out.deep[i]->wbce);
    total.add(out.deep[i]->wiou);
  }

  if (enable.boundary) {
    if (!in.boundary) {
      fail(ErrorKind::kInvalidArgument,
           "composite_loss: boundary is enabled but its logits are missing");
    }
    const BinaryMask gb = in.g_boundary ? *in.g_boundary : boundary_target(in.g);
    check_binary(gb, "composite_loss: boundary target");
    Map grad;
    out.boundary_bce = bce(*in.boundary, gb, &grad);
    out.grad_boundary = std::move(grad);
    total.add(*out.boundary_bce);
  }
  out.total = total.value();
  return out;
}

}  // namespace hdk::loss
