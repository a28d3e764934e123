#include <algorithm>
#include <cmath>
#include <functional>

#include "hdk/error.hpp"
#include "hdk/loss.hpp"
#include "hdk/rng.hpp"

namespace hdk::loss {
namespace {

Map random_logits(Rng& rng, int h, int w) {
  Map m(h, w);
  for (auto& v : m.data) v = rng.uniform(-2.0, 2.0);
  return m;
}

// Worst relative error between `analytic` and central differences of `f`.
double compare(const Map& x, const Map& analytic, const std::function<double(const Map&)>& f,
               double step) {
  double worst = 0.0;
  Map probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe.data[i] = x.data[i] + step;
    const double up = f(probe);
    probe.data[i] = x.data[i] - step;
    const double down = f(probe);
    probe.data[i] = x.data[i];
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.data[i];
    const double rel =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace

GradCheckReport grad_check(std::uint64_t seed, int height, int width, const Enable& enable,
                           double step) {
  require(height >= 1 && height <= 32 && width >= 1 && width <= 32,
          "grad_check: size must lie in 1..32, got " + std::to_string(height) + "x" +
              std::to_string(width));
  require(step > 0.0, "grad_check: step must be positive");

  // Draw order is fixed so a seed gives the same G and O whatever the flags.
  Rng rng(seed);
  LossInputs in;
  in.g = BinaryMask(height, width);
  for (auto& v : in.g.data) v = rng.bernoulli(0.5) ? 1 : 0;
  in.main = random_logits(rng, height, width);
  in.deep[0] = random_logits(rng, height, width);
  in.deep[1] = random_logits(rng, height, width);
  in.boundary = random_logits(rng, height, width);

  const LossBreakdown lb = composite_loss(in, enable);
  const Map w = pixel_weight_map(in.g);
  const BinaryMask gb = boundary_target(in.g);

  // Each logit map enters exactly one term, so that term is the objective.
  auto pair = [&](const Map& x) { return weighted_bce(x, in.g, w) + weighted_iou(x, in.g, w); };
  auto boundary = [&](const Map& x) { return bce(x, gb); };

  GradCheckReport r;
  r.seed = seed;
  r.height = height;
  r.width = width;
  r.enable = enable;
  r.step = step;
  r.loss = lb.total;
  const int coords = height * width;
  auto record = [&](const std::string& name, double err) {
    r.per_term[name] = {err, coords};
    r.max_rel_err = std::max(r.max_rel_err, err);
  };
  record("main", compare(in.main, lb.grad_main, pair, step));
  if (enable.deep1) record("deep1", compare(*in.deep[0], *lb.grad_deep[0], pair, step));
  if (enable.deep2) record("deep2", compare(*in.deep[1], *lb.grad_deep[1], pair, step));
  if (enable.boundary) {
    record("boundary", compare(*in.boundary, *lb.grad_boundary, boundary, step));
  }
  return r;
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json terms = nlohmann::json::object();
  for (const auto& [name, v] : per_term) {
    terms[name] = {{"max_rel_err", v.first}, {"coordinates", v.second}};
  }
  return {{"seed", seed},
          {"height", height},
          {"width", width},
          {"flags", to_string(enable)},
          {"step", step},
          {"loss", loss},
          {"max_rel_err", max_rel_err},
          {"terms", terms}};
}

}  // namespace hdk::loss
