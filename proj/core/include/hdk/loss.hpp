#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "hdk/grid.hpp"

namespace hdk::loss {

// Every loss computation runs in double.
using Map = Grid<double>;

// 1 + 5 * |mean_31x31(G) - G|. Near the border the mean covers only the
// in-image part of the window, so constant masks give W == 1 everywhere.
Map pixel_weight_map(const BinaryMask& g);

// Weighted BCE from logits, normalized by sum(W). If grad is non-null it
// receives dLoss/dlogit.
double weighted_bce(const Map& logits, const BinaryMask& g, const Map& w, Map* grad = nullptr);

// 1 - (I + 1) / (U - I + 1) with I = sum W*P*G and U = sum W*(P + G).
double weighted_iou(const Map& logits, const BinaryMask& g, const Map& w, Map* grad = nullptr);

// Plain mean BCE from logits.
double bce(const Map& logits, const BinaryMask& g, Map* grad = nullptr);

// dilate3x3(G) XOR erode3x3(G); pixels outside the image count as 0.
BinaryMask boundary_target(const BinaryMask& g);

struct Enable {
  bool deep1 = false;
  bool deep2 = false;
  bool boundary = false;
};

// Parses "d1,d2,b" (any subset, any order, "" for none).
Enable parse_enable(const std::string& flags);
std::string to_string(const Enable& e);

struct LossInputs {
  Map main;                           // O
  std::array<std::optional<Map>, 2> deep;  // D1, D2
  std::optional<Map> boundary;        // B
  BinaryMask g;                       // G
  std::optional<BinaryMask> g_boundary;  // derived with boundary_target when absent
};

struct Terms {
  double wbce = 0.0;
  double wiou = 0.0;
  double sum() const { return wbce + wiou; }
};

struct LossBreakdown {
  double total = 0.0;
  Terms main;
  std::array<std::optional<Terms>, 2> deep;
  std::optional<double> boundary_bce;

  Map grad_main;
  std::array<std::optional<Map>, 2> grad_deep;
  std::optional<Map> grad_boundary;
};

// l(G, O) + sum over enabled deep maps of l(G, D_i) + BCE(G_B, B), where
// l = weighted BCE + weighted IoU. Enabled inputs must be present.
LossBreakdown composite_loss(const LossInputs& in, const Enable& enable);

struct GradCheckReport {
  std::uint64_t seed = 0;
  int height = 0;
  int width = 0;
  Enable enable;
  double step = 1e-5;
  double max_rel_err = 0.0;
  // per logit map ("main", "deep1", "deep2", "boundary"): worst relative error
  // and number of coordinates checked
  std::map<std::string, std::pair<double, int>> per_term;
  double loss = 0.0;

  nlohmann::json to_json() const;
};

// Seeded random G (Bernoulli 0.5) and logits uniform in [-2, 2]; compares the
// analytic gradient with central differences at every coordinate of every
// enabled map. rel = |a - n| / max(|a|, |n|, 1e-12).
GradCheckReport grad_check(std::uint64_t seed, int height, int width, const Enable& enable,
                           double step = 1e-5);

}  // namespace hdk::loss
