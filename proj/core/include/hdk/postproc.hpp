#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hdk/grid.hpp"
#include "hdk/tensor.hpp"

namespace hdk::post {

enum class Compression { kSigmoid, kTanh };
Compression parse_compression(const std::string& s);  // "sigmoid" | "tanh"
std::string to_string(Compression c);

// sigmoid: elementwise. tanh: tanh then per-image min-max into [0, 1]; a
// constant map becomes all zeros.
ProbMap compress(const Grid<float>& logits, Compression method);

// Plane (n, 0) of an N x 1 x H x W logit tensor.
Grid<float> logit_plane(const Tensor& logits, std::int64_t n = 0);

// p >= t -> 1
BinaryMask threshold(const ProbMap& p, double t = 0.5);

// Every 0-pixel whose 4-connected background component does not touch the
// image border becomes 1.
BinaryMask fill_holes(const BinaryMask& mask);

// 2|a & b| / (|a| + |b|), 1 when both are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

enum class TTAMode { kNone, kHFlip, kVFlip, kHVFlip };
// "none" | "h" | "v" | "hv" (also "hflip", "vflip", "hvflip")
TTAMode parse_tta(const std::string& s);
std::string to_string(TTAMode m);

enum class Flip { kNone, kH, kV };
// kNone -> {identity}; kHFlip -> {identity, h}; kVFlip -> {identity, v};
// kHVFlip -> {identity, h, v}.
std::vector<Flip> tta_variants(TTAMode m);

// image (1 x C x H x W) -> logits (1 x 1 x H x W)
using SegModel = std::function<Tensor(const Tensor&)>;

// Mean of compressed probabilities over models x variants. Each variant runs
// the model on the flipped image and flips the logits back before
// compression. The sum runs in double in a fixed order.
ProbMap tta_ensemble(const std::vector<SegModel>& models, const Tensor& image, TTAMode mode,
                     Compression method);

}  // namespace hdk::post
