#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hdk/blockgraph.hpp"
#include "hdk/netspec.hpp"
#include "hdk/ops.hpp"
#include "hdk/tensor.hpp"
#include "hdk/weights.hpp"

namespace hdk::engine {

struct ParamInfo {
  std::string name;
  Tensor::Shape shape;
  std::int64_t fan_in = 1;
  enum class Init { kWeightRelu, kWeightLinear, kBias, kOne, kZero } init = Init::kWeightLinear;
};

struct ForwardOutputs {
  Tensor main;                  // O,  N x 1 x H x W
  std::vector<Tensor> deep;     // D1, D2, ... each N x 1 x H x W
  std::optional<Tensor> boundary;  // B, N x 1 x H x W
  std::vector<Tensor> pyramid;  // one feature per stage
  std::vector<int> pyramid_strides;
  AttentionStats attention;
};

// Executable form of a NetSpec: compiled block graphs plus the ordered list of
// parameters the forward pass reads.
class Model {
 public:
  explicit Model(graph::NetSpec net);

  const graph::NetSpec& spec() const { return net_; }
  const std::vector<ParamInfo>& params() const { return params_; }
  std::int64_t parameter_count() const;
  const std::vector<graph::BlockGraph>& blocks() const { return blocks_; }

  // Throws Error(kMissing) listing every absent tensor, or kInvalidArgument
  // for the first shape mismatch.
  void check(const WeightStore& weights) const;

  // image: N x C x H x W with H == W and H divisible by 32.
  ForwardOutputs forward(const WeightStore& weights, const Tensor& image) const;

 private:
  void declare_conv(const std::string& name, std::int64_t c_in, std::int64_t c_out,
                    std::int64_t k, bool bias, bool bn, bool relu);
  void declare_linear(const std::string& name, std::int64_t in, std::int64_t out);

  graph::NetSpec net_;
  std::vector<graph::BlockGraph> blocks_;
  std::vector<int> transition_channels_;
  std::vector<ParamInfo> params_;
};

// Parameters for every tensor of `net`, drawn from Rng(seed) in parameter
// declaration order, each tensor filled row-major:
//   conv weights feeding a ReLU: U(-sqrt(6/fan_in), sqrt(6/fan_in))
//   other weights:               U(-sqrt(3/fan_in), sqrt(3/fan_in))
//   biases:                      U(-1/sqrt(fan_in), 1/sqrt(fan_in))
//   batch-norm scale 1, shift 0 (identity after folding).
WeightStore init_weights(const graph::NetSpec& net, std::uint64_t seed);

ForwardOutputs forward(const graph::NetSpec& net, const WeightStore& weights,
                       const Tensor& image);

}  // namespace hdk::engine
