#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hdk::graph {

enum class BlockVersion { kV1, kV2 };

const char* to_string(BlockVersion v);

// Parameters of one dense block.
//
// v1 is the original harmonic block: layer k reads every k - 2^i with
// 2^i | k and emits round_even(growth * multiplier^z) channels where 2^z is
// the largest power of two dividing k. v2 links layer k to k - f for every
// divisor f of depth that also divides k, and splits each output into
// growth-channel shares, one per outgoing link.
struct BlockSpec {
  BlockVersion version = BlockVersion::kV2;
  int depth = 9;
  int growth = 16;
  double multiplier = 1.7;  // v1 only
  bool csp_wrap = false;
  double csp_ratio = 0.5;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

// Throws Error(kInvalidArgument) when the spec violates its invariants.
void validate(const BlockSpec& spec);

struct OutEdge {
  int target = 0;  // depth + 1 and above never appear; see output_routed_shares
  int slot = 0;    // share slot within the source's output

  friend bool operator==(const OutEdge&, const OutEdge&) = default;
};

struct LayerNode {
  int index = 0;              // 0 is the block input
  std::vector<int> in_sources;  // ascending
  std::vector<OutEdge> out_targets;
  int c_in = 0;
  int c_out = 0;
  int total_shares = 1;       // v1 broadcasts its output, so always 1 there
  int output_routed_shares = 0;

  friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

struct ShareRef {
  int layer = 0;
  int slot = 0;

  friend bool operator==(const ShareRef&, const ShareRef&) = default;
};

struct CspSplit {
  double ratio = 0.5;
  int bypass_channels = 0;
  int block_channels = 0;

  friend bool operator==(const CspSplit&, const CspSplit&) = default;
};

// Explicit connection DAG of one block. Edges only go from lower to higher
// layer index.
struct BlockGraph {
  BlockSpec spec;
  int input_channels = 0;  // channels arriving at the block (before any CSP split)
  bool has_entry_conv = false;  // v2: 1x1 projection that produces node 0
  std::vector<LayerNode> nodes;  // nodes[k].index == k, size depth + 1
  int block_out_channels = 0;    // excludes any CSP bypass
  std::vector<ShareRef> block_out_concat_order;
  bool csp_wrapped = false;
  CspSplit csp;

  int share_width(int layer) const;  // channels per share of `layer`
  // Channels leaving the block, CSP bypass included.
  int output_channels() const {
    return block_out_channels + (csp_wrapped ? csp.bypass_channels : 0);
  }
  // Number of convolutions the block executes (entry projection included).
  int conv_count() const { return spec.depth + (has_entry_conv ? 1 : 0); }

  friend bool operator==(const BlockGraph&, const BlockGraph&) = default;
};

// Divisors of n in ascending order. n must be >= 1.
std::vector<int> divisors(int n);

// Compiles the link pattern and channel assignment of `spec` for a block fed
// by `input_channels` channels. The CSP flag of the spec is not applied here;
// see wrap_csp.
BlockGraph build_block(const BlockSpec& spec, int input_channels);

// Splits the block input: floor(input * ratio) channels bypass the block and
// are concatenated after its output, the remainder feed the block.
BlockGraph wrap_csp(const BlockGraph& graph, double split_ratio);

// build_block followed by wrap_csp when spec.csp_wrap is set.
BlockGraph compile_block(const BlockSpec& spec, int input_channels);

// Share slot on `source` that feeds `target`; -1 when there is no such edge.
int find_slot(const LayerNode& source, int target);

}  // namespace hdk::graph
