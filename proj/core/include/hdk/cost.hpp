#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdk/blockgraph.hpp"
#include "hdk/netspec.hpp"

namespace hdk::graph {

struct InputShape {
  std::int64_t n = 1;
  std::int64_t c = 3;
  std::int64_t h = 512;
  std::int64_t w = 512;
};

enum class RowKind { kConv, kMixer, kAttention };

const char* to_string(RowKind k);

struct CostRow {
  std::string name;
  RowKind kind = RowKind::kConv;
  std::int64_t macs = 0;
  std::int64_t cio = 0;
  std::int64_t params = 0;
};

struct CostTotals {
  std::int64_t macs = 0;
  std::int64_t cio = 0;
  std::int64_t params = 0;
  double moc = 0.0;  // macs / cio, 0 when cio == 0
};

struct CostReport {
  std::vector<CostRow> rows;
  CostTotals totals;

  std::int64_t conv_count() const;
};

// Descriptor of a convolution for costing. Linear layers are 1x1 convs.
struct ConvCost {
  std::int64_t c_in = 0, c_out = 0;
  std::int64_t kh = 1, kw = 1;
  std::int64_t stride = 1, pad = 0, groups = 1;
  std::int64_t h_in = 1, w_in = 1;
  bool bias = false;
  bool batchnorm = false;

  std::int64_t h_out() const { return (h_in + 2 * pad - kh) / stride + 1; }
  std::int64_t w_out() const { return (w_in + 2 * pad - kw) / stride + 1; }
};

// macs = kh*kw*(c_in/groups)*c_out*h_out*w_out*batch
// cio  = (c_in*h_in*w_in + c_out*h_out*w_out)*batch
// params = kh*kw*(c_in/groups)*c_out + bias + 2*c_out for batchnorm
CostRow conv_row(const std::string& name, const ConvCost& c, std::int64_t batch);

// Costs of the convolutions inside one block, entry projection included.
std::vector<CostRow> analyze_block(const BlockGraph& graph, const InputShape& shape,
                                   const std::string& prefix = "block");

// Whole-network cost. Throws kInvalidArgument when the input channel count
// disagrees with the net or a feature map underflows.
CostReport analyze(const NetSpec& net, const InputShape& shape);

// Recomputes the totals row from the per-layer rows.
CostTotals sum_rows(const std::vector<CostRow>& rows);

struct BlockComparison {
  BlockSpec a, b;
  std::int64_t macs_a = 0, macs_b = 0;
  std::int64_t cio_a = 0, cio_b = 0;
  double moc_a = 0.0, moc_b = 0.0;
  std::int64_t conv_count_a = 0, conv_count_b = 0;
  std::int64_t out_channels_a = 0, out_channels_b = 0;
};

BlockComparison compare_blocks(const BlockSpec& a, const BlockSpec& b,
                               const InputShape& shape);

nlohmann::json to_json(const CostReport& report);
nlohmann::json to_json(const BlockComparison& cmp);
std::string render_table(const CostReport& report);
std::string render_table(const BlockComparison& cmp);

// Spatial size after each network step; shared with the engine so shape
// contracts agree.
std::int64_t conv_out_size(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                           std::int64_t pad);
int transition_channels(int block_out, double compress_ratio);
int se_hidden(int channels, int reduction);
// Smallest multiple of `patch` that is >= size.
std::int64_t round_up(std::int64_t size, std::int64_t patch);

}  // namespace hdk::graph
