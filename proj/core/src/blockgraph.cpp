#include "hdk/blockgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hdk/error.hpp"

namespace hdk::graph {

const char* to_string(BlockVersion v) {
  return v == BlockVersion::kV1 ? "v1" : "v2";
}

void validate(const BlockSpec& spec) {
  require(spec.depth >= 1, "block depth must be >= 1, got " + std::to_string(spec.depth));
  require(spec.growth >= 1, "block growth must be >= 1, got " + std::to_string(spec.growth));
  if (spec.version == BlockVersion::kV1) {
    require(spec.multiplier > 1.0, "v1 block multiplier must be > 1");
  }
  if (spec.csp_wrap) {
    require(spec.csp_ratio > 0.0 && spec.csp_ratio < 1.0,
            "csp ratio must lie in (0, 1)");
  }
}

std::vector<int> divisors(int n) {
  require(n >= 1, "divisors: n must be >= 1, got " + std::to_string(n));
  std::vector<int> low;
  std::vector<int> high;
  for (int f = 1; static_cast<long long>(f) * f <= n; ++f) {
    if (n % f != 0) continue;
    low.push_back(f);
    if (f != n / f) high.push_back(n / f);
  }
  low.insert(low.end(), high.rbegin(), high.rend());
  return low;
}

int BlockGraph::share_width(int layer) const {
  if (spec.version == BlockVersion::kV2) return spec.growth;
  return nodes.at(layer).c_out;
}

int find_slot(const LayerNode& source, int target) {
  for (const auto& e : source.out_targets) {
    if (e.target == target) return e.slot;
  }
  return -1;
}

namespace {

// Divisors of n that also divide k; k == 0 yields every divisor of n.
std::vector<int> common_steps(const std::vector<int>& divs, int k) {
  std::vector<int> out;
  for (int f : divs) {
    if (k % f == 0) out.push_back(f);
  }
  return out;
}

BlockGraph build_v2(const BlockSpec& spec, int block_channels) {
  const int n = spec.depth;
  const int g = spec.growth;
  const auto divs = divisors(n);

  BlockGraph graph;
  graph.spec = spec;
  graph.has_entry_conv = true;
  graph.nodes.resize(n + 1);

  for (int k = 0; k <= n; ++k) {
    LayerNode& node = graph.nodes[k];
    node.index = k;
    const auto steps = common_steps(divs, k);
    node.total_shares = static_cast<int>(steps.size());
    node.c_out = g * node.total_shares;
    for (int slot = 0; slot < node.total_shares; ++slot) {
      const int target = k + steps[slot];
      if (target <= n) {
        node.out_targets.push_back({target, slot});
      } else {
        ++node.output_routed_shares;
        graph.block_out_concat_order.push_back({k, slot});
      }
    }
    if (k == 0) {
      node.c_in = block_channels;
    } else {
      // Sources are k - f for descending f, i.e. ascending source index.
      for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        node.in_sources.push_back(k - *it);
      }
      node.c_in = g * static_cast<int>(node.in_sources.size());
    }
  }
  graph.block_out_channels =
      g * static_cast<int>(graph.block_out_concat_order.size());
  return graph;
}

int round_down_even(double v) {
  const int even = static_cast<int>(std::floor(v / 2.0)) * 2;
  return even < 2 ? 2 : even;
}

BlockGraph build_v1(const BlockSpec& spec, int block_channels) {
  const int n = spec.depth;
  BlockGraph graph;
  graph.spec = spec;
  graph.has_entry_conv = false;
  graph.nodes.resize(n + 1);

  graph.nodes[0].index = 0;
  graph.nodes[0].c_in = block_channels;
  graph.nodes[0].c_out = block_channels;

  for (int k = 1; k <= n; ++k) {
    LayerNode& node = graph.nodes[k];
    node.index = k;
    int z = 0;
    for (int step = 1; step <= k; step *= 2) {
      if (k % step != 0) break;
      node.in_sources.push_back(k - step);
      if (step > 1) ++z;
    }
    std::sort(node.in_sources.begin(), node.in_sources.end());
    node.c_out = round_down_even(spec.growth * std::pow(spec.multiplier, z));
    node.c_in = 0;
    for (int src : node.in_sources) node.c_in += graph.nodes[src].c_out;
  }
  for (int k = 0; k <= n; ++k) {
    for (int t = k + 1; t <= n; ++t) {
      const auto& srcs = graph.nodes[t].in_sources;
      if (std::find(srcs.begin(), srcs.end(), k) != srcs.end()) {
        graph.nodes[k].out_targets.push_back({t, 0});
      }
    }
  }
  // Original harmonic block output: odd layers plus the last one.
  for (int k = 1; k <= n; ++k) {
    if (k % 2 == 1 || k == n) {
      graph.nodes[k].output_routed_shares = 1;
      graph.block_out_concat_order.push_back({k, 0});
      graph.block_out_channels += graph.nodes[k].c_out;
    }
  }
  return graph;
}

}  // namespace

BlockGraph build_block(const BlockSpec& spec, int input_channels) {
  validate(spec);
  require(input_channels >= 1, "block input channels must be >= 1");
  BlockGraph graph = spec.version == BlockVersion::kV2
                         ? build_v2(spec, input_channels)
                         : build_v1(spec, input_channels);
  graph.input_channels = input_channels;
  return graph;
}

BlockGraph wrap_csp(const BlockGraph& graph, double split_ratio) {
  require(!graph.csp_wrapped, "block graph is already CSP-wrapped");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    std::ostringstream os;
    os << "csp split ratio must lie in (0, 1), got " << split_ratio;
    fail(ErrorKind::kInvalidArgument, os.str());
  }
  const int total = graph.input_channels;
  const int bypass = static_cast<int>(std::floor(total * split_ratio));
  const int block = total - bypass;
  if (bypass < 1 || block < 1) {
    fail(ErrorKind::kInvalidArgument,
         "csp split of " + std::to_string(total) +
             " input channels leaves an empty path");
  }

  BlockSpec spec = graph.spec;
  spec.csp_wrap = true;
  spec.csp_ratio = split_ratio;
  BlockGraph wrapped = build_block(spec, block);
  wrapped.input_channels = total;
  wrapped.csp_wrapped = true;
  wrapped.csp = {split_ratio, bypass, block};
  return wrapped;
}

BlockGraph compile_block(const BlockSpec& spec, int input_channels) {
  BlockGraph graph = build_block(spec, input_channels);
  if (spec.csp_wrap) return wrap_csp(graph, spec.csp_ratio);
  return graph;
}

}  // namespace hdk::graph
