#include <gtest/gtest.h>

#include <numeric>

#include "hdk/blockgraph.hpp"
#include "hdk/error.hpp"
#include "oracles.hpp"

using namespace hdk::graph;

namespace {

BlockSpec v2(int n, int g) {
  BlockSpec s;
  s.version = BlockVersion::kV2;
  s.depth = n;
  s.growth = g;
  return s;
}

BlockSpec v1(int n, int g, double m = 1.7) {
  BlockSpec s;
  s.version = BlockVersion::kV1;
  s.depth = n;
  s.growth = g;
  s.multiplier = m;
  return s;
}

}  // namespace

TEST(Divisors, Examples) {
  EXPECT_EQ(divisors(9), (std::vector<int>{1, 3, 9}));
  EXPECT_EQ(divisors(1), (std::vector<int>{1}));
  EXPECT_EQ(divisors(15), (std::vector<int>{1, 3, 5, 15}));
  EXPECT_EQ(divisors(24), (std::vector<int>{1, 2, 3, 4, 6, 8, 12, 24}));
}

TEST(Divisors, ZeroIsInvalid) {
  try {
    divisors(0);
    FAIL() << "expected an error";
  } catch (const hdk::Error& e) {
    EXPECT_EQ(e.kind(), hdk::ErrorKind::kInvalidArgument);
  }
}

TEST(BuildBlockV2, DepthNineSources) {
  const BlockGraph g = build_block(v2(9, 16), 64);
  EXPECT_EQ(g.nodes[9].in_sources, (std::vector<int>{0, 6, 8}));
  std::vector<int> shortcut;
  for (int k = 1; k <= 9; ++k) {
    const auto& s = g.nodes[k].in_sources;
    if (std::find(s.begin(), s.end(), 0) != s.end()) shortcut.push_back(k);
  }
  EXPECT_EQ(shortcut, (std::vector<int>{1, 3, 9}));
}

TEST(BuildBlockV2, DepthOneIsSingleConv) {
  const BlockGraph g = build_block(v2(1, 8), 5);
  ASSERT_EQ(g.nodes.size(), 2u);
  EXPECT_EQ(g.nodes[1].in_sources, (std::vector<int>{0}));
  EXPECT_EQ(g.block_out_channels, g.nodes[1].c_out);
  EXPECT_EQ(g.block_out_concat_order, (std::vector<ShareRef>{{1, 0}}));
}

TEST(BuildBlockV2, ChannelRuleByHand) {
  const BlockGraph g = build_block(v2(9, 16), 64);
  EXPECT_EQ(g.nodes[3].c_out, 32);
  EXPECT_EQ(g.nodes[3].c_in, 32);
  EXPECT_EQ(g.nodes[3].in_sources, (std::vector<int>{0, 2}));
  // entry projection feeds node 0 with one share per divisor of n
  EXPECT_TRUE(g.has_entry_conv);
  EXPECT_EQ(g.nodes[0].c_in, 64);
  EXPECT_EQ(g.nodes[0].c_out, 48);
}

TEST(BuildBlockV2, MatchesBruteForceForAllDepths) {
  for (int n = 1; n <= 24; ++n) {
    const BlockGraph g = build_block(v2(n, 4), 16);
    std::vector<int> shortcut;
    for (int k = 1; k <= n; ++k) {
      EXPECT_EQ(g.nodes[k].in_sources, oracle::sources(n, k)) << "n=" << n << " k=" << k;
      const auto& s = g.nodes[k].in_sources;
      if (std::find(s.begin(), s.end(), 0) != s.end()) shortcut.push_back(k);
    }
    EXPECT_EQ(shortcut, divisors(n)) << "n=" << n;
  }
}

TEST(BuildBlockV2, EqualChannelsAndShareConservation) {
  for (int n : {3, 9, 15}) {
    for (int g : {8, 16, 24}) {
      const BlockGraph b = build_block(v2(n, g), 32);
      int routed = 0;
      for (int k = 0; k <= n; ++k) {
        const LayerNode& node = b.nodes[k];
        const int shares = oracle::count_divisors(std::gcd(n, k));
        if (k >= 1) {
          EXPECT_EQ(node.c_in, node.c_out);
          EXPECT_EQ(node.c_out, g * shares);
        }
        EXPECT_EQ(node.total_shares, shares);
        EXPECT_EQ(static_cast<int>(node.out_targets.size()) + node.output_routed_shares, shares);
        for (const auto& e : node.out_targets) EXPECT_GT(e.target, k);
        routed += node.output_routed_shares;
      }
      EXPECT_EQ(b.block_out_channels, g * routed);
      EXPECT_EQ(b.block_out_channels, g * oracle::count_divisors(n));
    }
  }
}

TEST(BuildBlockV2, ConcatOrderIsAscending) {
  const BlockGraph g = build_block(v2(12, 4), 8);
  for (std::size_t i = 1; i < g.block_out_concat_order.size(); ++i) {
    const auto& a = g.block_out_concat_order[i - 1];
    const auto& b = g.block_out_concat_order[i];
    EXPECT_TRUE(a.layer < b.layer || (a.layer == b.layer && a.slot < b.slot));
  }
}

TEST(BuildBlockV2, SlotsFollowAscendingDivisor) {
  const BlockGraph g = build_block(v2(9, 16), 64);
  // node 0 feeds 1, 3, 9 through slots 0, 1, 2
  EXPECT_EQ(find_slot(g.nodes[0], 1), 0);
  EXPECT_EQ(find_slot(g.nodes[0], 3), 1);
  EXPECT_EQ(find_slot(g.nodes[0], 9), 2);
  EXPECT_EQ(find_slot(g.nodes[0], 2), -1);
}

TEST(BuildBlock, Deterministic) {
  EXPECT_EQ(build_block(v2(15, 24), 48), build_block(v2(15, 24), 48));
  EXPECT_EQ(build_block(v1(8, 16), 48), build_block(v1(8, 16), 48));
}

TEST(BuildBlockV1, HarmonicPattern) {
  const BlockGraph g = build_block(v1(8, 16), 64);
  EXPECT_FALSE(g.has_entry_conv);
  EXPECT_EQ(g.nodes[8].in_sources, (std::vector<int>{0, 4, 6, 7}));
  EXPECT_EQ(g.nodes[6].in_sources, (std::vector<int>{4, 5}));
  EXPECT_EQ(g.nodes[1].c_out, 16);
  EXPECT_EQ(g.nodes[2].c_out, 26);  // 16 * 1.7 = 27.2 -> 26
  EXPECT_EQ(g.nodes[4].c_out, 46);  // 46.24
  EXPECT_EQ(g.nodes[8].c_out, 78);  // 78.6
  EXPECT_EQ(g.nodes[8].c_in, 64 + 46 + 26 + 16);
  // odd layers plus the last one
  EXPECT_EQ(g.block_out_channels, 16 * 4 + 78);
}

TEST(WrapCsp, SplitsAndConcatenates) {
  const BlockGraph base = build_block(v2(9, 16), 32);
  const BlockGraph w = wrap_csp(base, 0.5);
  EXPECT_TRUE(w.csp_wrapped);
  EXPECT_EQ(w.csp.bypass_channels, 16);
  EXPECT_EQ(w.csp.block_channels, 16);
}

TEST(WrapCsp, OutputChannelArithmetic) {
  // 64 input channels, block path output of 96 channels
  BlockSpec s = v2(3, 48);  // d(3) = 2 shares -> 96
  const BlockGraph w = compile_block([&] {
    s.csp_wrap = true;
    s.csp_ratio = 0.5;
    return s;
  }(), 64);
  EXPECT_EQ(w.block_out_channels, 96);
  EXPECT_EQ(w.csp.bypass_channels, 32);
  EXPECT_EQ(w.output_channels(), 128);
  EXPECT_EQ(w.nodes[0].c_in, 32);
}

TEST(WrapCsp, RemainderGoesToBlockPath) {
  const BlockGraph w = wrap_csp(build_block(v2(3, 8), 7), 0.5);
  EXPECT_EQ(w.csp.bypass_channels, 3);
  EXPECT_EQ(w.csp.block_channels, 4);
}

TEST(WrapCsp, Errors) {
  const BlockGraph base = build_block(v2(9, 16), 64);
  const BlockGraph once = wrap_csp(base, 0.5);
  EXPECT_THROW(wrap_csp(once, 0.5), hdk::Error);
  EXPECT_THROW(wrap_csp(base, 0.0), hdk::Error);
  EXPECT_THROW(wrap_csp(base, 1.0), hdk::Error);
  EXPECT_THROW(wrap_csp(build_block(v2(3, 8), 1), 0.5), hdk::Error);
}

TEST(BlockSpecValidation, RejectsBadValues) {
  EXPECT_THROW(validate(v2(0, 8)), hdk::Error);
  EXPECT_THROW(validate(v2(3, 0)), hdk::Error);
  EXPECT_THROW(validate(v1(3, 8, 1.0)), hdk::Error);
  EXPECT_NO_THROW(validate(v2(3, 8)));
  BlockSpec s = v2(3, 8);
  s.multiplier = 0.5;  // ignored by v2
  EXPECT_NO_THROW(validate(s));
}
