#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "hdk/blockgraph.hpp"

namespace hdk::graph {

// Conv + BN + ReLU with "same" padding (kernel / 2).
struct StemConv {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;

  friend bool operator==(const StemConv&, const StemConv&) = default;
};

// 1x1 compression conv, SE gate, then optional 2x2 max pool.
struct TransitionSpec {
  double compress_ratio = 0.75;
  int se_reduction = 16;
  bool downsample = true;

  friend bool operator==(const TransitionSpec&, const TransitionSpec&) = default;
};

struct StageSpec {
  BlockSpec block;
  TransitionSpec transition;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct DecoderSpec {
  int embed_dim = 128;
  int patch_size = 8;
  std::vector<int> window_ratios{2, 4, 8};
  int heads = 4;
  std::vector<int> pool_sizes{1};
  int low_level_dim = 48;
  // Stage indices feeding the decoder at strides 4, 8, 16 and 32.
  std::vector<int> taps{1, 2, 3, 4};

  friend bool operator==(const DecoderSpec&, const DecoderSpec&) = default;
};

enum class DeepTap { kPreAttention, kPostAttention, kLowLevelFused };

const char* to_string(DeepTap t);

struct HeadsSpec {
  std::vector<DeepTap> deep{DeepTap::kPreAttention, DeepTap::kPostAttention};
  bool boundary = true;

  friend bool operator==(const HeadsSpec&, const HeadsSpec&) = default;
};

struct NetSpec {
  std::string name;
  int input_channels = 3;
  std::vector<StemConv> stem;
  std::vector<StageSpec> stages;
  DecoderSpec decoder;
  HeadsSpec heads;

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

// Parses and validates netspec JSON text. Unknown keys are rejected, absent
// optional keys take the defaults above. Parse failures raise kParse,
// constraint violations raise kSemantic; both name the offending field.
NetSpec load_netspec(const std::string& text);
NetSpec load_netspec_file(const std::string& path);

// Semantic checks shared by the loader and programmatic construction.
void validate(const NetSpec& net);

// Full JSON form with every default filled in; load_netspec(dump) == net.
nlohmann::json to_json(const NetSpec& net);
nlohmann::json to_json(const BlockSpec& spec);

// Parses a standalone block spec object such as
// {"version": "v2", "depth": 9, "growth": 16}.
BlockSpec block_spec_from_json(const nlohmann::json& j, const std::string& where);

// Directory holding the shipped configs.
std::string config_dir();

// Resolves `name_or_path`: an existing file path is returned as is, otherwise
// a shipped config of that name (with or without ".json") is looked up.
std::string resolve_config(const std::string& name_or_path);

}  // namespace hdk::graph
