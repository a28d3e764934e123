#include "hdk/netspec.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "hdk/error.hpp"

namespace hdk::graph {

using nlohmann::json;

const char* to_string(DeepTap t) {
  switch (t) {
    case DeepTap::kPreAttention: return "pre_attention";
    case DeepTap::kPostAttention: return "post_attention";
    case DeepTap::kLowLevelFused: return "low_level_fused";
  }
  return "?";
}

namespace {

[[noreturn]] void parse_fail(const std::string& where, const std::string& msg) {
  fail(ErrorKind::kParse, where + ": " + msg);
}

[[noreturn]] void semantic_fail(const std::string& where, const std::string& msg) {
  fail(ErrorKind::kSemantic, where + ": " + msg);
}

void expect_object(const json& j, const std::string& where,
                   std::initializer_list<const char*> allowed) {
  if (!j.is_object()) parse_fail(where, "expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) parse_fail(where.empty() ? k : where + "." + k, "unknown field");
  }
}

std::string join(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

int get_int(const json& j, const std::string& where, const char* key,
            std::optional<int> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    parse_fail(join(where, key), "missing required field");
  }
  const json& v = j.at(key);
  if (!v.is_number_integer()) parse_fail(join(where, key), "expected an integer");
  const auto x = v.get<long long>();
  if (x < INT32_MIN || x > INT32_MAX) parse_fail(join(where, key), "integer out of range");
  return static_cast<int>(x);
}

double get_real(const json& j, const std::string& where, const char* key,
                double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) parse_fail(join(where, key), "expected a number");
  return v.get<double>();
}

bool get_bool(const json& j, const std::string& where, const char* key,
              bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) parse_fail(join(where, key), "expected a boolean");
  return v.get<bool>();
}

std::vector<int> get_int_list(const json& j, const std::string& where,
                              const char* key, std::vector<int> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  const std::string w = join(where, key);
  if (!v.is_array()) parse_fail(w, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer()) {
      parse_fail(w + "[" + std::to_string(i) + "]", "expected an integer");
    }
    out.push_back(v[i].get<int>());
  }
  return out;
}

StemConv stem_from_json(const json& j, const std::string& where) {
  expect_object(j, where, {"out_channels", "kernel", "stride"});
  StemConv s;
  s.out_channels = get_int(j, where, "out_channels");
  s.kernel = get_int(j, where, "kernel", 3);
  s.stride = get_int(j, where, "stride", 1);
  return s;
}

TransitionSpec transition_from_json(const json& j, const std::string& where) {
  expect_object(j, where, {"compress_ratio", "se_reduction", "downsample"});
  TransitionSpec t;
  t.compress_ratio = get_real(j, where, "compress_ratio", t.compress_ratio);
  t.se_reduction = get_int(j, where, "se_reduction", t.se_reduction);
  t.downsample = get_bool(j, where, "downsample", t.downsample);
  return t;
}

DecoderSpec decoder_from_json(const json& j, const std::string& where) {
  expect_object(j, where,
                {"embed_dim", "patch_size", "window_ratios", "heads",
                 "pool_sizes", "low_level_dim", "taps"});
  DecoderSpec d;
  d.embed_dim = get_int(j, where, "embed_dim", d.embed_dim);
  d.patch_size = get_int(j, where, "patch_size", d.patch_size);
  d.window_ratios = get_int_list(j, where, "window_ratios", d.window_ratios);
  d.heads = get_int(j, where, "heads", d.heads);
  d.pool_sizes = get_int_list(j, where, "pool_sizes", d.pool_sizes);
  d.low_level_dim = get_int(j, where, "low_level_dim", d.low_level_dim);
  d.taps = get_int_list(j, where, "taps", d.taps);
  return d;
}

HeadsSpec heads_from_json(const json& j, const std::string& where) {
  expect_object(j, where, {"deep", "boundary"});
  HeadsSpec h;
  if (j.contains("deep")) {
    const json& v = j.at("deep");
    const std::string w = join(where, "deep");
    if (!v.is_array()) parse_fail(w, "expected an array of tap names");
    h.deep.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string wi = w + "[" + std::to_string(i) + "]";
      if (!v[i].is_string()) parse_fail(wi, "expected a string");
      const auto s = v[i].get<std::string>();
      if (s == "pre_attention") {
        h.deep.push_back(DeepTap::kPreAttention);
      } else if (s == "post_attention") {
        h.deep.push_back(DeepTap::kPostAttention);
      } else if (s == "low_level_fused") {
        h.deep.push_back(DeepTap::kLowLevelFused);
      } else {
        parse_fail(wi, "unknown deep tap '" + s +
                           "' (pre_attention, post_attention, low_level_fused)");
      }
    }
  }
  h.boundary = get_bool(j, where, "boundary", h.boundary);
  return h;
}

// Byte offset -> 1-based line and column.
std::string locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

BlockSpec block_spec_from_json(const json& j, const std::string& where) {
  expect_object(j, where,
                {"version", "depth", "growth", "multiplier", "csp", "csp_ratio"});
  BlockSpec b;
  if (j.contains("version")) {
    const json& v = j.at("version");
    if (!v.is_string()) parse_fail(join(where, "version"), "expected \"v1\" or \"v2\"");
    const auto s = v.get<std::string>();
    if (s == "v1") {
      b.version = BlockVersion::kV1;
    } else if (s == "v2") {
      b.version = BlockVersion::kV2;
    } else {
      parse_fail(join(where, "version"), "expected \"v1\" or \"v2\", got \"" + s + "\"");
    }
  }
  b.depth = get_int(j, where, "depth");
  b.growth = get_int(j, where, "growth");
  b.multiplier = get_real(j, where, "multiplier", b.multiplier);
  b.csp_wrap = get_bool(j, where, "csp", b.csp_wrap);
  b.csp_ratio = get_real(j, where, "csp_ratio", b.csp_ratio);
  return b;
}

void validate(const NetSpec& net) {
  if (net.input_channels < 1) semantic_fail("input_channels", "must be >= 1");
  for (std::size_t i = 0; i < net.stem.size(); ++i) {
    const auto& s = net.stem[i];
    const std::string w = "stem[" + std::to_string(i) + "]";
    if (s.out_channels < 1) semantic_fail(w + ".out_channels", "must be >= 1");
    if (s.kernel < 1) semantic_fail(w + ".kernel", "must be >= 1");
    if (s.stride < 1) semantic_fail(w + ".stride", "must be >= 1");
  }
  if (net.stages.empty()) semantic_fail("stages", "at least one stage is required");

  int stride = 1;
  for (const auto& s : net.stem) stride *= s.stride;
  std::vector<int> stage_stride;
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    const auto& st = net.stages[i];
    const std::string w = "stages[" + std::to_string(i) + "]";
    try {
      validate(st.block);
    } catch (const Error& e) {
      semantic_fail(w + ".block", e.what());
    }
    if (!(st.transition.compress_ratio > 0.0 && st.transition.compress_ratio <= 1.0)) {
      semantic_fail(w + ".transition.compress_ratio", "must lie in (0, 1]");
    }
    if (st.transition.se_reduction < 1) {
      semantic_fail(w + ".transition.se_reduction", "must be >= 1");
    }
    stage_stride.push_back(stride);
    if (st.transition.downsample) stride *= 2;
  }

  const auto& d = net.decoder;
  if (d.embed_dim < 1) semantic_fail("decoder.embed_dim", "must be >= 1");
  if (d.patch_size < 1) semantic_fail("decoder.patch_size", "must be >= 1");
  if (d.heads < 1) semantic_fail("decoder.heads", "must be >= 1");
  if (d.embed_dim % d.heads != 0) {
    semantic_fail("decoder.heads", "embed_dim " + std::to_string(d.embed_dim) +
                                       " is not divisible by " +
                                       std::to_string(d.heads) + " heads");
  }
  if (d.low_level_dim < 1) semantic_fail("decoder.low_level_dim", "must be >= 1");
  if (d.window_ratios.empty()) semantic_fail("decoder.window_ratios", "must not be empty");
  for (std::size_t i = 0; i < d.window_ratios.size(); ++i) {
    const int r = d.window_ratios[i];
    const std::string w = "decoder.window_ratios[" + std::to_string(i) + "]";
    if (r < 1) semantic_fail(w, "must be >= 1");
    if (((r - 1) * d.patch_size) % 2 != 0) {
      semantic_fail(w, "context margin (ratio - 1) * patch_size / 2 must be an integer");
    }
  }
  for (std::size_t i = 0; i < d.pool_sizes.size(); ++i) {
    if (d.pool_sizes[i] < 1) {
      semantic_fail("decoder.pool_sizes[" + std::to_string(i) + "]", "must be >= 1");
    }
  }
  if (d.taps.size() != 4) {
    semantic_fail("decoder.taps", "expected 4 stage indices (strides 4, 8, 16, 32), got " +
                                      std::to_string(d.taps.size()));
  }
  static constexpr int kTapStrides[4] = {4, 8, 16, 32};
  for (std::size_t i = 0; i < d.taps.size(); ++i) {
    const int t = d.taps[i];
    const std::string w = "decoder.taps[" + std::to_string(i) + "]";
    if (t < 0 || t >= static_cast<int>(net.stages.size())) {
      semantic_fail(w, "references stage " + std::to_string(t) + " but only " +
                           std::to_string(net.stages.size()) + " stages exist");
    }
    if (stage_stride[t] != kTapStrides[i]) {
      semantic_fail(w, "stage " + std::to_string(t) + " runs at stride " +
                           std::to_string(stage_stride[t]) + ", expected " +
                           std::to_string(kTapStrides[i]));
    }
  }
}

NetSpec load_netspec(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kParse, "netspec is not valid JSON at " + locate(text, e.byte > 0 ? e.byte - 1 : 0) +
                                ": " + e.what());
  }
  expect_object(root, "", {"name", "input_channels", "stem", "stages", "decoder", "heads"});

  NetSpec net;
  if (!root.contains("name") || !root.at("name").is_string()) {
    parse_fail("name", "missing or not a string");
  }
  net.name = root.at("name").get<std::string>();
  net.input_channels = get_int(root, "", "input_channels", 3);

  if (root.contains("stem")) {
    const json& s = root.at("stem");
    if (!s.is_array()) parse_fail("stem", "expected an array");
    for (std::size_t i = 0; i < s.size(); ++i) {
      net.stem.push_back(stem_from_json(s[i], "stem[" + std::to_string(i) + "]"));
    }
  }
  if (!root.contains("stages")) parse_fail("stages", "missing required field");
  const json& stages = root.at("stages");
  if (!stages.is_array()) parse_fail("stages", "expected an array");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string w = "stages[" + std::to_string(i) + "]";
    expect_object(stages[i], w, {"block", "transition"});
    if (!stages[i].contains("block")) parse_fail(w + ".block", "missing required field");
    StageSpec st;
    st.block = block_spec_from_json(stages[i].at("block"), w + ".block");
    if (stages[i].contains("transition")) {
      st.transition = transition_from_json(stages[i].at("transition"), w + ".transition");
    }
    net.stages.push_back(st);
  }
  if (root.contains("decoder")) net.decoder = decoder_from_json(root.at("decoder"), "decoder");
  if (root.contains("heads")) net.heads = heads_from_json(root.at("heads"), "heads");

  validate(net);
  return net;
}

NetSpec load_netspec_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open netspec '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return load_netspec(ss.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

json to_json(const BlockSpec& b) {
  return json{{"version", to_string(b.version)},
              {"depth", b.depth},
              {"growth", b.growth},
              {"multiplier", b.multiplier},
              {"csp", b.csp_wrap},
              {"csp_ratio", b.csp_ratio}};
}

json to_json(const NetSpec& net) {
  json stem = json::array();
  for (const auto& s : net.stem) {
    stem.push_back({{"out_channels", s.out_channels}, {"kernel", s.kernel}, {"stride", s.stride}});
  }
  json stages = json::array();
  for (const auto& st : net.stages) {
    stages.push_back({{"block", to_json(st.block)},
                      {"transition",
                       {{"compress_ratio", st.transition.compress_ratio},
                        {"se_reduction", st.transition.se_reduction},
                        {"downsample", st.transition.downsample}}}});
  }
  const auto& d = net.decoder;
  json deep = json::array();
  for (auto t : net.heads.deep) deep.push_back(to_string(t));
  return json{{"name", net.name},
              {"input_channels", net.input_channels},
              {"stem", stem},
              {"stages", stages},
              {"decoder",
               {{"embed_dim", d.embed_dim},
                {"patch_size", d.patch_size},
                {"window_ratios", d.window_ratios},
                {"heads", d.heads},
                {"pool_sizes", d.pool_sizes},
                {"low_level_dim", d.low_level_dim},
                {"taps", d.taps}}},
              {"heads", {{"deep", deep}, {"boundary", net.heads.boundary}}}};
}

std::string config_dir() {
  if (const char* env = std::getenv("HDK_CONFIG_DIR"); env && *env) return env;
  return HDK_CONFIG_DIR;
}

std::string resolve_config(const std::string& name_or_path) {
  namespace fs = std::filesystem;
  if (fs::exists(name_or_path)) return name_or_path;
  for (const auto& candidate :
       {fs::path(config_dir()) / name_or_path,
        fs::path(config_dir()) / (name_or_path + ".json")}) {
    if (fs::exists(candidate)) return candidate.string();
  }
  return name_or_path;
}

}  // namespace hdk::graph
