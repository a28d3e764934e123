#include "hdk/model.hpp"

#include <cmath>
#include <sstream>

#include "hdk/cost.hpp"
#include "hdk/error.hpp"
#include "hdk/rng.hpp"

namespace hdk::engine {

using graph::BlockGraph;
using graph::BlockVersion;
using graph::DeepTap;

Model::Model(graph::NetSpec net) : net_(std::move(net)) {
  graph::validate(net_);
  std::int64_t c = net_.input_channels;
  for (std::size_t i = 0; i < net_.stem.size(); ++i) {
    const auto& s = net_.stem[i];
    declare_conv("stem." + std::to_string(i), c, s.out_channels, s.kernel, false, true, true);
    c = s.out_channels;
  }
  for (std::size_t i = 0; i < net_.stages.size(); ++i) {
    const auto& st = net_.stages[i];
    const std::string prefix = "stage" + std::to_string(i);
    blocks_.push_back(graph::compile_block(st.block, static_cast<int>(c)));
    const BlockGraph& g = blocks_.back();
    if (g.has_entry_conv) {
      declare_conv(prefix + ".block.entry", g.nodes[0].c_in, g.nodes[0].c_out, 1, false, true,
                   true);
    }
    for (std::size_t k = 1; k < g.nodes.size(); ++k) {
      declare_conv(prefix + ".block.conv" + std::to_string(k), g.nodes[k].c_in,
                   g.nodes[k].c_out, 3, false, true, true);
    }
    const int c_t = graph::transition_channels(g.output_channels(), st.transition.compress_ratio);
    transition_channels_.push_back(c_t);
    declare_conv(prefix + ".transition.conv", g.output_channels(), c_t, 1, false, true, true);
    const int hidden = graph::se_hidden(c_t, st.transition.se_reduction);
    declare_linear(prefix + ".transition.se.fc1", c_t, hidden);
    declare_linear(prefix + ".transition.se.fc2", hidden, c_t);
    c = c_t;
  }

  const auto& d = net_.decoder;
  const std::int64_t D = d.embed_dim;
  for (int j = 1; j <= 3; ++j) {
    declare_conv("decoder.proj" + std::to_string(j), transition_channels_[d.taps[j]], D, 1, true,
                 false, false);
  }
  declare_conv("decoder.fuse", 3 * D, D, 1, false, true, true);
  declare_conv("decoder.short", D, D, 1, false, true, true);
  for (int b : d.pool_sizes) declare_conv("decoder.pool" + std::to_string(b), D, D, 1, false, true, true);
  const std::int64_t T = static_cast<std::int64_t>(d.patch_size) * d.patch_size;
  for (int r : d.window_ratios) {
    const std::string lp = "decoder.lawin" + std::to_string(r);
    params_.push_back({lp + ".mix.w", {d.heads, T, T}, T, ParamInfo::Init::kWeightLinear});
    params_.push_back({lp + ".mix.b", {d.heads, T}, T, ParamInfo::Init::kBias});
    declare_linear(lp + ".q", D, D);
    declare_linear(lp + ".k", D, D);
    declare_linear(lp + ".v", D, D);
    declare_linear(lp + ".o", D, D);
  }
  const std::int64_t branches =
      1 + static_cast<std::int64_t>(d.pool_sizes.size() + d.window_ratios.size());
  declare_conv("decoder.cat_fuse", branches * D, D, 1, false, true, true);
  declare_conv("decoder.low_proj", transition_channels_[d.taps[0]], d.low_level_dim, 1, false,
               true, true);
  declare_conv("decoder.low_fuse", D + d.low_level_dim, D, 1, false, true, true);
  declare_conv("head.main", D, 1, 1, true, false, false);
  for (std::size_t i = 0; i < net_.heads.deep.size(); ++i) {
    declare_conv("head.deep" + std::to_string(i + 1), D, 1, 1, true, false, false);
  }
  if (net_.heads.boundary) declare_conv("head.boundary", D, 1, 1, true, false, false);
}

void Model::declare_conv(const std::string& name, std::int64_t c_in, std::int64_t c_out,
                         std::int64_t k, bool bias, bool bn, bool relu) {
  const std::int64_t fan_in = c_in * k * k;
  params_.push_back({name + ".w", {c_out, c_in, k, k}, fan_in,
                     relu ? ParamInfo::Init::kWeightRelu : ParamInfo::Init::kWeightLinear});
  if (bias) params_.push_back({name + ".b", {c_out}, fan_in, ParamInfo::Init::kBias});
  if (bn) {
    params_.push_back({name + ".bn_scale", {c_out}, fan_in, ParamInfo::Init::kOne});
    params_.push_back({name + ".bn_shift", {c_out}, fan_in, ParamInfo::Init::kZero});
  }
}

void Model::declare_linear(const std::string& name, std::int64_t in, std::int64_t out) {
  params_.push_back({name + ".w", {out, in}, in, ParamInfo::Init::kWeightLinear});
  params_.push_back({name + ".b", {out}, in, ParamInfo::Init::kBias});
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    std::int64_t e = 1;
    for (auto d : p.shape) e *= d;
    n += e;
  }
  return n;
}

void Model::check(const WeightStore& weights) const {
  std::vector<std::string> missing;
  for (const auto& p : params_) {
    const Tensor* t = weights.find(p.name);
    if (t == nullptr) {
      missing.push_back(p.name);
    } else if (t->shape() != p.shape) {
      fail(ErrorKind::kInvalidArgument, "weight '" + p.name + "' has shape " +
                                            shape_str(t->shape()) + ", net '" + net_.name +
                                            "' expects " + shape_str(p.shape));
    }
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << missing.size() << " weight tensor(s) required by net '" << net_.name
       << "' are missing:";
    for (const auto& m : missing) os << " " << m;
    fail(ErrorKind::kMissing, os.str());
  }
}

namespace {

enum class Act { kNone, kRelu, kGelu };

class Runner {
 public:
  explicit Runner(const WeightStore& w) : w_(w) {}

  Tensor conv(const Tensor& x, const std::string& name, int stride, int pad, Act act,
              bool bn) const {
    const Tensor* bias = w_.find(name + ".b");
    Tensor y = conv2d(x, w_.get(name + ".w"), bias, {stride, pad, 1});
    if (bn) channel_affine_(y, w_.get(name + ".bn_scale"), w_.get(name + ".bn_shift"));
    if (act == Act::kRelu) relu_(y);
    if (act == Act::kGelu) gelu_(y);
    return y;
  }

  const Tensor& get(const std::string& name) const { return w_.get(name); }

 private:
  const WeightStore& w_;
};

Tensor run_block(const Runner& run, const BlockGraph& g, const std::string& prefix,
                 const Tensor& x) {
  Tensor bypass;
  Tensor block_in = x;
  if (g.csp_wrapped) {
    bypass = slice_channels(x, 0, g.csp.bypass_channels);
    block_in = slice_channels(x, g.csp.bypass_channels, g.csp.block_channels);
  }
  const int n = g.spec.depth;
  std::vector<Tensor> outs(n + 1);
  if (g.has_entry_conv) {
    outs[0] = run.conv(block_in, prefix + ".entry", 1, 0, Act::kRelu, true);
  } else {
    outs[0] = std::move(block_in);
  }

  auto share = [&](int layer, int slot) {
    if (g.spec.version == BlockVersion::kV1) return outs[layer];
    const int width = g.share_width(layer);
    return slice_channels(outs[layer], slot * width, width);
  };

  for (int k = 1; k <= n; ++k) {
    const auto& node = g.nodes[k];
    std::vector<Tensor> parts;
    parts.reserve(node.in_sources.size());
    for (int src : node.in_sources) {
      const int slot = graph::find_slot(g.nodes[src], k);
      parts.push_back(share(src, slot));
    }
    std::vector<const Tensor*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    const Tensor input = ptrs.size() == 1 ? parts.front() : concat_channels(ptrs);
    outs[k] = run.conv(input, prefix + ".conv" + std::to_string(k), 1, 1, Act::kRelu, true);
  }

  std::vector<Tensor> routed;
  for (const auto& ref : g.block_out_concat_order) routed.push_back(share(ref.layer, ref.slot));
  if (g.csp_wrapped) routed.push_back(bypass);
  std::vector<const Tensor*> ptrs;
  for (const auto& r : routed) ptrs.push_back(&r);
  return ptrs.size() == 1 ? routed.front() : concat_channels(ptrs);
}

Tensor upsample_to(const Tensor& x, const Tensor& like) {
  return bilinear_resize(x, static_cast<int>(like.h()), static_cast<int>(like.w()));
}

}  // namespace

ForwardOutputs Model::forward(const WeightStore& weights, const Tensor& image) const {
  if (image.rank() != 4 || image.c() != net_.input_channels) {
    fail(ErrorKind::kInvalidArgument,
         "forward: expected N x " + std::to_string(net_.input_channels) +
             " x H x W input, got " + shape_str(image.shape()));
  }
  if (image.h() != image.w() || image.h() % 32 != 0) {
    fail(ErrorKind::kInvalidArgument, "forward: input must be square with side divisible by 32, got " +
                                          shape_str(image.shape()));
  }
  check(weights);
  const Runner run(weights);
  ForwardOutputs out;

  Tensor x = image;
  int stride = 1;
  for (std::size_t i = 0; i < net_.stem.size(); ++i) {
    const auto& s = net_.stem[i];
    x = run.conv(x, "stem." + std::to_string(i), s.stride, s.kernel / 2, Act::kRelu, true);
    stride *= s.stride;
  }

  for (std::size_t i = 0; i < net_.stages.size(); ++i) {
    const auto& st = net_.stages[i];
    const std::string prefix = "stage" + std::to_string(i);
    x = run_block(run, blocks_[i], prefix + ".block", x);
    x = run.conv(x, prefix + ".transition.conv", 1, 0, Act::kRelu, true);
    const SeParams se{&run.get(prefix + ".transition.se.fc1.w"),
                      &run.get(prefix + ".transition.se.fc1.b"),
                      &run.get(prefix + ".transition.se.fc2.w"),
                      &run.get(prefix + ".transition.se.fc2.b")};
    x = se_gate(x, se, st.transition.se_reduction);
    out.pyramid.push_back(x);
    out.pyramid_strides.push_back(stride);
    if (st.transition.downsample) {
      x = max_pool2x2(x);
      stride *= 2;
    }
  }

  const auto& d = net_.decoder;
  const Tensor& low = out.pyramid[d.taps[0]];
  const Tensor& base = out.pyramid[d.taps[1]];
  std::vector<Tensor> proj;
  for (int j = 3; j >= 1; --j) {
    Tensor p = run.conv(out.pyramid[d.taps[j]], "decoder.proj" + std::to_string(j), 1, 0,
                        Act::kGelu, false);
    proj.push_back(upsample_to(p, base));
  }
  const Tensor fused = run.conv(concat_channels({&proj[0], &proj[1], &proj[2]}), "decoder.fuse",
                                1, 0, Act::kRelu, true);

  std::vector<Tensor> branches;
  branches.push_back(run.conv(fused, "decoder.short", 1, 0, Act::kRelu, true));
  for (int b : d.pool_sizes) {
    const Tensor pooled = adaptive_avg_pool(fused, b);
    branches.push_back(
        upsample_to(run.conv(pooled, "decoder.pool" + std::to_string(b), 1, 0, Act::kRelu, true),
                    fused));
  }

  // Symmetric zero padding up to a multiple of the patch size.
  const int P = d.patch_size;
  const int fh = static_cast<int>(fused.h()), fw = static_cast<int>(fused.w());
  const int ph = static_cast<int>(graph::round_up(fh, P)) - fh;
  const int pw = static_cast<int>(graph::round_up(fw, P)) - fw;
  const Tensor padded = pad_zero(fused, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2);
  for (int r : d.window_ratios) {
    const std::string lp = "decoder.lawin" + std::to_string(r);
    const LawinParams lw{&run.get(lp + ".mix.w"), &run.get(lp + ".mix.b"),
                         &run.get(lp + ".q.w"),   &run.get(lp + ".q.b"),
                         &run.get(lp + ".k.w"),   &run.get(lp + ".k.b"),
                         &run.get(lp + ".v.w"),   &run.get(lp + ".v.b"),
                         &run.get(lp + ".o.w"),   &run.get(lp + ".o.b")};
    const Tensor attended =
        large_window_attention(padded, padded, {P, r, d.heads}, lw, &out.attention);
    branches.push_back(crop(attended, ph / 2, pw / 2, fh, fw));
  }
  std::vector<const Tensor*> bptrs;
  for (const auto& b : branches) bptrs.push_back(&b);
  const Tensor attended = run.conv(concat_channels(bptrs), "decoder.cat_fuse", 1, 0, Act::kRelu, true);

  const Tensor low_proj = run.conv(low, "decoder.low_proj", 1, 0, Act::kRelu, true);
  const Tensor up = upsample_to(attended, low);
  const Tensor final_feat =
      run.conv(concat_channels({&up, &low_proj}), "decoder.low_fuse", 1, 0, Act::kRelu, true);

  const int H = static_cast<int>(image.h()), W = static_cast<int>(image.w());
  auto head = [&](const Tensor& feat, const std::string& name) {
    return bilinear_resize(run.conv(feat, name, 1, 0, Act::kNone, false), H, W);
  };
  out.main = head(final_feat, "head.main");
  for (std::size_t i = 0; i < net_.heads.deep.size(); ++i) {
    const Tensor* src = &fused;
    if (net_.heads.deep[i] == DeepTap::kPostAttention) src = &attended;
    if (net_.heads.deep[i] == DeepTap::kLowLevelFused) src = &final_feat;
    out.deep.push_back(head(*src, "head.deep" + std::to_string(i + 1)));
  }
  if (net_.heads.boundary) out.boundary = head(final_feat, "head.boundary");
  return out;
}

WeightStore init_weights(const graph::NetSpec& net, std::uint64_t seed) {
  const Model model(net);
  Rng rng(seed);
  WeightStore store;
  store.provenance = Provenance::kSeeded;
  store.seed = seed;
  for (const auto& p : model.params()) {
    Tensor t(p.shape);
    double bound = 0.0;
    switch (p.init) {
      case ParamInfo::Init::kOne: std::fill(t.values().begin(), t.values().end(), 1.0f); break;
      case ParamInfo::Init::kZero: break;
      case ParamInfo::Init::kWeightRelu: bound = std::sqrt(6.0 / p.fan_in); break;
      case ParamInfo::Init::kWeightLinear: bound = std::sqrt(3.0 / p.fan_in); break;
      case ParamInfo::Init::kBias: bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in)); break;
    }
    if (bound > 0.0) {
      for (float& v : t.values()) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    store.add(p.name, std::move(t));
  }
  return store;
}

ForwardOutputs forward(const graph::NetSpec& net, const WeightStore& weights, const Tensor& image) {
  return Model(net).forward(weights, image);
}

}  // namespace hdk::engine
