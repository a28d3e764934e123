#include "hdk/cost.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "hdk/error.hpp"

namespace hdk::graph {

using nlohmann::json;

const char* to_string(RowKind k) {
  switch (k) {
    case RowKind::kConv: return "conv";
    case RowKind::kMixer: return "mixer";
    case RowKind::kAttention: return "attention";
  }
  return "?";
}

std::int64_t CostReport::conv_count() const {
  std::int64_t n = 0;
  for (const auto& r : rows) n += r.kind == RowKind::kConv ? 1 : 0;
  return n;
}

std::int64_t conv_out_size(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                           std::int64_t pad) {
  const std::int64_t span = in + 2 * pad - kernel;
  if (span < 0) {
    fail(ErrorKind::kInvalidArgument,
         "feature map of size " + std::to_string(in) + " underflows a " +
             std::to_string(kernel) + "-wide kernel");
  }
  return span / stride + 1;
}

int transition_channels(int block_out, double compress_ratio) {
  return std::max(1, static_cast<int>(std::lround(block_out * compress_ratio)));
}

int se_hidden(int channels, int reduction) {
  return (channels + reduction - 1) / reduction;
}

std::int64_t round_up(std::int64_t size, std::int64_t patch) {
  return (size + patch - 1) / patch * patch;
}

CostRow conv_row(const std::string& name, const ConvCost& c, std::int64_t batch) {
  const std::int64_t ho = conv_out_size(c.h_in, c.kh, c.stride, c.pad);
  const std::int64_t wo = conv_out_size(c.w_in, c.kw, c.stride, c.pad);
  const std::int64_t per_out = c.kh * c.kw * (c.c_in / c.groups);
  CostRow row;
  row.name = name;
  row.kind = RowKind::kConv;
  row.macs = per_out * c.c_out * ho * wo * batch;
  row.cio = (c.c_in * c.h_in * c.w_in + c.c_out * ho * wo) * batch;
  row.params = per_out * c.c_out + (c.bias ? c.c_out : 0) + (c.batchnorm ? 2 * c.c_out : 0);
  return row;
}

CostTotals sum_rows(const std::vector<CostRow>& rows) {
  CostTotals t;
  for (const auto& r : rows) {
    t.macs += r.macs;
    t.cio += r.cio;
    t.params += r.params;
  }
  t.moc = t.cio > 0 ? static_cast<double>(t.macs) / static_cast<double>(t.cio) : 0.0;
  return t;
}

std::vector<CostRow> analyze_block(const BlockGraph& graph, const InputShape& shape,
                                   const std::string& prefix) {
  std::vector<CostRow> rows;
  const std::int64_t h = shape.h, w = shape.w;
  if (graph.has_entry_conv) {
    ConvCost c;
    c.c_in = graph.nodes[0].c_in;
    c.c_out = graph.nodes[0].c_out;
    c.h_in = h;
    c.w_in = w;
    c.batchnorm = true;
    rows.push_back(conv_row(prefix + ".entry", c, shape.n));
  }
  for (std::size_t k = 1; k < graph.nodes.size(); ++k) {
    ConvCost c;
    c.c_in = graph.nodes[k].c_in;
    c.c_out = graph.nodes[k].c_out;
    c.kh = c.kw = 3;
    c.pad = 1;
    c.h_in = h;
    c.w_in = w;
    c.batchnorm = true;
    rows.push_back(conv_row(prefix + ".conv" + std::to_string(k), c, shape.n));
  }
  return rows;
}

namespace {

struct Feature {
  std::int64_t c = 0, h = 0, w = 0;
};

ConvCost pointwise(std::int64_t c_in, std::int64_t c_out, std::int64_t h, std::int64_t w,
                   bool bias, bool bn) {
  ConvCost c;
  c.c_in = c_in;
  c.c_out = c_out;
  c.h_in = h;
  c.w_in = w;
  c.bias = bias;
  c.batchnorm = bn;
  return c;
}

}  // namespace

CostReport analyze(const NetSpec& net, const InputShape& shape) {
  validate(net);
  if (shape.c != net.input_channels) {
    fail(ErrorKind::kInvalidArgument,
         "input has " + std::to_string(shape.c) + " channels, net '" + net.name +
             "' expects " + std::to_string(net.input_channels));
  }
  require(shape.n >= 1 && shape.h >= 1 && shape.w >= 1, "input dims must be >= 1");

  CostReport report;
  auto& rows = report.rows;
  const std::int64_t n = shape.n;
  Feature x{shape.c, shape.h, shape.w};

  for (std::size_t i = 0; i < net.stem.size(); ++i) {
    const auto& s = net.stem[i];
    ConvCost c;
    c.c_in = x.c;
    c.c_out = s.out_channels;
    c.kh = c.kw = s.kernel;
    c.stride = s.stride;
    c.pad = s.kernel / 2;
    c.h_in = x.h;
    c.w_in = x.w;
    c.batchnorm = true;
    rows.push_back(conv_row("stem." + std::to_string(i), c, n));
    x = {s.out_channels, c.h_out(), c.w_out()};
  }

  std::vector<Feature> stage_out;
  for (std::size_t i = 0; i < net.stages.size(); ++i) {
    const auto& st = net.stages[i];
    const std::string prefix = "stage" + std::to_string(i);
    const BlockGraph g = compile_block(st.block, static_cast<int>(x.c));
    auto block_rows = analyze_block(g, {n, x.c, x.h, x.w}, prefix + ".block");
    rows.insert(rows.end(), block_rows.begin(), block_rows.end());

    const int c_block = g.output_channels();
    const int c_t = transition_channels(c_block, st.transition.compress_ratio);
    rows.push_back(conv_row(prefix + ".transition.conv",
                            pointwise(c_block, c_t, x.h, x.w, false, true), n));
    const int hidden = se_hidden(c_t, st.transition.se_reduction);
    rows.push_back(conv_row(prefix + ".transition.se.fc1",
                            pointwise(c_t, hidden, 1, 1, true, false), n));
    rows.push_back(conv_row(prefix + ".transition.se.fc2",
                            pointwise(hidden, c_t, 1, 1, true, false), n));
    x.c = c_t;
    stage_out.push_back(x);
    if (st.transition.downsample) {
      if (x.h < 2 || x.w < 2) {
        fail(ErrorKind::kInvalidArgument,
             prefix + ": feature map " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                 " underflows the 2x2 downsample");
      }
      x.h /= 2;
      x.w /= 2;
    }
  }

  const auto& d = net.decoder;
  const std::int64_t D = d.embed_dim;
  const Feature low = stage_out[d.taps[0]];
  const Feature base = stage_out[d.taps[1]];
  for (int j = 1; j <= 3; ++j) {
    const Feature t = stage_out[d.taps[j]];
    rows.push_back(conv_row("decoder.proj" + std::to_string(j),
                            pointwise(t.c, D, t.h, t.w, true, false), n));
  }
  rows.push_back(conv_row("decoder.fuse", pointwise(3 * D, D, base.h, base.w, false, true), n));
  rows.push_back(conv_row("decoder.short", pointwise(D, D, base.h, base.w, false, true), n));
  for (int b : d.pool_sizes) {
    rows.push_back(conv_row("decoder.pool" + std::to_string(b),
                            pointwise(D, D, b, b, false, true), n));
  }

  const std::int64_t P = d.patch_size;
  const std::int64_t hp = round_up(base.h, P), wp = round_up(base.w, P);
  const std::int64_t patches = (hp / P) * (wp / P);
  const std::int64_t tokens = P * P;
  for (int r : d.window_ratios) {
    const std::string lp = "decoder.lawin" + std::to_string(r);
    CostRow mix;
    mix.name = lp + ".mix";
    mix.kind = RowKind::kMixer;
    mix.macs = n * patches * D * tokens * tokens;
    mix.cio = n * 2 * D * hp * wp;
    mix.params = d.heads * (tokens * tokens + tokens);
    rows.push_back(mix);
    for (const char* proj : {".q", ".k", ".v"}) {
      rows.push_back(conv_row(lp + proj, pointwise(D, D, hp, wp, true, false), n));
    }
    CostRow attn;
    attn.name = lp + ".attn";
    attn.kind = RowKind::kAttention;
    attn.macs = n * patches * 2 * tokens * tokens * D;
    attn.cio = n * 4 * D * hp * wp;
    rows.push_back(attn);
    rows.push_back(conv_row(lp + ".o", pointwise(D, D, hp, wp, true, false), n));
  }
  const std::int64_t branches =
      1 + static_cast<std::int64_t>(d.pool_sizes.size() + d.window_ratios.size());
  rows.push_back(conv_row("decoder.cat_fuse",
                          pointwise(branches * D, D, base.h, base.w, false, true), n));
  rows.push_back(conv_row("decoder.low_proj",
                          pointwise(low.c, d.low_level_dim, low.h, low.w, false, true), n));
  rows.push_back(conv_row("decoder.low_fuse",
                          pointwise(D + d.low_level_dim, D, low.h, low.w, false, true), n));

  rows.push_back(conv_row("head.main", pointwise(D, 1, low.h, low.w, true, false), n));
  for (std::size_t i = 0; i < net.heads.deep.size(); ++i) {
    const bool at_low = net.heads.deep[i] == DeepTap::kLowLevelFused;
    const Feature t = at_low ? low : base;
    rows.push_back(conv_row("head.deep" + std::to_string(i + 1),
                            pointwise(D, 1, t.h, t.w, true, false), n));
  }
  if (net.heads.boundary) {
    rows.push_back(conv_row("head.boundary", pointwise(D, 1, low.h, low.w, true, false), n));
  }

  report.totals = sum_rows(rows);
  return report;
}

BlockComparison compare_blocks(const BlockSpec& a, const BlockSpec& b,
                               const InputShape& shape) {
  const auto ga = compile_block(a, static_cast<int>(shape.c));
  const auto gb = compile_block(b, static_cast<int>(shape.c));
  const auto ta = sum_rows(analyze_block(ga, shape));
  const auto tb = sum_rows(analyze_block(gb, shape));
  BlockComparison cmp;
  cmp.a = a;
  cmp.b = b;
  cmp.macs_a = ta.macs;
  cmp.macs_b = tb.macs;
  cmp.cio_a = ta.cio;
  cmp.cio_b = tb.cio;
  cmp.moc_a = ta.moc;
  cmp.moc_b = tb.moc;
  cmp.conv_count_a = ga.conv_count();
  cmp.conv_count_b = gb.conv_count();
  cmp.out_channels_a = ga.output_channels();
  cmp.out_channels_b = gb.output_channels();
  return cmp;
}

json to_json(const CostReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"name", r.name},
                    {"kind", to_string(r.kind)},
                    {"macs", r.macs},
                    {"cio", r.cio},
                    {"params", r.params}});
  }
  return json{{"rows", rows},
              {"totals",
               {{"macs", report.totals.macs},
                {"cio", report.totals.cio},
                {"moc", report.totals.moc},
                {"params", report.totals.params},
                {"conv_count", report.conv_count()}}}};
}

json to_json(const BlockComparison& c) {
  return json{{"a", to_json(c.a)},
              {"b", to_json(c.b)},
              {"macs_a", c.macs_a},
              {"macs_b", c.macs_b},
              {"cio_a", c.cio_a},
              {"cio_b", c.cio_b},
              {"moc_a", c.moc_a},
              {"moc_b", c.moc_b},
              {"conv_count_a", c.conv_count_a},
              {"conv_count_b", c.conv_count_b},
              {"out_channels_a", c.out_channels_a},
              {"out_channels_b", c.out_channels_b}};
}

std::string render_table(const CostReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(34) << "layer" << std::setw(10) << "kind" << std::right
     << std::setw(16) << "macs" << std::setw(14) << "cio" << std::setw(12) << "params"
     << "\n";
  for (const auto& r : report.rows) {
    os << std::left << std::setw(34) << r.name << std::setw(10) << to_string(r.kind)
       << std::right << std::setw(16) << r.macs << std::setw(14) << r.cio << std::setw(12)
       << r.params << "\n";
  }
  os << std::left << std::setw(44) << "total" << std::right << std::setw(16)
     << report.totals.macs << std::setw(14) << report.totals.cio << std::setw(12)
     << report.totals.params << "\n";
  os << "moc " << std::fixed << std::setprecision(3) << report.totals.moc << ", "
     << report.conv_count() << " convs\n";
  return os.str();
}

std::string render_table(const BlockComparison& c) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "" << std::right << std::setw(16) << "a"
     << std::setw(16) << "b" << "\n";
  auto line = [&](const char* label, auto va, auto vb) {
    os << std::left << std::setw(10) << label << std::right << std::setw(16) << va
       << std::setw(16) << vb << "\n";
  };
  line("spec", std::string(to_string(c.a.version)) + " n=" + std::to_string(c.a.depth) +
                   " g=" + std::to_string(c.a.growth),
       std::string(to_string(c.b.version)) + " n=" + std::to_string(c.b.depth) +
           " g=" + std::to_string(c.b.growth));
  line("convs", c.conv_count_a, c.conv_count_b);
  line("macs", c.macs_a, c.macs_b);
  line("cio", c.cio_a, c.cio_b);
  os << std::fixed << std::setprecision(3);
  line("moc", c.moc_a, c.moc_b);
  line("out_ch", c.out_channels_a, c.out_channels_b);
  return os.str();
}

}  // namespace hdk::graph
