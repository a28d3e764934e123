#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "hdk/cost.hpp"
#include "hdk/dataio.hpp"
#include "hdk/error.hpp"
#include "hdk/loss.hpp"
#include "hdk/model.hpp"
#include "hdk/netspec.hpp"
#include "hdk/postproc.hpp"

namespace hdk::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Error carrying the exit code it should produce.
struct ExitWith {
  int code;
  std::string message;
};

[[noreturn]] void quit(int code, const std::string& msg) { throw ExitWith{code, msg}; }

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) quit(kConfigError, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    quit(kConfigError, path + ": " + e.what());
  }
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string spec;
  std::string compare;
  int input_size = 512;
  int channels = 64;
  int batch = 1;
  std::string format = "table";
};

struct LoadedSpec {
  std::optional<graph::NetSpec> net;
  std::optional<graph::BlockSpec> block;
};

LoadedSpec load_any_spec(const std::string& name_or_path) {
  const std::string path = graph::resolve_config(name_or_path);
  const json j = read_json_file(path);
  LoadedSpec s;
  try {
    if (j.is_object() && j.contains("stages")) {
      s.net = graph::load_netspec(j.dump());
    } else {
      s.block = graph::block_spec_from_json(j, "");
      graph::validate(*s.block);
    }
  } catch (const Error& e) {
    quit(kConfigError, path + ": " + e.what());
  }
  return s;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (a.input_size < 1 || a.channels < 1 || a.batch < 1) {
    quit(kConfigError, "analyze: --input-size, --channels and --batch must be >= 1");
  }
  const LoadedSpec spec = load_any_spec(a.spec);
  const bool as_json = a.format == "json";

  if (!a.compare.empty()) {
    const LoadedSpec other = load_any_spec(a.compare);
    if (!spec.block || !other.block) {
      quit(kConfigError, "analyze: --compare needs two block specs, not network specs");
    }
    const auto cmp = graph::compare_blocks(*spec.block, *other.block,
                                           {a.batch, a.channels, a.input_size, a.input_size});
    if (as_json) {
      out << graph::to_json(cmp).dump(2) << "\n";
    } else {
      out << graph::render_table(cmp);
    }
    return kOk;
  }

  graph::CostReport report;
  try {
    if (spec.net) {
      report = graph::analyze(
          *spec.net, {a.batch, spec.net->input_channels, a.input_size, a.input_size});
    } else {
      const auto g = graph::compile_block(*spec.block, a.channels);
      report.rows = graph::analyze_block(g, {a.batch, a.channels, a.input_size, a.input_size});
      report.totals = graph::sum_rows(report.rows);
    }
  } catch (const Error& e) {
    quit(kConfigError, std::string("analyze: ") + e.what());
  }
  if (as_json) {
    out << graph::to_json(report).dump(2) << "\n";
  } else {
    out << graph::render_table(report);
  }
  return kOk;
}

// ---- infer -----------------------------------------------------------------

struct InferArgs {
  std::string spec = "hardnetv2-53";
  std::vector<std::string> weights;
  std::optional<std::uint64_t> seed;
  std::string input;
  std::string output;
  std::string tta = "none";
  std::string compress = "tanh";
  bool no_fill = false;
  int size = 512;
};

bool is_netpbm(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

std::vector<fs::path> list_images(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_netpbm(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int cmd_infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
  post::TTAMode tta;
  post::Compression method;
  try {
    tta = post::parse_tta(a.tta);
    method = post::parse_compression(a.compress);
  } catch (const Error& e) {
    quit(kConfigError, e.what());
  }
  if (a.size < 32 || a.size % 32 != 0) {
    quit(kConfigError, "infer: --size must be a positive multiple of 32");
  }
  if (a.weights.empty() && !a.seed) {
    quit(kConfigError, "infer: give --weights or --seed");
  }

  const std::string spec_path = graph::resolve_config(a.spec);
  if (!fs::exists(spec_path)) quit(kConfigError, "infer: spec '" + a.spec + "' not found");
  graph::NetSpec net;
  std::uint32_t spec_crc = 0;
  try {
    const auto bytes = io::read_file(spec_path);
    spec_crc = io::crc32(bytes);
    net = graph::load_netspec(std::string(bytes.begin(), bytes.end()));
  } catch (const Error& e) {
    quit(kConfigError, spec_path + ": " + e.what());
  }
  const engine::Model model(net);

  std::vector<engine::WeightStore> stores;
  json weight_entries = json::array();
  if (a.weights.empty()) {
    stores.push_back(engine::init_weights(net, *a.seed));
  }
  for (const auto& path : a.weights) {
    if (!fs::exists(path)) quit(kMissingArtifact, "infer: weights '" + path + "' not found");
    try {
      const auto bytes = io::read_file(path);
      engine::WeightStore s = io::deserialize_weights(bytes);
      s.source = path;
      weight_entries.push_back({{"path", path}, {"crc32", hex32(io::crc32(bytes))}});
      stores.push_back(std::move(s));
    } catch (const Error& e) {
      quit(kMissingArtifact, path + ": " + e.what());
    }
  }
  for (const auto& s : stores) {
    try {
      model.check(s);
    } catch (const Error& e) {
      quit(kMissingArtifact, (s.source.empty() ? "seeded weights" : s.source) + ": " + e.what());
    }
  }

  if (!fs::is_directory(a.input)) quit(kMissingArtifact, "infer: no input directory '" + a.input + "'");
  const auto images = list_images(a.input);
  if (images.empty()) quit(kConfigError, "infer: no .ppm/.pgm/.pnm images in '" + a.input + "'");
  std::error_code ec;
  fs::create_directories(a.output, ec);
  if (ec) quit(kConfigError, "infer: cannot create '" + a.output + "': " + ec.message());

  std::vector<post::SegModel> folds;
  for (const auto& s : stores) {
    folds.push_back([&model, &s](const Tensor& x) { return model.forward(s, x).main; });
  }

  json outputs = json::object();
  json failed = json::array();
  for (const auto& path : images) {
    const std::string name = path.stem().string() + ".pgm";
    try {
      const Tensor image = io::read_image(path.string());
      const io::Prepared prep = io::pad_resize(image, a.size);
      const ProbMap prob = post::tta_ensemble(folds, prep.image, tta, method);
      BinaryMask mask = post::threshold(prob);
      if (!a.no_fill) mask = post::fill_holes(mask);
      const BinaryMask final_mask = io::invert(mask, prep.geometry);
      const auto bytes = io::encode_mask(final_mask);
      io::write_file_atomic((fs::path(a.output) / name).string(), bytes);
      outputs[name] = hex32(io::crc32(bytes));
      err << "infer: " << path.filename().string() << " -> " << name << "\n";
    } catch (const Error& e) {
      err << "infer: " << path.string() << ": " << e.what() << "\n";
      failed.push_back(path.filename().string());
    }
  }

  json manifest = {
      {"command", "infer"},
      {"tool_version", HDK_VERSION},
      {"netspec", {{"path", spec_path}, {"name", net.name}, {"crc32", hex32(spec_crc)}}},
      {"weights", weight_entries},
      {"seed", a.seed ? json(*a.seed) : json(nullptr)},
      {"folds", static_cast<int>(stores.size())},
      {"tta", post::to_string(tta)},
      {"compression", post::to_string(method)},
      {"fill_holes", !a.no_fill},
      {"input_size", a.size},
      {"outputs", outputs},
      {"failed", failed},
  };
  const std::string text = manifest.dump(2) + "\n";
  io::write_file_atomic((fs::path(a.output) / "manifest.json").string(),
                        std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  out << text;
  return failed.empty() ? kOk : kPartialFailure;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string format = "table";
};

std::map<std::string, fs::path> masks_by_stem(const std::string& dir) {
  if (!fs::is_directory(dir)) quit(kMissingArtifact, "eval: no directory '" + dir + "'");
  std::map<std::string, fs::path> out;
  for (const auto& p : list_images(dir)) out[p.stem().string()] = p;
  return out;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto pred = masks_by_stem(a.pred);
  const auto gt = masks_by_stem(a.gt);
  std::vector<std::string> common, missing;
  for (const auto& [stem, p] : pred) (gt.count(stem) ? common : missing).push_back(stem);
  for (const auto& [stem, p] : gt) {
    if (!pred.count(stem)) missing.push_back(stem);
  }
  std::sort(missing.begin(), missing.end());
  if (common.empty()) quit(kConfigError, "eval: no file names in common between pred and gt");

  json per_image = json::object();
  double sum = 0.0;
  int scored = 0;
  bool partial = !missing.empty();
  for (const auto& stem : missing) err << "eval: " << stem << " has no counterpart, skipped\n";
  for (const auto& stem : common) {
    try {
      const double d = post::dice(io::read_mask(pred.at(stem).string()),
                                  io::read_mask(gt.at(stem).string()));
      per_image[stem] = d;
      sum += d;
      ++scored;
    } catch (const Error& e) {
      err << "eval: " << stem << ": " << e.what() << "\n";
      missing.push_back(stem);
      partial = true;
    }
  }
  if (scored == 0) quit(kPartialFailure, "eval: no pair could be scored");
  const double mean = sum / scored;
  if (a.format == "json") {
    out << json{{"mean_dice", mean}, {"per_image", per_image}, {"skipped", missing}}.dump(2)
        << "\n";
  } else {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    for (const auto& [stem, d] : per_image.items()) {
      os << std::left << std::setw(32) << stem << " " << d.get<double>() << "\n";
    }
    os << std::left << std::setw(32) << "mean" << " " << mean << "\n";
    out << os.str();
  }
  return partial ? kPartialFailure : kOk;
}

// ---- gradcheck -------------------------------------------------------------

struct GradArgs {
  std::uint64_t seed = 0;
  int size = 8;
  std::string flags = "d1,d2,b";
  double tolerance = 1e-6;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  if (a.size < 1 || a.size > 32) quit(kConfigError, "gradcheck: --size must lie in 1..32");
  loss::Enable enable;
  try {
    enable = loss::parse_enable(a.flags);
  } catch (const Error& e) {
    quit(kConfigError, e.what());
  }
  const auto report = loss::grad_check(a.seed, a.size, a.size, enable);
  json j = report.to_json();
  j["tolerance"] = a.tolerance;
  j["passed"] = report.max_rel_err < a.tolerance;
  out << j.dump(2) << "\n";
  return report.max_rel_err < a.tolerance ? kOk : kCheckFailed;
}

// ---- split-folds -----------------------------------------------------------

struct FoldArgs {
  std::string list;
  int k = 5;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_split_folds(const FoldArgs& a, std::ostream& out) {
  std::ifstream in(a.list);
  if (!in) quit(kMissingArtifact, "split-folds: cannot open '" + a.list + "'");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  io::FoldAssignment f;
  try {
    f = io::split_folds(ids, a.k, a.seed);
  } catch (const Error& e) {
    quit(kConfigError, e.what());
  }
  const std::string text = io::to_json(f).dump(2) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    io::write_file_atomic(a.out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                           text.size()));
  }
  return kOk;
}

// ---- init-weights ----------------------------------------------------------

struct InitArgs {
  std::string spec = "hardnetv2-53";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_init_weights(const InitArgs& a, std::ostream& out) {
  graph::NetSpec net;
  try {
    net = graph::load_netspec_file(graph::resolve_config(a.spec));
  } catch (const Error& e) {
    quit(kConfigError, e.what());
  }
  const auto store = engine::init_weights(net, a.seed);
  const auto bytes = io::serialize_weights(store);
  io::write_file_atomic(a.out, bytes);
  out << json{{"path", a.out},
              {"net", net.name},
              {"seed", a.seed},
              {"tensors", store.size()},
              {"parameters", store.parameter_count()},
              {"crc32", hex32(io::crc32(bytes))}}
             .dump(2)
      << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"block analyzer, inference and evaluation", "hdk"};
  app.require_subcommand(1);
  app.set_version_flag("--version", HDK_VERSION);

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "MACs / CIO / MoC report of a network or block");
  analyze->add_option("--spec", an.spec, "netspec or block spec (path or shipped name)")->required();
  analyze->add_option("--input-size", an.input_size, "square input side");
  analyze->add_option("--channels", an.channels, "block input channels (block specs only)");
  analyze->add_option("--batch", an.batch, "batch size");
  analyze->add_option("--compare", an.compare, "second block spec to compare against");
  analyze->add_option("--format", an.format)->check(CLI::IsMember({"json", "table"}));

  InferArgs in;
  std::uint64_t seed_value = 0;
  auto* infer = app.add_subcommand("infer", "segment every image of a directory");
  infer->add_option("--spec", in.spec, "netspec (path or shipped name)");
  infer->add_option("--weights", in.weights, "weight files, one per fold")->delimiter(',');
  auto* seed_opt = infer->add_option("--seed", seed_value, "seeded weights when no files are given");
  infer->add_option("--input", in.input, "directory of .ppm/.pgm images")->required();
  infer->add_option("--output", in.output, "directory for masks and manifest.json")->required();
  infer->add_option("--tta", in.tta)->check(CLI::IsMember({"none", "h", "v", "hv"}));
  infer->add_option("--compress", in.compress)->check(CLI::IsMember({"tanh", "sigmoid"}));
  infer->add_flag("--no-fill", in.no_fill, "skip hole filling");
  infer->add_option("--size", in.size, "network input side");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Dice of predicted masks against ground truth");
  eval->add_option("--pred", ev.pred)->required();
  eval->add_option("--gt", ev.gt)->required();
  eval->add_option("--format", ev.format)->check(CLI::IsMember({"json", "table"}));

  GradArgs gr;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
  gradcheck->add_option("--seed", gr.seed);
  gradcheck->add_option("--size", gr.size, "map side, at most 32");
  gradcheck->add_option("--flags", gr.flags, "subset of d1,d2,b");
  gradcheck->add_option("--tolerance", gr.tolerance);

  FoldArgs fo;
  auto* split = app.add_subcommand("split-folds", "seeded k-fold assignment of ids");
  split->add_option("--list", fo.list, "file with one id per line")->required();
  split->add_option("--k", fo.k);
  split->add_option("--seed", fo.seed);
  split->add_option("--out", fo.out, "output JSON (stdout when absent)");

  InitArgs ini;
  auto* init = app.add_subcommand("init-weights", "write seeded weights for a netspec");
  init->add_option("--spec", ini.spec);
  init->add_option("--seed", ini.seed);
  init->add_option("--out", ini.out)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*analyze) return cmd_analyze(an, out);
    if (*infer) {
      if (*seed_opt) in.seed = seed_value;
      return cmd_infer(in, out, err);
    }
    if (*eval) return cmd_eval(ev, out, err);
    if (*gradcheck) return cmd_gradcheck(gr, out);
    if (*split) return cmd_split_folds(fo, out);
    if (*init) return cmd_init_weights(ini, out);
  } catch (const ExitWith& e) {
    err << "hdk: " << e.message << "\n";
    return e.code;
  } catch (const Error& e) {
    err << "hdk: " << e.what() << "\n";
    return e.kind() == ErrorKind::kMissing || e.kind() == ErrorKind::kIo ? kMissingArtifact
                                                                         : kConfigError;
  } catch (const std::exception& e) {
    err << "hdk: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace hdk::cli
