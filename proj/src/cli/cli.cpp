#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "falip/errors.hpp"
#include "falip/head_analysis.hpp"
#include "falip/ntf.hpp"
#include "falip/pipelines.hpp"
#include "falip/tokenizer.hpp"

namespace falip::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Semantic usage problems found after parsing (exit 1).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Settings shared by every subcommand. A JSON config file fills in anything
/// not given on the command line.
struct Common {
  std::string config;
  std::string weights;
  bool toy = false;
  std::uint64_t seed = 0;
  float alpha = 0.2f;
  float sigma = 100.0f;
  float eps = 1e-6f;
  std::string form = "a";
  std::string insert_layers;  // empty: last four layers
  int image_side = 0;         // 0: model default
  int patch = 0;
  std::string output;
  std::string trace;
};

/// Per-subcommand hooks that copy config values into unset options.
using Overlay = std::vector<std::function<void(const json&)>>;

std::set<std::string>& known_config_keys() {
  static std::set<std::string> keys;
  return keys;
}

template <class T>
CLI::Option* bind_option(CLI::App* app, Overlay& overlay, const std::string& flags, const std::string& key,
                  T& target, const std::string& help) {
  CLI::Option* opt = app->add_option(flags, target, help);
  known_config_keys().insert(key);
  overlay.push_back([opt, key, &target](const json& j) {
    if (opt->count() == 0 && j.contains(key)) target = j.at(key).get<T>();
  });
  return opt;
}

CLI::Option* bind_flag(CLI::App* app, Overlay& overlay, const std::string& flags,
                       const std::string& key, bool& target, const std::string& help) {
  CLI::Option* opt = app->add_flag(flags, target, help);
  known_config_keys().insert(key);
  overlay.push_back([opt, key, &target](const json& j) {
    if (opt->count() == 0 && j.contains(key)) target = j.at(key).get<bool>();
  });
  return opt;
}

void add_model_options(CLI::App* app, Overlay& ov, Common& c) {
  bind_option(app, ov, "--weights", "weights", c.weights, "Weight directory (falls back to FALIP_WEIGHTS)");
  bind_flag(app, ov, "--toy", "toy", c.toy, "Use seeded toy weights instead of a weight directory");
  bind_option(app, ov, "--image-side", "image_side", c.image_side, "Model input side (toy weights only)");
  bind_option(app, ov, "--patch", "patch", c.patch, "Patch size (toy weights only)");
}

void add_mask_options(CLI::App* app, Overlay& ov, Common& c) {
  bind_option(app, ov, "--alpha", "alpha", c.alpha, "Mask peak value");
  bind_option(app, ov, "--sigma", "sigma", c.sigma, "Gaussian width in patches");
  bind_option(app, ov, "--eps", "eps", c.eps, "Normalization epsilon");
  bind_option(app, ov, "--form", "form", c.form, "Mask form: a, b or c");
  bind_option(app, ov, "--insert-layers", "insert_layers", c.insert_layers,
       "Layers receiving the mask: a-b, a or none (default: last four)");
}

void add_common(CLI::App* app, Overlay& ov, Common& c) {
  app->add_option("--config", c.config, "JSON config file; flags take precedence");
  bind_option(app, ov, "--seed", "seed", c.seed, "Seed for toy weights and negative shuffling");
}

/// Malformed flag values are usage errors, not data errors.
template <class F>
auto flag_value(F&& parse) {
  try {
    return parse();
  } catch (const ArgumentError& e) {
    throw UsageError(e.what());
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
}

MaskParams mask_params(const Common& c) {
  return flag_value([&] {
    MaskParams p;
    p.alpha = c.alpha;
    p.sigma = c.sigma;
    p.eps = c.eps;
    p.form = parse_mask_form(c.form);
    if (!c.insert_layers.empty()) p.insert_layers = parse_layer_range(c.insert_layers);
    return p;
  });
}

/// Toy geometry for the CLI: CLIP-like input handling at a few thousand
/// parameters per layer.
ModelConfig cli_toy_config(const Common& c) {
  ModelConfig cfg;
  cfg.vision.layers = 4;
  cfg.vision.heads = 4;
  cfg.vision.width = 32;
  cfg.vision.patch = c.patch > 0 ? c.patch : 16;
  cfg.vision.image_side = c.image_side > 0 ? c.image_side : 224;
  cfg.vision.embed_dim = 16;
  cfg.text.layers = 2;
  cfg.text.heads = 4;
  cfg.text.width = 32;
  cfg.text.context_length = 32;
  cfg.text.vocab_size = kByteVocab;
  cfg.text.eot_token = kByteEos;
  cfg.text.embed_dim = 16;
  return cfg;
}

ClipModel load_model(const Common& c) {
  if (c.toy) return build_model(make_toy_weights(cli_toy_config(c), c.seed));
  std::string dir = c.weights;
  if (dir.empty()) {
    if (const char* env = std::getenv("FALIP_WEIGHTS")) dir = env;
  }
  if (dir.empty()) throw UsageError("no weights: pass --weights DIR, --toy, or set FALIP_WEIGHTS");
  ClipModel model = build_model(load_weight_set(dir));
  const auto& v = model.config.vision;
  if ((c.image_side > 0 && c.image_side != v.image_side) || (c.patch > 0 && c.patch != v.patch)) {
    throw ArgumentError("--image-side/--patch do not match the weights (" +
                        std::to_string(v.image_side) + "/" + std::to_string(v.patch) + ")");
  }
  return model;
}

bool byte_vocab(const ClipModel& m) {
  return m.config.text.vocab_size == kByteVocab && m.config.text.eot_token == kByteEos;
}

std::vector<int> tokenize_text(const ClipModel& m, const std::string& text) {
  if (!byte_vocab(m)) {
    throw ArgumentError("these weights need pre-tokenized captions (token id lists)");
  }
  return byte_tokenize(text, m.config.text.context_length);
}

std::vector<int> ids_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("token ids must be an array of integers");
  std::vector<int> ids;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw FormatError("token ids must be integers");
    ids.push_back(v.get<int>());
  }
  return ids;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path);
  f << text;
  if (!f) throw FormatError("write failed: " + path);
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path.string() : (base / path).string();
}

std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> rows;
  std::istringstream lines(read_text(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!rows.back().is_object()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected a JSON object");
    }
  }
  return rows;
}

/// One caption per line; a ".ids" file holds whitespace-separated token ids.
std::vector<std::vector<int>> read_caption_file(const ClipModel& m, const std::string& path) {
  const bool ids = fs::path(path).extension() == ".ids";
  std::vector<std::vector<int>> out;
  std::istringstream lines(read_text(path));
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(ids ? parse_token_ids(line) : tokenize_text(m, line));
  }
  return out;
}

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("a box is [x0, y0, x1, y1]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json scores_json(const std::vector<double>& scores) {
  json a = json::array();
  for (double s : scores) {
    if (std::isfinite(s)) a.push_back(s);
    else a.push_back(nullptr);
  }
  return a;
}

/// The double closest to the shortest decimal that round-trips `f`, so JSON
/// shows 0.2 rather than 0.20000000298023224.
double shortest(float f) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, f);
  double d = 0.0;
  std::from_chars(buf, res.ptr, d);
  return d;
}

json floats_json(std::span<const float> values) {
  json a = json::array();
  for (float v : values) a.push_back(shortest(v));
  return a;
}

json tensor_json(const Tensor& t) { return floats_json(t.data()); }

/// Seeded Fisher-Yates; the engine is shared across manifest rows.
template <class T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

std::string sidecar_path(const std::string& output) { return output + ".json"; }

// ---------------------------------------------------------------- subcommands

struct MaskArgs {
  std::string box;
};

int cmd_mask(const Common& c, const MaskArgs& a, std::ostream& out) {
  if (c.output.empty()) throw UsageError("mask: -o is required");
  const int side = c.image_side > 0 ? c.image_side : 224;
  const int patch = c.patch > 0 ? c.patch : 16;
  if (side % patch != 0) throw ArgumentError("mask: --image-side must be a multiple of --patch");
  const MaskParams params = mask_params(c);
  const Box b = flag_value([&] { return parse_box(a.box); });
  const Roa roa = box_to_roa(b, static_cast<std::size_t>(side),
                             static_cast<std::size_t>(patch));
  const FovealMask mask = build_foveal_mask(roa, params);
  write_ntf_file(c.output, "foveal_mask", mask.m);

  std::size_t nonzero = 0;
  for (float v : mask.m.data()) nonzero += v != 0.0f;
  json side_car = {
      {"alpha", shortest(params.alpha)},
      {"sigma", shortest(params.sigma)},
      {"eps", shortest(params.eps)},
      {"form", std::string(1, mask_form_char(params.form))},
      {"insert_layers", params.insert_layers ? json(format_layer_range(*params.insert_layers))
                                             : json(nullptr)},
      {"image_side", side},
      {"patch", patch},
      {"box", {b.x0, b.y0, b.x1, b.y1}},
      {"roa",
       {{"tokens", roa.token_indices},
        {"origin", {roa.origin_row, roa.origin_col}},
        {"grid_h", roa.grid_h},
        {"grid_w", roa.grid_w}}},
      {"shape", mask.m.shape()},
      {"nonzero", nonzero},
  };
  write_text(sidecar_path(c.output), side_car.dump() + "\n", out);
  return kExitOk;
}

struct EncodeArgs {
  std::string image, box, method = "foveal", text, ids;
};

json trace_json(const RunTrace& t) {
  json layers = json::array();
  for (std::size_t l = 0; l < t.layers.size(); ++l) {
    const auto& lt = t.layers[l];
    json heads = json::array();
    for (std::size_t h = 0; h < lt.cls_attention.rows(); ++h) {
      const auto row = lt.cls_attention.row(h);
      heads.push_back(floats_json(row));
    }
    layers.push_back({{"layer", l + 1}, {"biased", lt.biased}, {"cls_attention", heads}});
  }
  return {{"layers", layers}};
}

int cmd_encode(const Common& c, const EncodeArgs& a, std::ostream& out) {
  if (a.image.empty() && a.text.empty() && a.ids.empty()) {
    throw UsageError("encode: give --image and/or --text/--ids");
  }
  if (!a.text.empty() && !a.ids.empty()) throw UsageError("encode: --text and --ids are exclusive");
  if (!c.trace.empty() && a.image.empty()) throw UsageError("encode: --trace needs --image");
  const ClipModel model = load_model(c);
  json result = {{"image_embedding", nullptr}, {"text_embedding", nullptr}};
  if (!a.image.empty()) {
    const Image img = load_ppm_file(a.image);
    std::optional<Box> box;
    if (!a.box.empty()) box = flag_value([&] { return parse_box(a.box); });
    const PromptMethod method = flag_value([&] { return parse_prompt_method(a.method); });
    RunTrace trace;
    const bool want_trace = !c.trace.empty();
    const Tensor v = embed_region(model, img, box, mask_params(c), method, want_trace ? &trace : nullptr);
    result["image_embedding"] = tensor_json(v);
    if (want_trace) write_text(c.trace, trace_json(trace).dump() + "\n", out);
  }
  if (!a.text.empty() || !a.ids.empty()) {
    const auto ids = a.ids.empty() ? tokenize_text(model, a.text) : parse_token_ids(a.ids);
    result["text_embedding"] = tensor_json(text_forward(model, ids));
  }
  write_text(c.output, result.dump() + "\n", out);
  return kExitOk;
}

struct RecArgs {
  std::string manifest, method = "foveal";
  int neg_count = -1;
};

int cmd_rec(const Common& c, const RecArgs& a, std::ostream& out) {
  const ClipModel model = load_model(c);
  const MaskParams params = mask_params(c);
  const PromptMethod method = flag_value([&] { return parse_prompt_method(a.method); });
  const fs::path base = fs::path(a.manifest).parent_path();
  std::mt19937_64 rng(c.seed);
  std::string text;
  for (const json& row : read_jsonl(a.manifest)) {
    RecRequest req;
    req.image = load_ppm_file(resolve(base, row.at("image").get<std::string>()));
    for (const auto& b : row.at("boxes")) req.boxes.push_back(box_from_json(b));
    if (row.contains("caption_ids")) req.caption = ids_from_json(row.at("caption_ids"));
    else req.caption = tokenize_text(model, row.at("caption").get<std::string>());
    if (row.contains("negatives_file") && a.neg_count != 0) {
      auto negs = read_caption_file(model, resolve(base, row.at("negatives_file").get<std::string>()));
      if (a.neg_count > 0) {
        if (static_cast<std::size_t>(a.neg_count) > negs.size()) {
          throw ArgumentError("rec: --neg-count exceeds the negatives available");
        }
        seeded_shuffle(negs, rng);
        negs.resize(static_cast<std::size_t>(a.neg_count));
      }
      req.negatives = std::move(negs);
    }
    req.params = params;
    req.method = method;
    const RecResult r = rec_predict(model, req);
    text += json{{"index", r.index}, {"scores", scores_json(r.scores)}}.dump() + "\n";
  }
  write_text(c.output, text, out);
  return kExitOk;
}

struct ClassifyArgs {
  std::string manifest, method = "foveal";
  std::optional<double> logit_scale;
};

std::vector<std::vector<int>> classes_from_row(const ClipModel& m, const json& row) {
  std::vector<std::vector<int>> out;
  if (row.contains("class_ids")) {
    for (const auto& ids : row.at("class_ids")) out.push_back(ids_from_json(ids));
  } else {
    for (const auto& s : row.at("classes")) out.push_back(tokenize_text(m, s.get<std::string>()));
  }
  return out;
}

int cmd_classify(const Common& c, const ClassifyArgs& a, std::ostream& out) {
  const ClipModel model = load_model(c);
  const fs::path base = fs::path(a.manifest).parent_path();
  std::string text;
  for (const json& row : read_jsonl(a.manifest)) {
    ClassifyRequest req;
    req.image = load_ppm_file(resolve(base, row.at("image").get<std::string>()));
    if (row.contains("box") && !row.at("box").is_null()) req.box = box_from_json(row.at("box"));
    req.classes = classes_from_row(model, row);
    req.params = mask_params(c);
    req.logit_scale = static_cast<float>(a.logit_scale.value_or(model.config.logit_scale));
    req.method = flag_value([&] { return parse_prompt_method(a.method); });
    const ClassifyResult r = classify(model, req);
    text += json{{"index", r.index},
                 {"scores", scores_json(r.scores)},
                 {"probabilities", r.probabilities}}
                .dump() +
            "\n";
  }
  write_text(c.output, text, out);
  return kExitOk;
}

struct PointCloudArgs {
  std::string cloud, classes, classes_file, beta, views_out;
  bool no_mask = false;
  std::optional<double> logit_scale;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

int cmd_pointcloud(const Common& c, const PointCloudArgs& a, std::ostream& out) {
  if (a.classes.empty() == a.classes_file.empty()) {
    throw UsageError("pointcloud: give exactly one of --classes and --classes-file");
  }
  const ClipModel model = load_model(c);
  PointCloudRequest req;
  req.points = load_xyz_file(a.cloud);
  if (!a.classes.empty()) {
    for (const auto& name : split(a.classes, ',')) req.classes.push_back(tokenize_text(model, name));
  } else {
    req.classes = read_caption_file(model, a.classes_file);
  }
  if (!a.beta.empty()) {
    const auto parts = split(a.beta, ',');
    if (parts.size() != 6) throw UsageError("--beta needs six comma-separated weights");
    for (std::size_t i = 0; i < 6; ++i) {
      std::size_t used = 0;
      float v = 0;
      try {
        v = std::stof(parts[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != parts[i].size()) throw UsageError("--beta: bad weight '" + parts[i] + "'");
      req.beta[i] = v;
    }
  }
  req.params = mask_params(c);
  req.use_mask = !a.no_mask;
  req.logit_scale = static_cast<float>(a.logit_scale.value_or(model.config.logit_scale));
  const PointCloudResult r = pointcloud_recognize(model, req);

  if (!a.views_out.empty()) {
    fs::create_directories(a.views_out);
    const auto& v = model.config.vision;
    const auto views = project_views(req.points, static_cast<std::size_t>(v.grid_side()));
    for (std::size_t i = 0; i < views.size(); ++i) {
      std::string name = view_axis_name(views[i].axis);
      name = (name[0] == '+' ? "pos_" : "neg_") + name.substr(1);
      write_ppm_file((fs::path(a.views_out) / ("view_" + name + ".ppm")).string(),
                     depth_to_image(views[i].depth, static_cast<std::size_t>(v.image_side)));
    }
  }
  const json line = {{"index", r.index},
                     {"scores", scores_json(r.scores)},
                     {"probabilities", r.probabilities}};
  write_text(c.output, line.dump() + "\n", out);
  return kExitOk;
}

struct RegionArgs {
  std::string image, box, prompt = "circle", layers;
  bool exact = false;
  float gain = 1.0f;
};

PromptMethod traced_prompt(const std::string& name) {
  const PromptMethod m = parse_prompt_method(name);
  if (m == PromptMethod::None || m == PromptMethod::FeatureMask) {
    throw ArgumentError("--prompt must be foveal, circle, blur or circle+blur");
  }
  return m;
}

struct TracePair {
  RunTrace prompted, plain;
};

TracePair trace_pair(const ClipModel& model, const Common& c, const RegionArgs& a) {
  const Image img = load_ppm_file(a.image);
  const Box box = flag_value([&] { return parse_box(a.box); });
  const PromptMethod method = flag_value([&] { return traced_prompt(a.prompt); });
  TracePair p;
  embed_region(model, img, box, mask_params(c), method, &p.prompted);
  embed_region(model, img, std::nullopt, mask_params(c), PromptMethod::None, &p.plain);
  return p;
}

int cmd_decompose(const Common& c, const RegionArgs& a, std::ostream& out) {
  const ClipModel model = load_model(c);
  const TracePair p = trace_pair(model, c, a);
  write_text(c.output, delta_report_csv(delta_report(p.prompted, p.plain, model.vision)), out);
  return kExitOk;
}

int cmd_unleash(const Common& c, const RegionArgs& a, std::ostream& out) {
  if (c.output.empty()) throw UsageError("unleash: -o is required");
  const ClipModel model = load_model(c);
  const TracePair p = trace_pair(model, c, a);
  UnleashOptions opts = default_unleash_options(model.config.vision);
  if (!a.layers.empty()) opts.layers = flag_value([&] { return parse_layer_range(a.layers); });
  opts.mode = a.exact ? UnleashMode::Exact : UnleashMode::ClsStream;
  opts.gain = a.gain;
  const Tensor v = unleash(model.vision, p.prompted, p.plain, opts);
  write_ntf_file(c.output, "unleashed_embedding", v);
  const json side_car = {
      {"prompt", a.prompt},
      {"layers", format_layer_range(opts.layers)},
      {"mode", a.exact ? "exact" : "cls-stream"},
      {"gain", shortest(opts.gain)},
      {"embedding", tensor_json(v)},
      {"prompted_embedding", tensor_json(p.prompted.embedding)},
      {"plain_embedding", tensor_json(p.plain.embedding)},
      {"cosine_to_prompted", dot(v.data(), p.prompted.embedding.data())},
  };
  write_text(sidecar_path(c.output), side_car.dump() + "\n", out);
  return kExitOk;
}

int cmd_toy_weights(const Common& c, const std::string& dir) {
  save_weight_set(dir, make_toy_weights(cli_toy_config(c), c.seed));
  return kExitOk;
}

void apply_config(const Common& c, const Overlay& overlay) {
  if (c.config.empty()) return;
  json j;
  try {
    j = json::parse(read_text(c.config));
  } catch (const json::parse_error& e) {
    throw UsageError("config " + c.config + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + c.config + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_config_keys().contains(key)) throw UsageError("config: unknown key '" + key + "'");
  }
  try {
    for (const auto& hook : overlay) hook(j);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Foveal attention masks for CLIP-style encoders", "falip"};
  app.require_subcommand(1);

  Common common;
  std::map<CLI::App*, Overlay> overlays;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    add_common(s, overlays[s], common);
    return s;
  };

  MaskArgs mask_args;
  CLI::App* mask = sub("mask", "Write a foveal mask as NTF plus a JSON sidecar");
  mask->add_option("--box", mask_args.box, "x0,y0,x1,y1 in model-input pixels")->required();
  bind_option(mask, overlays[mask], "--image-side", "image_side", common.image_side, "Input side (default 224)");
  bind_option(mask, overlays[mask], "--patch", "patch", common.patch, "Patch size (default 16)");
  add_mask_options(mask, overlays[mask], common);
  bind_option(mask, overlays[mask], "-o,--output", "output", common.output, "Output NTF path");

  EncodeArgs enc_args;
  CLI::App* encode = sub("encode", "Embed an image (optionally with a region) and/or a caption");
  add_model_options(encode, overlays[encode], common);
  add_mask_options(encode, overlays[encode], common);
  encode->add_option("--image", enc_args.image, "PPM image");
  encode->add_option("--box", enc_args.box, "Region x0,y0,x1,y1 in image pixels");
  bind_option(encode, overlays[encode], "--method", "method", enc_args.method,
       "none, foveal, feature, circle, blur or circle+blur");
  encode->add_option("--text", enc_args.text, "Caption (byte-vocabulary models)");
  encode->add_option("--ids", enc_args.ids, "Whitespace-separated token ids");
  bind_option(encode, overlays[encode], "--trace", "trace", common.trace, "Write per-layer CLS attention JSON");
  bind_option(encode, overlays[encode], "-o,--output", "output", common.output, "Output JSON (default stdout)");

  RecArgs rec_args;
  CLI::App* rec = sub("rec", "Referring-expression comprehension over a JSONL manifest");
  add_model_options(rec, overlays[rec], common);
  add_mask_options(rec, overlays[rec], common);
  rec->add_option("--manifest", rec_args.manifest, "JSONL manifest")->required();
  bind_option(rec, overlays[rec], "--method", "method", rec_args.method, "Region prompt method");
  bind_option(rec, overlays[rec], "--neg-count", "neg_count", rec_args.neg_count,
       "Negatives per row after a seeded shuffle (default: all, 0: none)");
  bind_option(rec, overlays[rec], "-o,--output", "output", common.output, "Predictions JSONL (default stdout)");

  ClassifyArgs cls_args;
  CLI::App* cls = sub("classify", "Zero-shot classification of (optionally masked) images");
  add_model_options(cls, overlays[cls], common);
  add_mask_options(cls, overlays[cls], common);
  cls->add_option("--manifest", cls_args.manifest, "JSONL manifest")->required();
  bind_option(cls, overlays[cls], "--method", "method", cls_args.method, "Region prompt method");
  cls->add_option("--logit-scale", cls_args.logit_scale, "Softmax temperature (default: model)");
  bind_option(cls, overlays[cls], "-o,--output", "output", common.output, "Predictions JSONL (default stdout)");

  PointCloudArgs pc_args;
  CLI::App* pc = sub("pointcloud", "Zero-shot point-cloud recognition from six depth views");
  add_model_options(pc, overlays[pc], common);
  add_mask_options(pc, overlays[pc], common);
  pc->add_option("--cloud", pc_args.cloud, "XYZ text file")->required();
  pc->add_option("--classes", pc_args.classes, "Comma-separated class texts");
  pc->add_option("--classes-file", pc_args.classes_file, "One class per line (.ids: token ids)");
  pc->add_option("--beta", pc_args.beta, "Six comma-separated view weights");
  pc->add_flag("--no-mask", pc_args.no_mask, "Run the views without foreground masks");
  pc->add_option("--logit-scale", pc_args.logit_scale, "Softmax temperature (default: model)");
  pc->add_option("--views-out", pc_args.views_out, "Directory for the rendered depth views (PPM)");
  bind_option(pc, overlays[pc], "-o,--output", "output", common.output, "Prediction JSONL (default stdout)");

  RegionArgs dec_args;
  CLI::App* dec = sub("decompose", "Per-head CLS deltas between a prompted and a plain run (CSV)");
  RegionArgs unl_args;
  CLI::App* unl = sub("unleash", "Amplify per-head prompt deltas; writes NTF plus JSON");
  for (auto [s, ra] : {std::pair{dec, &dec_args}, std::pair{unl, &unl_args}}) {
    add_model_options(s, overlays[s], common);
    add_mask_options(s, overlays[s], common);
    s->add_option("--image", ra->image, "PPM image")->required();
    s->add_option("--box", ra->box, "Region x0,y0,x1,y1 in image pixels")->required();
    bind_option(s, overlays[s], "--prompt", "prompt", ra->prompt, "foveal, circle, blur or circle+blur");
    bind_option(s, overlays[s], "-o,--output", "output", common.output, "Output path");
  }
  bind_option(unl, overlays[unl], "--layers", "layers", unl_args.layers, "Unleash layers (default: last four)");
  bind_flag(unl, overlays[unl], "--exact", "exact", unl_args.exact, "Recompute every token, not only CLS");
  bind_option(unl, overlays[unl], "--gain", "gain", unl_args.gain, "Delta multiplier (default 1)");

  CLI::App* self = app.add_subcommand("selftest", "Run the toy-fixture oracle checks");

  std::string toy_dir;
  CLI::App* toy = sub("toy-weights", "Write seeded toy weights in the manifest format");
  toy->add_option("--out", toy_dir, "Output directory")->required();
  bind_option(toy, overlays[toy], "--image-side", "image_side", common.image_side, "Input side (default 224)");
  bind_option(toy, overlays[toy], "--patch", "patch", common.patch, "Patch size (default 16)");

  std::vector<std::string> argv_store{"falip"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (self->parsed()) return selftest(out) ? kExitOk : kExitData;
    for (auto& [s, overlay] : overlays) {
      if (s->parsed()) apply_config(common, overlay);
    }
    if (mask->parsed()) return cmd_mask(common, mask_args, out);
    if (encode->parsed()) return cmd_encode(common, enc_args, out);
    if (rec->parsed()) return cmd_rec(common, rec_args, out);
    if (cls->parsed()) return cmd_classify(common, cls_args, out);
    if (pc->parsed()) return cmd_pointcloud(common, pc_args, out);
    if (dec->parsed()) return cmd_decompose(common, dec_args, out);
    if (unl->parsed()) return cmd_unleash(common, unl_args, out);
    if (toy->parsed()) return cmd_toy_weights(common, toy_dir);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace falip::cli
