#include "falip/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "falip/errors.hpp"
#include "falip/ntf.hpp"

namespace falip {

namespace fs = std::filesystem;
using nlohmann::json;

Activation parse_activation(const std::string& text) {
  if (text == "gelu") return Activation::Gelu;
  if (text == "quick_gelu") return Activation::QuickGelu;
  throw ArgumentError("activation must be gelu or quick_gelu, got '" + text + "'");
}

std::string activation_name(Activation act) {
  return act == Activation::Gelu ? "gelu" : "quick_gelu";
}

void VisionConfig::validate() const {
  if (layers < 1 || heads < 1 || width < 1 || patch < 1 || image_side < 1 || embed_dim < 1 ||
      mlp_ratio < 1) {
    throw WeightError("vision config: all sizes must be positive");
  }
  if (width % heads != 0) throw WeightError("vision config: width not divisible by heads");
  if (image_side % patch != 0) throw WeightError("vision config: image_side not divisible by patch");
}

void TextConfig::validate() const {
  if (layers < 1 || heads < 1 || width < 1 || context_length < 1 || vocab_size < 1 ||
      embed_dim < 1 || mlp_ratio < 1) {
    throw WeightError("text config: all sizes must be positive");
  }
  if (width % heads != 0) throw WeightError("text config: width not divisible by heads");
}

json config_to_json(const ModelConfig& cfg) {
  const auto& v = cfg.vision;
  const auto& t = cfg.text;
  return json{
      {"vision",
       {{"layers", v.layers}, {"heads", v.heads}, {"width", v.width}, {"patch", v.patch},
        {"image_side", v.image_side}, {"embed_dim", v.embed_dim}, {"mlp_ratio", v.mlp_ratio},
        {"activation", activation_name(v.activation)}, {"ln_eps", v.ln_eps}}},
      {"text",
       {{"layers", t.layers}, {"heads", t.heads}, {"width", t.width},
        {"context_length", t.context_length}, {"vocab_size", t.vocab_size},
        {"eot_token", t.eot_token}, {"embed_dim", t.embed_dim}, {"mlp_ratio", t.mlp_ratio},
        {"activation", activation_name(t.activation)}, {"ln_eps", t.ln_eps}}},
      {"logit_scale", cfg.logit_scale}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  try {
    if (j.contains("vision")) {
      const auto& v = j.at("vision");
      auto& o = cfg.vision;
      o.layers = v.value("layers", o.layers);
      o.heads = v.value("heads", o.heads);
      o.width = v.value("width", o.width);
      o.patch = v.value("patch", o.patch);
      o.image_side = v.value("image_side", o.image_side);
      o.embed_dim = v.value("embed_dim", o.embed_dim);
      o.mlp_ratio = v.value("mlp_ratio", o.mlp_ratio);
      o.activation = parse_activation(v.value("activation", activation_name(o.activation)));
      o.ln_eps = v.value("ln_eps", o.ln_eps);
    }
    if (j.contains("text")) {
      const auto& t = j.at("text");
      auto& o = cfg.text;
      o.layers = t.value("layers", o.layers);
      o.heads = t.value("heads", o.heads);
      o.width = t.value("width", o.width);
      o.context_length = t.value("context_length", o.context_length);
      o.vocab_size = t.value("vocab_size", o.vocab_size);
      o.eot_token = t.value("eot_token", o.eot_token);
      o.embed_dim = t.value("embed_dim", o.embed_dim);
      o.mlp_ratio = t.value("mlp_ratio", o.mlp_ratio);
      o.activation = parse_activation(t.value("activation", activation_name(o.activation)));
      o.ln_eps = t.value("ln_eps", o.ln_eps);
    }
    cfg.logit_scale = j.value("logit_scale", cfg.logit_scale);
  } catch (const json::exception& e) {
    throw WeightError(std::string("model config: ") + e.what());
  } catch (const ArgumentError& e) {
    throw WeightError(std::string("model config: ") + e.what());
  }
  cfg.vision.validate();
  cfg.text.validate();
  return cfg;
}

ModelConfig toy_config() {
  ModelConfig cfg;
  auto& v = cfg.vision;
  v.layers = 2;
  v.heads = 2;
  v.width = 8;
  v.patch = 4;
  v.image_side = 8;
  v.embed_dim = 8;
  v.activation = Activation::Gelu;
  auto& t = cfg.text;
  t.layers = 2;
  t.heads = 2;
  t.width = 8;
  t.context_length = 16;
  t.vocab_size = 259;
  t.eot_token = 257;
  t.embed_dim = 8;
  t.activation = Activation::Gelu;
  return cfg;
}

// ---------------------------------------------------------------- naming

namespace {

std::string layer_prefix(const std::string& tower, int l) {
  return tower + "layers." + std::to_string(l) + ".";
}

void append_block(std::vector<std::pair<std::string, Shape>>& out, const std::string& p,
                  std::size_t d, std::size_t hidden) {
  out.push_back({p + "ln1.gain", {d}});
  out.push_back({p + "ln1.bias", {d}});
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    out.push_back({p + "attn." + w + ".weight", {d, d}});
    out.push_back({p + "attn." + w + ".bias", {d}});
  }
  out.push_back({p + "ln2.gain", {d}});
  out.push_back({p + "ln2.bias", {d}});
  out.push_back({p + "mlp.fc1.weight", {d, hidden}});
  out.push_back({p + "mlp.fc1.bias", {hidden}});
  out.push_back({p + "mlp.fc2.weight", {hidden, d}});
  out.push_back({p + "mlp.fc2.bias", {d}});
}

class Lookup {
 public:
  explicit Lookup(const WeightSet& ws) : ws_(ws) {}

  Tensor get(const std::string& name, const Shape& shape) const {
    auto it = ws_.tensors.find(name);
    if (it == ws_.tensors.end()) throw WeightError("weights: missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw WeightError("weights: tensor '" + name + "' has shape " +
                        shape_str(it->second.shape()) + ", expected " + shape_str(shape));
    }
    require_finite(it->second, name.c_str());
    return it->second;
  }

  BlockWeights block(const std::string& p, std::size_t d, std::size_t hidden) const {
    BlockWeights b;
    b.ln1_gain = get(p + "ln1.gain", {d});
    b.ln1_bias = get(p + "ln1.bias", {d});
    b.wq = get(p + "attn.wq.weight", {d, d});
    b.bq = get(p + "attn.wq.bias", {d});
    b.wk = get(p + "attn.wk.weight", {d, d});
    b.bk = get(p + "attn.wk.bias", {d});
    b.wv = get(p + "attn.wv.weight", {d, d});
    b.bv = get(p + "attn.wv.bias", {d});
    b.wo = get(p + "attn.wo.weight", {d, d});
    b.bo = get(p + "attn.wo.bias", {d});
    b.ln2_gain = get(p + "ln2.gain", {d});
    b.ln2_bias = get(p + "ln2.bias", {d});
    b.fc1_w = get(p + "mlp.fc1.weight", {d, hidden});
    b.fc1_b = get(p + "mlp.fc1.bias", {hidden});
    b.fc2_w = get(p + "mlp.fc2.weight", {hidden, d});
    b.fc2_b = get(p + "mlp.fc2.bias", {d});
    return b;
  }

 private:
  const WeightSet& ws_;
};

void put_block(std::map<std::string, Tensor>& out, const std::string& p, const BlockWeights& b) {
  out[p + "ln1.gain"] = b.ln1_gain;
  out[p + "ln1.bias"] = b.ln1_bias;
  out[p + "attn.wq.weight"] = b.wq;
  out[p + "attn.wq.bias"] = b.bq;
  out[p + "attn.wk.weight"] = b.wk;
  out[p + "attn.wk.bias"] = b.bk;
  out[p + "attn.wv.weight"] = b.wv;
  out[p + "attn.wv.bias"] = b.bv;
  out[p + "attn.wo.weight"] = b.wo;
  out[p + "attn.wo.bias"] = b.bo;
  out[p + "ln2.gain"] = b.ln2_gain;
  out[p + "ln2.bias"] = b.ln2_bias;
  out[p + "mlp.fc1.weight"] = b.fc1_w;
  out[p + "mlp.fc1.bias"] = b.fc1_b;
  out[p + "mlp.fc2.weight"] = b.fc2_w;
  out[p + "mlp.fc2.bias"] = b.fc2_b;
}

}  // namespace

std::vector<std::pair<std::string, Shape>> required_tensors(const ModelConfig& cfg) {
  cfg.vision.validate();
  cfg.text.validate();
  std::vector<std::pair<std::string, Shape>> out;
  const auto& v = cfg.vision;
  const auto vd = static_cast<std::size_t>(v.width);
  const auto vp = static_cast<std::size_t>(v.patch);
  out.push_back({"patch_embed.weight", {3 * vp * vp, vd}});
  out.push_back({"cls_token", {vd}});
  out.push_back({"pos_embed", {static_cast<std::size_t>(v.n_tokens()) + 1, vd}});
  out.push_back({"ln_pre.gain", {vd}});
  out.push_back({"ln_pre.bias", {vd}});
  for (int l = 0; l < v.layers; ++l) {
    append_block(out, layer_prefix("", l), vd, vd * static_cast<std::size_t>(v.mlp_ratio));
  }
  out.push_back({"ln_post.gain", {vd}});
  out.push_back({"ln_post.bias", {vd}});
  out.push_back({"proj", {vd, static_cast<std::size_t>(v.embed_dim)}});

  const auto& t = cfg.text;
  const auto td = static_cast<std::size_t>(t.width);
  out.push_back({"text.token_embed", {static_cast<std::size_t>(t.vocab_size), td}});
  out.push_back({"text.pos_embed", {static_cast<std::size_t>(t.context_length), td}});
  for (int l = 0; l < t.layers; ++l) {
    append_block(out, layer_prefix("text.", l), td, td * static_cast<std::size_t>(t.mlp_ratio));
  }
  out.push_back({"text.ln_final.gain", {td}});
  out.push_back({"text.ln_final.bias", {td}});
  out.push_back({"text.proj", {td, static_cast<std::size_t>(t.embed_dim)}});
  return out;
}

ClipModel build_model(const WeightSet& ws) {
  const ModelConfig& cfg = ws.config;
  cfg.vision.validate();
  cfg.text.validate();
  if (cfg.vision.embed_dim != cfg.text.embed_dim) {
    throw WeightError("model config: vision and text embed_dim differ");
  }
  Lookup lk(ws);
  ClipModel m;
  m.config = cfg;

  const auto& v = cfg.vision;
  const auto vd = static_cast<std::size_t>(v.width);
  const auto vp = static_cast<std::size_t>(v.patch);
  m.vision.patch_embed = lk.get("patch_embed.weight", {3 * vp * vp, vd});
  m.vision.cls_token = lk.get("cls_token", {vd});
  m.vision.pos_embed = lk.get("pos_embed", {static_cast<std::size_t>(v.n_tokens()) + 1, vd});
  m.vision.ln_pre_gain = lk.get("ln_pre.gain", {vd});
  m.vision.ln_pre_bias = lk.get("ln_pre.bias", {vd});
  for (int l = 0; l < v.layers; ++l) {
    m.vision.blocks.push_back(
        lk.block(layer_prefix("", l), vd, vd * static_cast<std::size_t>(v.mlp_ratio)));
  }
  m.vision.ln_post_gain = lk.get("ln_post.gain", {vd});
  m.vision.ln_post_bias = lk.get("ln_post.bias", {vd});
  m.vision.proj = lk.get("proj", {vd, static_cast<std::size_t>(v.embed_dim)});

  const auto& t = cfg.text;
  const auto td = static_cast<std::size_t>(t.width);
  m.text.token_embed = lk.get("text.token_embed", {static_cast<std::size_t>(t.vocab_size), td});
  m.text.pos_embed = lk.get("text.pos_embed", {static_cast<std::size_t>(t.context_length), td});
  for (int l = 0; l < t.layers; ++l) {
    m.text.blocks.push_back(
        lk.block(layer_prefix("text.", l), td, td * static_cast<std::size_t>(t.mlp_ratio)));
  }
  m.text.ln_final_gain = lk.get("text.ln_final.gain", {td});
  m.text.ln_final_bias = lk.get("text.ln_final.bias", {td});
  m.text.proj = lk.get("text.proj", {td, static_cast<std::size_t>(t.embed_dim)});
  return m;
}

WeightSet flatten_model(const ClipModel& model) {
  WeightSet ws;
  ws.config = model.config;
  auto& out = ws.tensors;
  const auto& v = model.vision;
  out["patch_embed.weight"] = v.patch_embed;
  out["cls_token"] = v.cls_token;
  out["pos_embed"] = v.pos_embed;
  out["ln_pre.gain"] = v.ln_pre_gain;
  out["ln_pre.bias"] = v.ln_pre_bias;
  for (std::size_t l = 0; l < v.blocks.size(); ++l) {
    put_block(out, layer_prefix("", static_cast<int>(l)), v.blocks[l]);
  }
  out["ln_post.gain"] = v.ln_post_gain;
  out["ln_post.bias"] = v.ln_post_bias;
  out["proj"] = v.proj;
  const auto& t = model.text;
  out["text.token_embed"] = t.token_embed;
  out["text.pos_embed"] = t.pos_embed;
  for (std::size_t l = 0; l < t.blocks.size(); ++l) {
    put_block(out, layer_prefix("text.", static_cast<int>(l)), t.blocks[l]);
  }
  out["text.ln_final.gain"] = t.ln_final_gain;
  out["text.ln_final.bias"] = t.ln_final_bias;
  out["text.proj"] = t.proj;
  return ws;
}

// ---------------------------------------------------------------- files

WeightSet load_weight_set(const std::string& dir) {
  const fs::path root(dir);
  const fs::path manifest = root / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw WeightError("weights: cannot open " + manifest.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw WeightError("weights: manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("tensors") || !j["tensors"].is_array()) {
    throw WeightError("weights: manifest needs a 'tensors' array");
  }
  WeightSet ws;
  ws.config = config_from_json(j.value("config", json::object()));
  for (const auto& entry : j["tensors"]) {
    if (!entry.is_object() || !entry.contains("name") || !entry.contains("file")) {
      throw WeightError("weights: manifest entries need 'name' and 'file'");
    }
    const auto name = entry["name"].get<std::string>();
    const auto file = (root / entry["file"].get<std::string>()).string();
    NamedTensor nt;
    try {
      nt = read_ntf_file(file);
    } catch (const FormatError& e) {
      throw WeightError("weights: " + name + ": " + e.what());
    }
    ws.tensors[name] = std::move(nt.tensor);
  }
  return ws;
}

void save_weight_set(const std::string& dir, const WeightSet& ws) {
  const fs::path root(dir);
  fs::create_directories(root);
  json entries = json::array();
  for (const auto& [name, tensor] : ws.tensors) {
    const std::string file = name + ".ntf";
    write_ntf_file((root / file).string(), name, tensor);
    entries.push_back({{"name", name}, {"file", file}});
  }
  json manifest{{"config", config_to_json(ws.config)}, {"tensors", entries}};
  std::ofstream out(root / "manifest.json");
  if (!out) throw WeightError("weights: cannot write manifest in " + dir);
  out << manifest.dump(2) << '\n';
}

WeightSet make_toy_weights(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Distribution objects are implementation-defined; map raw engine output
  // ourselves so the weights are identical across standard libraries.
  auto uniform = [&rng](float lo, float hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return static_cast<float>(lo + (hi - lo) * u);
  };
  WeightSet ws;
  ws.config = cfg;
  for (const auto& [name, shape] : required_tensors(cfg)) {
    Tensor t(shape);
    const auto ends_with = [&name](const char* suffix) {
      const std::string s(suffix);
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    float lo = -0.5f, hi = 0.5f;
    if (ends_with(".gain")) {
      lo = 0.8f;
      hi = 1.2f;
    } else if (ends_with(".weight") || ends_with("proj")) {
      const float s = 1.0f / std::sqrt(static_cast<float>(shape[0]));
      lo = -s;
      hi = s;
    } else if (ends_with(".bias")) {
      lo = -0.1f;
      hi = 0.1f;
    }
    for (auto& v : t.data()) v = uniform(lo, hi);
    ws.tensors.emplace(name, std::move(t));
  }
  return ws;
}

}  // namespace falip
