#include <cmath>
#include <functional>
#include <ostream>
#include <string>

#include "cli.hpp"
#include "falip/head_analysis.hpp"
#include "falip/ntf.hpp"
#include "falip/pipelines.hpp"
#include "fixtures.hpp"
#include "reference.hpp"

namespace falip::cli {

namespace {

constexpr std::uint64_t kSeed = 7;

Tensor toy_pixels(const ClipModel& m) {
  const auto side = static_cast<std::size_t>(m.config.vision.image_side);
  return preprocess(fixtures::random_image(kSeed, side, side), side);
}

reference::Vec vec(const Tensor& t) { return reference::to_vec(t); }

bool mask_goldens() {
  const Tensor g = gaussian_grid(3, 3, 1.0f);
  const double corner = std::exp(-1.0), edge = std::exp(-0.5);
  const double expect[9] = {corner, edge, corner, edge, 1.0, edge, corner, edge, corner};
  for (std::size_t i = 0; i < 9; ++i)
    if (std::abs(g[i] - expect[i]) > 1e-5) return false;
  const Tensor n = normalize_grid(Tensor({2, 2}, {0.3f, 0.3f, 0.3f, 0.3f}), 0.2f, 1e-6f);
  for (float v : n.data())
    if (v != 0.2f) return false;
  return true;
}

bool zero_bias_noop() {
  const ClipModel m = fixtures::toy_model(kSeed);
  MaskParams p;
  p.alpha = 0.0f;
  const FovealMask mask = build_foveal_mask(make_roa(2, {0, 1}), p);
  ImageForwardOptions opts;
  opts.mask = &mask;
  const Tensor px = toy_pixels(m);
  return bit_identical(image_forward(m, px, opts).embedding, image_forward(m, px).embedding);
}

bool image_oracle() {
  const ClipModel m = fixtures::toy_model(kSeed);
  const Tensor px = toy_pixels(m);
  if (reference::relative_error(vec(image_forward(m, px).embedding), reference::image_embedding(m, px)) >
      1e-6)
    return false;
  const FovealMask mask = build_foveal_mask(make_roa(2, {0, 1, 3}), MaskParams{});
  ImageForwardOptions opts;
  opts.mask = &mask;
  const LayerRange layers = mask.params.resolve_layers(m.config.vision.layers);
  const reference::BiasSpec spec{reference::to_mat(mask.m), layers.first, layers.last};
  return reference::relative_error(vec(image_forward(m, px, opts).embedding),
                                   reference::image_embedding(m, px, spec)) <= 1e-6;
}

bool text_oracle() {
  const ClipModel m = fixtures::toy_model(kSeed);
  const auto ids = fixtures::random_caption(kSeed, m.config.text.context_length);
  return reference::relative_error(vec(text_forward(m, ids)), reference::text_embedding(m, ids)) <= 1e-6;
}

bool decomposition() {
  const ClipModel m = fixtures::toy_model(kSeed);
  ImageForwardOptions opts;
  opts.record_trace = true;
  const auto trace = *image_forward(m, toy_pixels(m), opts).trace;
  for (int l = 1; l <= m.config.vision.layers; ++l) {
    const Tensor sum = sum_heads(decompose(trace, m.vision, l));
    const auto msa = trace.layers[static_cast<std::size_t>(l - 1)].msa_output.row(0);
    for (std::size_t j = 0; j < msa.size(); ++j)
      if (std::abs(sum[j] - msa[j]) > 1e-5) return false;
  }
  return true;
}

bool identity_unleash() {
  const ClipModel m = fixtures::toy_model(kSeed);
  const FovealMask mask = build_foveal_mask(make_roa(2, {2}), MaskParams{});
  ImageForwardOptions opts;
  opts.mask = &mask;
  opts.record_trace = true;
  const auto prompted = *image_forward(m, toy_pixels(m), opts).trace;
  const Tensor v = unleash(m.vision, prompted, prompted, default_unleash_options(m.config.vision));
  return reference::relative_error(vec(v), vec(prompted.embedding)) <= 1e-6;
}

bool softmax_rows_normalized() {
  const Tensor x = fixtures::random_tensor(kSeed, {64, 37}, -20.0f, 20.0f);
  const Tensor p = softmax_rows(x);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0;
    for (float v : p.row(r)) s += v;
    if (std::abs(s - 1.0) > 1e-6) return false;
  }
  return true;
}

bool ntf_round_trip() {
  const Tensor t = fixtures::random_tensor(kSeed, {3, 5, 2});
  const auto back = read_ntf(write_ntf("x", t));
  return back.name == "x" && bit_identical(back.tensor, t);
}

bool depth_view_oracle() {
  std::vector<Point3> cube;
  for (int i = 0; i < 8; ++i)
    cube.push_back({static_cast<float>(i & 1), static_cast<float>((i >> 1) & 1),
                    static_cast<float>((i >> 2) & 1)});
  const auto views = project_views(cube, 14);
  const auto oracle = reference::depth_views(cube, 14);
  for (std::size_t v = 0; v < 6; ++v)
    for (std::size_t r = 0; r < 14; ++r)
      for (std::size_t c = 0; c < 14; ++c)
        if (static_cast<double>(views[v].depth(r, c)) != oracle[v][r][c]) return false;
  return true;
}

}  // namespace

bool selftest(std::ostream& out) {
  const std::pair<const char*, std::function<bool()>> checks[] = {
      {"mask goldens", mask_goldens},
      {"zero-bias no-op", zero_bias_noop},
      {"image encoder vs naive oracle", image_oracle},
      {"text encoder vs naive oracle", text_oracle},
      {"head decomposition reconstruction", decomposition},
      {"identity unleash", identity_unleash},
      {"softmax rows sum to one", softmax_rows_normalized},
      {"NTF round trip", ntf_round_trip},
      {"cube depth views vs oracle", depth_view_oracle},
  };
  bool all = true;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      out << "ERROR " << name << ": " << e.what() << "\n";
    }
    out << (ok ? "PASS " : "FAIL ") << name << "\n";
    all = all && ok;
  }
  return all;
}

}  // namespace falip::cli
