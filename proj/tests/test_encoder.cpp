#include <doctest.h>

#include <bit>
#include <cmath>

#include "falip/encoder.hpp"
#include "falip/errors.hpp"
#include "falip/tokenizer.hpp"
#include "fixtures.hpp"
#include "reference.hpp"

using namespace falip;

namespace {

Tensor pixels_for(const ClipModel& m, std::uint64_t seed) {
  const auto side = static_cast<std::size_t>(m.config.vision.image_side);
  return preprocess(fixtures::random_image(seed, side, side), side);
}

RunTrace traced(const ClipModel& m, const Tensor& px, const FovealMask* mask,
                std::optional<LayerRange> insert = std::nullopt) {
  ImageForwardOptions o;
  o.mask = mask;
  o.insert_layers = insert;
  o.record_trace = true;
  return *image_forward(m, px, o).trace;
}

bool patch_rows_identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t r = 1; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      if (std::bit_cast<std::uint32_t>(a(r, c)) != std::bit_cast<std::uint32_t>(b(r, c))) return false;
  return true;
}

}  // namespace

TEST_CASE("biased_attention basics") {
  const Tensor q = fixtures::random_tensor(1, {1, 4});
  const Tensor k = fixtures::random_tensor(2, {1, 4});
  const Tensor v = fixtures::random_tensor(3, {1, 4});
  const Tensor bias = Tensor::matrix({{7.5f}});
  CHECK(bit_identical(biased_attention(q, k, v, &bias), v));

  const Tensor q5 = fixtures::random_tensor(4, {5, 3});
  const Tensor k5 = fixtures::random_tensor(5, {5, 3});
  const Tensor v5 = fixtures::random_tensor(6, {5, 3});
  const Tensor zero({5, 5});
  CHECK(bit_identical(biased_attention(q5, k5, v5, &zero), biased_attention(q5, k5, v5, nullptr)));

  Tensor row0({5, 5});
  for (std::size_t j = 0; j < 5; ++j) row0(0, j) = 2.25f;
  const Tensor a = biased_attention(q5, k5, v5, &row0);
  const Tensor b = biased_attention(q5, k5, v5, nullptr);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-6);

  const Tensor wrong({4, 4});
  CHECK_THROWS_AS(biased_attention(q5, k5, v5, &wrong), ArgumentError);
  CHECK_THROWS_AS(biased_attention(q5, fixtures::random_tensor(7, {5, 2}), v5, nullptr), ArgumentError);
}

TEST_CASE("causal attention only sees the prefix") {
  const Tensor q = fixtures::random_tensor(1, {4, 3});
  const Tensor k = fixtures::random_tensor(2, {4, 3});
  Tensor v = fixtures::random_tensor(3, {4, 3});
  Tensor probs;
  const Tensor out = biased_attention(q, k, v, nullptr, true, &probs);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(probs(i, j) == 0.0f);
  // Changing the last value row leaves earlier outputs alone.
  for (auto& x : v.row(3)) x += 10.0f;
  const Tensor out2 = biased_attention(q, k, v, nullptr, true);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 3; ++c) CHECK(out(i, c) == out2(i, c));
  // First query attends to itself only.
  for (std::size_t c = 0; c < 3; ++c) CHECK(out(0, c) == doctest::Approx(fixtures::random_tensor(3, {4, 3})(0, c)));
}

TEST_CASE("patchify ordering") {
  Tensor px({3, 4, 4});
  for (std::size_t i = 0; i < px.numel(); ++i) px[i] = static_cast<float>(i);
  const Tensor p = patchify(px, 2);
  REQUIRE(p.shape() == Shape{4, 12});
  // Patch 1 is grid row 0, col 1: pixels x in {2,3}, y in {0,1}.
  const float expect[12] = {2, 3, 6, 7, 18, 19, 22, 23, 34, 35, 38, 39};
  for (std::size_t j = 0; j < 12; ++j) CHECK(p(1, j) == expect[j]);
  CHECK_THROWS_AS(patchify(px, 3), ShapeError);
}

TEST_CASE("zero bias and empty insertion are exact no-ops") {
  const ClipModel m = fixtures::toy_model(3);
  const Tensor px = pixels_for(m, 4);
  const Tensor plain = image_forward(m, px).embedding;
  for (MaskForm f : {MaskForm::A, MaskForm::B, MaskForm::C}) {
    MaskParams p;
    p.alpha = 0.0f;
    p.form = f;
    const FovealMask mask = build_foveal_mask(make_roa(2, {1, 2}), p);
    ImageForwardOptions o;
    o.mask = &mask;
    CHECK(bit_identical(image_forward(m, px, o).embedding, plain));
    MaskParams on;
    on.form = f;
    const FovealMask live = build_foveal_mask(make_roa(2, {1, 2}), on);
    o.mask = &live;
    o.insert_layers = LayerRange::none();
    CHECK(bit_identical(image_forward(m, px, o).embedding, plain));
  }
}

TEST_CASE("form-a bias leaves patch rows untouched at the layers it enters") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ClipModel m = fixtures::toy_model(seed);
    const Tensor px = pixels_for(m, seed + 50);
    for (float alpha : {0.05f, 0.2f, 0.6f}) {
      MaskParams p;
      p.alpha = alpha;
      const FovealMask mask = build_foveal_mask(make_roa(2, {0, 3}), p);
      const RunTrace plain = traced(m, px, nullptr);

      // Default insertion (layers 1-2): X_1 patch rows are unchanged, and at
      // each biased layer the MSA patch rows match a plain recompute from the
      // same input.
      const RunTrace biased = traced(m, px, &mask);
      CHECK(patch_rows_identical(biased.layers[1].input, plain.layers[1].input));
      for (std::size_t l = 0; l < biased.layers.size(); ++l) {
        LayerTrace redo;
        block_forward(biased.layers[l].input, m.vision.blocks[l], m.config.vision.heads,
                      m.config.vision.activation, m.config.vision.ln_eps, nullptr, false, &redo);
        CHECK(patch_rows_identical(biased.layers[l].msa_output, redo.msa_output));
      }

      // Insertion at the last layer only: every layer's patch rows match.
      const RunTrace last = traced(m, px, &mask, LayerRange{2, 2});
      for (std::size_t l = 0; l < last.layers.size(); ++l)
        CHECK(patch_rows_identical(last.layers[l].input, plain.layers[l].input));
      CHECK(patch_rows_identical(last.final_states, plain.final_states));
      CHECK_FALSE(bit_identical(last.embedding, plain.embedding));
    }
  }
}

TEST_CASE("positive bias raises the CLS attention share on the ROA") {
  const ClipModel m = fixtures::toy_model(8);
  const Tensor px = pixels_for(m, 9);
  const Roa roa = make_roa(2, {1});
  const FovealMask mask = build_foveal_mask(roa, MaskParams{});
  MaskParams zero;
  zero.alpha = 0.0f;
  const FovealMask mask0 = build_foveal_mask(roa, zero);
  const RunTrace on = traced(m, px, &mask), off = traced(m, px, &mask0);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(on.layers[l].biased);
    for (std::size_t h = 0; h < 2; ++h) CHECK(on.layers[l].cls_attention(h, 2) > off.layers[l].cls_attention(h, 2));
  }
}

TEST_CASE("image encoder matches the naive oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ClipModel m = fixtures::toy_model(seed);
    const Tensor px = pixels_for(m, seed + 7);
    CHECK(reference::relative_error(reference::to_vec(image_forward(m, px).embedding),
                                    reference::image_embedding(m, px)) <= 1e-6);
    for (MaskForm f : {MaskForm::A, MaskForm::B, MaskForm::C}) {
      MaskParams p;
      p.form = f;
      p.alpha = 0.6f;
      p.sigma = 1.0f;
      p.insert_layers = LayerRange{static_cast<int>(seed % 2) + 1, 2};
      const FovealMask mask = build_foveal_mask(make_roa(2, {0, 1, 3}), p);
      ImageForwardOptions o;
      o.mask = &mask;
      const reference::BiasSpec spec{reference::to_mat(mask.m), p.insert_layers->first, p.insert_layers->last};
      CHECK(reference::relative_error(reference::to_vec(image_forward(m, px, o).embedding),
                                      reference::image_embedding(m, px, spec)) <= 1e-6);
    }
  }
}

TEST_CASE("hidden states match the oracle layer by layer") {
  const ClipModel m = fixtures::toy_model(12);
  const Tensor px = pixels_for(m, 13);
  const RunTrace t = traced(m, px, nullptr);
  const auto states = reference::image_hidden_states(m, px);
  const auto check = [](const Tensor& got, const reference::Mat& want) {
    for (std::size_t r = 0; r < want.size(); ++r)
      for (std::size_t c = 0; c < want[r].size(); ++c) CHECK(std::abs(got(r, c) - want[r][c]) <= 1e-5);
  };
  check(t.layers[0].input, states[0]);
  check(t.layers[1].input, states[1]);
  check(t.final_states, states[2]);
}

TEST_CASE("text encoder") {
  const ClipModel m = fixtures::toy_model(21);
  const std::vector<int> ids{1, 2, 3};
  const Tensor e = text_forward(m, ids);
  CHECK(bit_identical(e, text_forward(m, ids)));
  CHECK(std::abs(l2_norm(e.data()) - 1.0) <= 1e-6);
  CHECK(reference::relative_error(reference::to_vec(e), reference::text_embedding(m, ids)) <= 1e-6);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto cap = fixtures::random_caption(s, m.config.text.context_length);
    CHECK(reference::relative_error(reference::to_vec(text_forward(m, cap)),
                                    reference::text_embedding(m, cap)) <= 1e-6);
  }
  // Tokens after the first EOS cannot influence the pooled state.
  const auto cap = byte_tokenize("cat", m.config.text.context_length);
  auto padded = cap;
  padded.push_back(kBytePad);
  padded.push_back(kByteEos);
  CHECK(bit_identical(text_forward(m, cap), text_forward(m, padded)));
  CHECK(eot_position(std::vector<int>{5, 6, 7}, kByteEos) == 2);
  CHECK(eot_position(std::vector<int>{256, 257, 1, 257}, kByteEos) == 1);

  CHECK_THROWS_AS(text_forward(m, std::vector<int>{}), ArgumentError);
  CHECK_THROWS_AS(text_forward(m, std::vector<int>(17, 1)), ArgumentError);
  CHECK_THROWS_AS(text_forward(m, std::vector<int>{1, 259}), ArgumentError);
  CHECK_THROWS_AS(text_forward(m, std::vector<int>{-1}), ArgumentError);
}

TEST_CASE("feature-mask baseline") {
  const ClipModel m = fixtures::toy_model(30);
  const Tensor px = pixels_for(m, 31);
  MaskParams zero;
  zero.alpha = 0.0f;
  CHECK(bit_identical(feature_mask_forward(m, px, make_roa(2, {0, 2}), zero), image_forward(m, px).embedding));

  // A 2x2 Gaussian is constant, so the whole grid scales by 1 + alpha.
  MaskParams p;
  const Tensor all = feature_mask_forward(m, px, make_roa(2, {0, 1, 2, 3}), p);
  const std::vector<double> uniform(4, 1.0 + p.alpha);
  CHECK(reference::relative_error(reference::to_vec(all), reference::image_embedding(m, px, std::nullopt, uniform)) <=
        1e-6);
  const std::vector<float> scale(4, 1.0f + p.alpha);
  const Tensor x0 = embed_image(m.config.vision, m.vision, px, scale);
  CHECK(bit_identical(all, run_image_layers(m.config.vision, m.vision, x0, nullptr, LayerRange::none(), false).embedding));

  const Roa roa = make_roa(2, {1, 3});
  const FovealMask mask = build_foveal_mask(roa, p);
  ImageForwardOptions o;
  o.mask = &mask;
  const Tensor foveal = image_forward(m, px, o).embedding;
  const Tensor feature = feature_mask_forward(m, px, roa, p);
  CHECK(reference::relative_error(reference::to_vec(foveal), reference::to_vec(feature)) > 1e-4);
}

TEST_CASE("trace records what the block computed") {
  const ClipModel m = fixtures::toy_model(40);
  const Tensor px = pixels_for(m, 41);
  const FovealMask mask = build_foveal_mask(make_roa(2, {2, 3}), MaskParams{});
  const RunTrace t = traced(m, px, &mask);
  CHECK(t.has_bias());
  CHECK(t.insert_layers == LayerRange{1, 2});
  const auto& cfg = m.config.vision;
  const std::size_t hd = static_cast<std::size_t>(cfg.head_dim());
  for (std::size_t l = 0; l < t.layers.size(); ++l) {
    const auto& lt = t.layers[l];
    const auto& w = m.vision.blocks[l];
    // CLS row of the MSA from γ, LN inputs and value weights, in double.
    std::vector<double> ctx(static_cast<std::size_t>(cfg.width), 0.0);
    for (std::size_t h = 0; h < static_cast<std::size_t>(cfg.heads); ++h)
      for (std::size_t i = 0; i < lt.ln_input.rows(); ++i)
        for (std::size_t c = 0; c < hd; ++c) {
          double v = w.bv[h * hd + c];
          for (std::size_t k = 0; k < lt.ln_input.cols(); ++k) v += lt.ln_input(i, k) * w.wv(k, h * hd + c);
          ctx[h * hd + c] += lt.cls_attention(h, i) * v;
        }
    for (std::size_t j = 0; j < ctx.size(); ++j) {
      double o = w.bo[j];
      for (std::size_t k = 0; k < ctx.size(); ++k) o += ctx[k] * w.wo(k, j);
      CHECK(std::abs(o - lt.msa_output(0, j)) <= 1e-5);
    }
    for (std::size_t h = 0; h < 2; ++h) {
      double s = 0;
      for (float p : lt.cls_attention.row(h)) s += p;
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
  CHECK(bit_identical(t.final_cls, slice_rows(t.final_states, 0, 1).reshaped({8})));
}

TEST_CASE("mask shape must match the encoder") {
  const ClipModel m = fixtures::toy_model(1);
  const FovealMask mask = build_foveal_mask(make_roa(3, {0}), MaskParams{});
  ImageForwardOptions o;
  o.mask = &mask;
  CHECK_THROWS_AS(image_forward(m, pixels_for(m, 1), o), ArgumentError);
  CHECK_THROWS_AS(image_forward(m, Tensor({3, 4, 4})), ShapeError);
  const FovealMask ok = build_foveal_mask(make_roa(2, {0}), MaskParams{});
  o.mask = &ok;
  o.insert_layers = LayerRange{2, 3};
  CHECK_THROWS_AS(image_forward(m, pixels_for(m, 1), o), ArgumentError);
}
