#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "falip/errors.hpp"
#include "falip/foveal_mask.hpp"

using namespace falip;

namespace {

Roa random_roa(std::mt19937_64& rng, std::size_t grid) {
  std::vector<std::size_t> tokens;
  const std::size_t r0 = rng() % grid, c0 = rng() % grid;
  const std::size_t h = 1 + rng() % (grid - r0), w = 1 + rng() % (grid - c0);
  for (std::size_t r = r0; r < r0 + h; ++r)
    for (std::size_t c = c0; c < c0 + w; ++c)
      if (rng() % 4 != 0 || (r == r0 && c == c0)) tokens.push_back(r * grid + c);
  return make_roa(grid, tokens);
}

}  // namespace

TEST_CASE("gaussian_grid goldens") {
  for (float sigma : {0.1f, 1.0f, 100.0f}) CHECK(gaussian_grid(1, 1, sigma)[0] == 1.0f);

  const Tensor g = gaussian_grid(3, 3, 1.0f);
  const double expect[9] = {0.36788, 0.60653, 0.36788, 0.60653, 1.0, 0.60653, 0.36788, 0.60653, 0.36788};
  for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(g[i] - expect[i]) <= 1e-5);

  const Tensor g2 = gaussian_grid(2, 2, 100.0f);
  for (float v : g2.data()) CHECK(std::abs(v - std::exp(-0.5 / 20000.0)) <= 1e-7);
  CHECK(std::abs(g2[0] - 0.999975) <= 1e-6);
  CHECK_THROWS_AS(gaussian_grid(0, 3, 1.0f), ArgumentError);
  CHECK_THROWS_AS(gaussian_grid(2, 2, 0.0f), ArgumentError);
}

TEST_CASE("gaussian_grid is flip-symmetric with its max at the center") {
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{5, 7}, {4, 4}, {1, 6}, {8, 3}}) {
    const Tensor g = gaussian_grid(h, w, 1.7f);
    float mx = 0;
    for (float v : g.data()) mx = std::max(mx, v);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        CHECK(g(i, j) == g(h - 1 - i, j));
        CHECK(g(i, j) == g(i, w - 1 - j));
        const bool central = (i == h / 2 || i == (h - 1) / 2) && (j == w / 2 || j == (w - 1) / 2);
        CHECK((g(i, j) == mx) == central);
      }
  }
}

TEST_CASE("normalize_grid goldens") {
  const Tensor flat({3, 2}, std::vector<float>(6, 0.42f));
  for (float alpha : {0.05f, 0.2f, 0.6f, 3.0f}) {
    const Tensor n = normalize_grid(flat, alpha, 1e-6f);
    for (float v : n.data()) CHECK(v == alpha);
  }
  const Tensor g = normalize_grid(gaussian_grid(3, 3, 1.0f), 0.2f, 1e-6f);
  CHECK(g(1, 1) == doctest::Approx(0.2).epsilon(1e-7));
  CHECK(g(0, 0) == doctest::Approx(3.16e-7).epsilon(0.01));
  CHECK(g(0, 1) == doctest::Approx(0.07551).epsilon(1e-4));
  const Tensor z = normalize_grid(gaussian_grid(3, 3, 1.0f), 0.0f, 1e-6f);
  for (float v : z.data()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(normalize_grid(g, -0.1f, 1e-6f), ArgumentError);
  CHECK_THROWS_AS(normalize_grid(g, 0.2f, 0.0f), ArgumentError);
}

TEST_CASE("normalize_grid preserves ranking") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor r({4, 5});
    for (auto& v : r.data()) v = static_cast<float>(rng() % 1000) / 1000.0f;
    const Tensor n = normalize_grid(r, 0.3f, 1e-6f);
    for (std::size_t p = 0; p < r.numel(); ++p)
      for (std::size_t q = 0; q < r.numel(); ++q)
        if (r[p] <= r[q]) CHECK(n[p] <= n[q]);
  }
}

TEST_CASE("box_to_roa") {
  const Roa all = box_to_roa({0, 0, 224, 224}, 224, 16);
  CHECK(all.token_indices.size() == 196);
  CHECK(all.grid_h == 14);
  CHECK(all.grid_w == 14);

  const Roa one = box_to_roa({0, 0, 16, 16}, 224, 16);
  CHECK(one.token_indices == std::vector<std::size_t>{0});
  CHECK(one.grid_h == 1);
  CHECK(one.grid_w == 1);

  const Roa four = box_to_roa({8, 8, 24, 24}, 224, 16);
  CHECK(four.token_indices == std::vector<std::size_t>{0, 1, 14, 15});
  CHECK(four.grid_h == 2);
  CHECK(four.grid_w == 2);

  // Touching an edge is not overlap; any positive sliver is.
  CHECK(box_to_roa({16, 0, 32, 16}, 224, 16).token_indices == std::vector<std::size_t>{1});
  CHECK(box_to_roa({15.5, 0, 16, 16}, 224, 16).token_indices == std::vector<std::size_t>{0});
  CHECK(box_to_roa({-50, -50, 300, 20}, 224, 16).token_indices.size() == 28);

  const Roa mid = box_to_roa({40, 70, 90, 75}, 224, 16);
  CHECK(mid.origin_row == 4);
  CHECK(mid.origin_col == 2);
  CHECK(mid.grid_h == 1);
  CHECK(mid.grid_w == 4);

  CHECK_THROWS_AS(box_to_roa({300, 300, 400, 400}, 224, 16), EmptyRoaError);
  CHECK_THROWS_AS(box_to_roa({10, 10, 10, 40}, 224, 16), EmptyRoaError);
  CHECK_THROWS_AS(box_to_roa({0, 0, 10, 10}, 224, 15), ArgumentError);
}

TEST_CASE("make_roa sorts, dedupes and bounds") {
  const Roa r = make_roa(4, {9, 5, 5, 6});
  CHECK(r.token_indices == std::vector<std::size_t>{5, 6, 9});
  CHECK(r.origin_row == 1);
  CHECK(r.origin_col == 1);
  CHECK(r.grid_h == 2);
  CHECK(r.grid_w == 2);
  CHECK_THROWS_AS(make_roa(4, {}), EmptyRoaError);
  CHECK_THROWS_AS(make_roa(4, {16}), ArgumentError);
}

TEST_CASE("assemble_mask index arithmetic") {
  const Roa single = make_roa(2, {0});
  const Tensor v({1, 1}, {0.37f});
  const FovealMask a = assemble_mask(v, single, 4, MaskForm::A);
  REQUIRE(a.m.shape() == Shape{5, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(a.m(i, j) == ((i == 0 && j == 1) ? 0.37f : 0.0f));
  const FovealMask c = assemble_mask(v, single, 4, MaskForm::C);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(c.m(i, j) == ((i == 1 && j == 1) ? 0.37f : 0.0f));
  const FovealMask b = assemble_mask(v, single, 4, MaskForm::B);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(b.m(i, j) == (j == 1 ? 0.37f : 0.0f));

  MaskParams zero;
  zero.alpha = 0.0f;
  for (MaskForm f : {MaskForm::A, MaskForm::B, MaskForm::C}) {
    zero.form = f;
    const FovealMask m = build_foveal_mask(make_roa(3, {0, 1, 4, 8}), zero);
    for (float x : m.m.data()) CHECK(x == 0.0f);
  }
  CHECK_THROWS_AS(assemble_mask(Tensor({2, 2}), single, 4, MaskForm::A), ShapeError);
  CHECK_THROWS_AS(assemble_mask(v, single, 9, MaskForm::A), ArgumentError);
}

TEST_CASE("assemble_mask matches the per-token oracle for every form") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t grid = 2 + rng() % 6;
    const Roa roa = random_roa(rng, grid);
    MaskParams p;
    p.alpha = 0.05f + static_cast<float>(rng() % 100) / 100.0f;
    p.sigma = 0.5f + static_cast<float>(rng() % 50) / 10.0f;
    const Tensor norm = normalize_grid(gaussian_grid(roa.grid_h, roa.grid_w, p.sigma), p.alpha, p.eps);
    const std::set<std::size_t> in(roa.token_indices.begin(), roa.token_indices.end());
    const std::size_t n = grid * grid;
    for (MaskForm f : {MaskForm::A, MaskForm::B, MaskForm::C}) {
      p.form = f;
      const FovealMask m = build_foveal_mask(roa, p);
      REQUIRE(m.m.shape() == Shape{n + 1, n + 1});
      std::size_t nonzero = 0;
      for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t j = 0; j <= n; ++j) {
          float expect = 0.0f;
          if (j > 0 && in.contains(j - 1)) {
            const std::size_t t = j - 1;
            const float val = norm(t / grid - roa.origin_row, t % grid - roa.origin_col);
            if ((f == MaskForm::A && i == 0) || f == MaskForm::B || (f == MaskForm::C && i == j))
              expect = val;
          }
          CHECK(m.m(i, j) == expect);
          CHECK(m.m(i, j) >= 0.0f);
          CHECK(m.m(i, j) <= p.alpha);
          nonzero += m.m(i, j) != 0.0f;
        }
      if (f == MaskForm::A) CHECK(nonzero <= roa.token_indices.size());
    }
  }
}

TEST_CASE("token weights for the feature-mask baseline") {
  MaskParams p;
  const Roa roa = make_roa(3, {4});
  const auto w = roa_token_weights(roa, p);
  REQUIRE(w.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) CHECK(w[i] == (i == 4 ? p.alpha : 0.0f));
}

TEST_CASE("layer ranges") {
  CHECK(parse_layer_range("9-12") == LayerRange{9, 12});
  CHECK(parse_layer_range("3") == LayerRange{3, 3});
  CHECK(parse_layer_range("none").empty());
  CHECK(format_layer_range(LayerRange{9, 12}) == "9-12");
  CHECK(format_layer_range(LayerRange::none()) == "none");
  CHECK_THROWS_AS(parse_layer_range("0-2"), ArgumentError);
  CHECK_THROWS_AS(parse_layer_range("4-2"), ArgumentError);
  CHECK_THROWS_AS(parse_layer_range("1-2x"), ArgumentError);
  CHECK(LayerRange::last_n(12) == LayerRange{9, 12});
  CHECK(LayerRange::last_n(2) == LayerRange{1, 2});

  MaskParams p;
  CHECK(p.resolve_layers(12) == LayerRange{9, 12});
  p.insert_layers = LayerRange{2, 3};
  CHECK(p.resolve_layers(12) == LayerRange{2, 3});
  CHECK_THROWS_AS(p.resolve_layers(2), ArgumentError);
  CHECK(parse_mask_form("b") == MaskForm::B);
  CHECK_THROWS_AS(parse_mask_form("d"), ArgumentError);
}
