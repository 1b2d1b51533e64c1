#include "fixtures.hpp"

#include <random>

#include "falip/tokenizer.hpp"

namespace falip::fixtures {

namespace {

// Explicit mapping so values do not depend on the standard library's
// distribution implementations.
float unit(std::mt19937_64& rng) { return static_cast<float>(rng() >> 40) / static_cast<float>(1 << 24); }

}  // namespace

ClipModel toy_model(std::uint64_t seed) { return build_model(make_toy_weights(toy_config(), seed)); }

Image random_image(std::uint64_t seed, std::size_t height, std::size_t width) {
  std::mt19937_64 rng(seed);
  std::vector<float> px(height * width * 3);
  for (auto& v : px) v = unit(rng);
  return Image(height, width, std::move(px));
}

Tensor random_tensor(std::uint64_t seed, Shape shape, float lo, float hi) {
  std::mt19937_64 rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = lo + (hi - lo) * unit(rng);
  return t;
}

std::vector<int> random_caption(std::uint64_t seed, int max_len) {
  std::mt19937_64 rng(seed);
  const int len = 3 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_len - 2));
  std::vector<int> ids{kByteBos};
  for (int i = 1; i < len - 1; ++i) ids.push_back(static_cast<int>(rng() % 256));
  ids.push_back(kByteEos);
  return ids;
}

}  // namespace falip::fixtures
