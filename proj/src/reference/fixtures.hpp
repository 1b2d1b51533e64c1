#pragma once

// Seeded inputs shared by the self-test, unit tests and acceptance suite.

#include <cstdint>

#include "falip/image.hpp"
#include "falip/model.hpp"

namespace falip::fixtures {

/// Toy model (L=2, H=2, D=8, N=4) with weights from `seed`.
ClipModel toy_model(std::uint64_t seed);

/// Uniform [0,1) RGB image.
Image random_image(std::uint64_t seed, std::size_t height, std::size_t width);

/// Uniform [lo, hi) tensor.
Tensor random_tensor(std::uint64_t seed, Shape shape, float lo = -1.0f, float hi = 1.0f);

/// Random byte-vocabulary caption ids, BOS ... EOS, length in [3, max_len].
std::vector<int> random_caption(std::uint64_t seed, int max_len);

}  // namespace falip::fixtures
