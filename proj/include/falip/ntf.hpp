#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "falip/tensor.hpp"

namespace falip {

/// Named tensor file:
///
///   bytes 0..3   "NTF1"
///   bytes 4..7   header length, u32 little-endian
///   header       UTF-8 JSON {"dtype":"f32","name":...,"shape":[...]}
///   payload      row-major little-endian f32, 4·product(shape) bytes
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

std::vector<std::uint8_t> write_ntf(const std::string& name, const Tensor& tensor);
NamedTensor read_ntf(std::span<const std::uint8_t> bytes);

void write_ntf_file(const std::string& path, const std::string& name, const Tensor& tensor);
NamedTensor read_ntf_file(const std::string& path);

}  // namespace falip
