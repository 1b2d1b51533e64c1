#include "falip/ntf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "falip/errors.hpp"

namespace falip {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'F', '1'};

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> write_ntf(const std::string& name, const Tensor& tensor) {
  nlohmann::json header;
  header["name"] = name;
  header["dtype"] = "f32";
  header["shape"] = tensor.shape();
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 4 * tensor.numel());
  for (float v : tensor.data()) put_u32le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

NamedTensor read_ntf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("ntf: bad magic");
  }
  const std::uint32_t header_len = get_u32le(bytes.data() + 4);
  if (bytes.size() - 8 < header_len) throw FormatError("ntf: truncated header");
  const std::string text(reinterpret_cast<const char*>(bytes.data() + 8), header_len);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ntf: header is not JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("name") || !header["name"].is_string() ||
      !header.contains("shape") || !header["shape"].is_array()) {
    throw FormatError("ntf: header needs string 'name' and array 'shape'");
  }
  if (header.value("dtype", std::string{}) != "f32") throw FormatError("ntf: dtype must be f32");
  Shape shape;
  for (const auto& d : header["shape"]) {
    if (!d.is_number_unsigned()) throw FormatError("ntf: shape entries must be non-negative integers");
    shape.push_back(d.get<std::size_t>());
  }

  const std::size_t count = shape_numel(shape);
  const std::size_t payload = bytes.size() - 8 - header_len;
  if (payload != 4 * count) {
    throw FormatError("ntf: payload is " + std::to_string(payload) + " bytes, shape " +
                      shape_str(shape) + " needs " + std::to_string(4 * count));
  }
  std::vector<float> values(count);
  const std::uint8_t* p = bytes.data() + 8 + header_len;
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32le(p + 4 * i));
  return NamedTensor{header["name"].get<std::string>(), Tensor(std::move(shape), std::move(values))};
}

void write_ntf_file(const std::string& path, const std::string& name, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("ntf: cannot write " + path);
  const auto bytes = write_ntf(name, tensor);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("ntf: write failed for " + path);
}

NamedTensor read_ntf_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("ntf: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return read_ntf(bytes);
}

}  // namespace falip
