#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "falip/errors.hpp"
#include "falip/ntf.hpp"
#include "fixtures.hpp"

using namespace falip;

namespace {

std::vector<std::uint8_t> header_of(const std::string& json) {
  std::vector<std::uint8_t> out{'N', 'T', 'F', '1'};
  const auto n = static_cast<std::uint32_t>(json.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  out.insert(out.end(), json.begin(), json.end());
  return out;
}

}  // namespace

TEST_CASE("empty tensor is header only") {
  const auto bytes = write_ntf("empty", Tensor({0}));
  const std::string header = R"({"dtype":"f32","name":"empty","shape":[0]})";
  CHECK(bytes == header_of(header));
  const auto back = read_ntf(bytes);
  CHECK(back.name == "empty");
  CHECK(back.tensor.shape() == Shape{0});
}

TEST_CASE("2x2 payload is little-endian f32") {
  const auto bytes = write_ntf("m", Tensor::matrix({{1, 2}, {3, 4}}));
  auto expect = header_of(R"({"dtype":"f32","name":"m","shape":[2,2]})");
  // 1.0f = 0x3f800000, 2.0f = 0x40000000, 3.0f = 0x40400000, 4.0f = 0x40800000
  const std::uint8_t payload[16] = {0, 0, 0x80, 0x3f, 0, 0, 0, 0x40, 0, 0, 0x40, 0x40, 0, 0, 0x80, 0x40};
  expect.insert(expect.end(), std::begin(payload), std::end(payload));
  CHECK(bytes == expect);
  CHECK(bytes.size() - header_of(R"({"dtype":"f32","name":"m","shape":[2,2]})").size() == 16);
}

TEST_CASE("round trip is bit-identical for random tensors of rank 0-4") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    const int rank = static_cast<int>(rng() % 5);
    Shape shape;
    for (int r = 0; r < rank; ++r) shape.push_back(rng() % 4 + (r == 0 ? 0 : 1));
    Tensor t(shape);
    for (auto& v : t.data()) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng()));
    const auto back = read_ntf(write_ntf("t" + std::to_string(i), t));
    CHECK(back.name == "t" + std::to_string(i));
    CHECK(bit_identical(back.tensor, t));
  }
}

TEST_CASE("malformed files are format errors") {
  auto good = write_ntf("x", Tensor::vector({1, 2, 3}));
  auto truncated = good;
  truncated.pop_back();
  CHECK_THROWS_AS(read_ntf(truncated), FormatError);
  auto extra = good;
  extra.push_back(0);
  CHECK_THROWS_AS(read_ntf(extra), FormatError);
  auto magic = good;
  magic[3] = '2';
  CHECK_THROWS_AS(read_ntf(magic), FormatError);
  CHECK_THROWS_AS(read_ntf(std::vector<std::uint8_t>{'N', 'T'}), FormatError);
  CHECK_THROWS_AS(read_ntf(header_of(R"({"dtype":"f64","name":"x","shape":[0]})")), FormatError);
  CHECK_THROWS_AS(read_ntf(header_of(R"({"dtype":"f32","shape":[0]})")), FormatError);
  CHECK_THROWS_AS(read_ntf(header_of(R"({"dtype":"f32","name":"x","shape":[-1]})")), FormatError);
  CHECK_THROWS_AS(read_ntf(header_of("not json")), FormatError);
  auto long_header = header_of("{}");
  long_header[4] = 200;
  CHECK_THROWS_AS(read_ntf(long_header), FormatError);
}

TEST_CASE("file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "falip_test_ntf.ntf";
  const Tensor t = fixtures::random_tensor(8, {3, 4, 5});
  write_ntf_file(path.string(), "weights", t);
  const auto back = read_ntf_file(path.string());
  CHECK(back.name == "weights");
  CHECK(bit_identical(back.tensor, t));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_ntf_file(path.string()), FormatError);
}
