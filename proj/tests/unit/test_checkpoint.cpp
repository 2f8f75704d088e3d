#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "doctest.h"

#include "json.hpp"
#include "dpstyler/checkpoint.hpp"
#include "dpstyler/errors.hpp"
#include "dpstyler/rng.hpp"

using namespace dpstyler;

namespace {

using Bytes = std::vector<unsigned char>;

Checkpoint random_checkpoint(std::uint64_t seed) {
  Rng rng(seed);
  Checkpoint c;
  c.remover = remover_init<float>(32, 4, rng);
  std::normal_distribution<float> dist;
  c.head.weights = Matrix<float>(3, 32);
  for (auto& x : c.head.weights.flat()) x = dist(rng);
  // awkward bit patterns must survive too
  c.head.weights(0, 0) = -0.0f;
  c.head.weights(0, 1) = std::numeric_limits<float>::denorm_min();
  c.head.weights(0, 2) = std::nextafter(1.0f, 2.0f);
  c.template_id = "t1";
  c.template_pattern = "a S* style of a [class]";
  c.class_names = {"dog", "cat", "caf\xc3\xa9"};
  c.backend = {32, 16, "toy"};
  c.seed = seed;
  c.config_snapshot = R"({"epochs":3,"learning_rate":0.008})";
  return c;
}

std::uint32_t header_length(const Bytes& bytes) {
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
  return n;
}

nlohmann::json header_of(const Bytes& bytes) {
  const auto n = header_length(bytes);
  return nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + n);
}

/// Same payload with a replaced header.
Bytes with_header(const Bytes& bytes, const nlohmann::json& header) {
  const auto old_len = header_length(bytes);
  const std::string text = header.dump();
  Bytes out(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((text.size() >> (8 * i)) & 0xff));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), bytes.begin() + 12 + old_len, bytes.end());
  return out;
}

std::string load_error_message(const Bytes& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const LoadError& e) {
    return e.what();
  }
  return {};
}

bool bitwise_equal(const Matrix<float>& a, const Matrix<float>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.flat().data(), b.flat().data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("round trip is bitwise exact") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto c = random_checkpoint(seed);
    const auto bytes = serialize_checkpoint(c);
    const auto back = deserialize_checkpoint(bytes);
    CHECK(bitwise_equal(back.remover.w1, c.remover.w1));
    CHECK(bitwise_equal(back.remover.w2, c.remover.w2));
    CHECK(bitwise_equal(back.head.weights, c.head.weights));
    CHECK(std::signbit(back.head.weights(0, 0)));
    CHECK(back.remover.ratio == 4);
    CHECK(back.template_id == c.template_id);
    CHECK(back.template_pattern == c.template_pattern);
    CHECK(back.class_names == c.class_names);
    CHECK(back.backend == c.backend);
    CHECK(back.seed == seed);
    CHECK(nlohmann::json::parse(back.config_snapshot) == nlohmann::json::parse(c.config_snapshot));
    CHECK(serialize_checkpoint(back) == bytes);
  }
}

TEST_CASE("file round trip and layout") {
  const auto c = random_checkpoint(4);
  const auto path = std::filesystem::temp_directory_path() / "dpstyler_ckpt_test.dpst";
  save_checkpoint(c, path);
  std::ifstream in(path, std::ios::binary);
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "DPSTYLR1");
  const auto header = header_of(bytes);
  CHECK(header.at("format_version") == 1);
  CHECK(header.at("C") == 32);
  CHECK(header.at("D") == 16);
  CHECK(header.at("r") == 4);
  CHECK(header.at("M") == 3);
  CHECK(header.at("arrays").size() == 3);
  CHECK(header.at("arrays")[0].at("name") == "W1");
  const std::size_t floats = 32 * 8 + 8 * 32 + 3 * 32;
  CHECK(bytes.size() == 12 + header_length(bytes) + 4 * floats);
  // first W1 entry, little-endian
  const auto data = bytes.begin() + 12 + header_length(bytes);
  std::uint32_t first = 0;
  for (int i = 0; i < 4; ++i) first |= static_cast<std::uint32_t>(data[i]) << (8 * i);
  CHECK(first == std::bit_cast<std::uint32_t>(c.remover.w1(0, 0)));

  const auto back = load_checkpoint(path);
  CHECK(bitwise_equal(back.head.weights, c.head.weights));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), LoadError);
}

TEST_CASE("truncation by one byte is a load error") {
  auto bytes = serialize_checkpoint(random_checkpoint(5));
  bytes.pop_back();
  CHECK(load_error_message(bytes).find("truncated") != std::string::npos);
  CHECK_THROWS_AS(deserialize_checkpoint(Bytes(bytes.begin(), bytes.begin() + 20)), LoadError);
  CHECK_THROWS_AS(deserialize_checkpoint(Bytes(bytes.begin(), bytes.begin() + 5)), LoadError);
}

TEST_CASE("trailing bytes are rejected") {
  auto bytes = serialize_checkpoint(random_checkpoint(5));
  bytes.push_back(0);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes), LoadError);
}

TEST_CASE("unknown version names the version found") {
  const auto bytes = serialize_checkpoint(random_checkpoint(6));
  auto header = header_of(bytes);
  header["format_version"] = 7;
  const auto message = load_error_message(with_header(bytes, header));
  CHECK(message.find("version 7") != std::string::npos);
}

TEST_CASE("bad magic") {
  auto bytes = serialize_checkpoint(random_checkpoint(7));
  bytes[7] = '2';
  CHECK(load_error_message(bytes).find("magic") != std::string::npos);
}

TEST_CASE("shape inconsistencies are load errors") {
  const auto bytes = serialize_checkpoint(random_checkpoint(8));
  const auto header = header_of(bytes);
  SUBCASE("class names disagree with head rows") {
    auto h = header;
    h["class_names"] = {"dog", "cat"};
    h["M"] = 2;
    CHECK_THROWS_AS(deserialize_checkpoint(with_header(bytes, h)), LoadError);
  }
  SUBCASE("M disagrees with class names") {
    auto h = header;
    h["M"] = 4;
    CHECK_THROWS_AS(deserialize_checkpoint(with_header(bytes, h)), LoadError);
  }
  SUBCASE("backend C disagrees with the remover") {
    auto h = header;
    h["C"] = 64;
    CHECK_THROWS_AS(deserialize_checkpoint(with_header(bytes, h)), LoadError);
  }
  SUBCASE("ratio disagrees with the hidden width") {
    auto h = header;
    h["r"] = 8;
    CHECK(load_error_message(with_header(bytes, h)).find("ratio") != std::string::npos);
  }
  SUBCASE("array shape does not match its byte count") {
    auto h = header;
    h["arrays"][2]["shape"] = {4, 32};
    CHECK_THROWS_AS(deserialize_checkpoint(with_header(bytes, h)), LoadError);
  }
  SUBCASE("missing field") {
    auto h = header;
    h.erase("seed");
    CHECK_THROWS_AS(deserialize_checkpoint(with_header(bytes, h)), LoadError);
  }
  SUBCASE("header that is not JSON") {
    Bytes b(bytes.begin(), bytes.begin() + 12);
    b.insert(b.end(), bytes.begin() + 13, bytes.end());
    CHECK_THROWS_AS(deserialize_checkpoint(b), LoadError);
  }
}

TEST_CASE("serializing an inconsistent checkpoint is refused") {
  auto c = random_checkpoint(9);
  c.class_names.pop_back();
  CHECK_THROWS_AS(serialize_checkpoint(c), LoadError);
}

}  // TEST_SUITE
