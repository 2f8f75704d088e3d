#include "dpstyler/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace dpstyler {

namespace {

using Bytes = std::vector<unsigned char>;

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

void put_floats(Bytes& out, std::span<const float> values) {
  for (float x : values) put_u32(out, std::bit_cast<std::uint32_t>(x));
}

std::vector<float> get_floats(const unsigned char* p, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  return out;
}

struct ArrayEntry {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

}  // namespace

void Checkpoint::validate() const {
  const std::size_t dim = remover.w1.rows();
  const std::size_t hidden = remover.w1.cols();
  if (dim == 0 || hidden == 0) throw LoadError("checkpoint: empty remover");
  if (remover.w2.rows() != hidden || remover.w2.cols() != dim) throw LoadError("checkpoint: W2 shape disagrees with W1");
  if (head.weights.cols() != dim) throw LoadError("checkpoint: head width disagrees with remover C");
  if (head.weights.rows() != class_names.size()) throw LoadError("checkpoint: head rows != number of class names");
  if (backend.joint_dim != dim) throw LoadError("checkpoint: backend C disagrees with remover C");
  if (remover.ratio < 1 || dim / static_cast<std::size_t>(remover.ratio) != hidden) {
    throw LoadError("checkpoint: ratio r=" + std::to_string(remover.ratio) + " inconsistent with C/H");
  }
}

Bytes serialize_checkpoint(const Checkpoint& checkpoint) {
  checkpoint.validate();
  const std::vector<ArrayEntry> arrays = {
      {"W1", checkpoint.remover.w1.rows(), checkpoint.remover.w1.cols()},
      {"W2", checkpoint.remover.w2.rows(), checkpoint.remover.w2.cols()},
      {"head", checkpoint.head.weights.rows(), checkpoint.head.weights.cols()},
  };
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& a : arrays) {
    const std::size_t bytes = a.rows * a.cols * 4;
    manifest.push_back({{"name", a.name}, {"shape", {a.rows, a.cols}}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  nlohmann::json config = nlohmann::json::parse(checkpoint.config_snapshot, nullptr, false);
  if (config.is_discarded()) config = checkpoint.config_snapshot;
  const nlohmann::json header = {
      {"format_version", checkpoint.format_version},
      {"C", checkpoint.backend.joint_dim},
      {"D", checkpoint.backend.token_dim},
      {"r", checkpoint.remover.ratio},
      {"M", checkpoint.class_names.size()},
      {"template", {{"id", checkpoint.template_id}, {"pattern", checkpoint.template_pattern}}},
      {"class_names", checkpoint.class_names},
      {"backend", checkpoint.backend.variant},
      {"seed", checkpoint.seed},
      {"config", config},
      {"arrays", manifest},
  };
  const std::string text = header.dump();

  Bytes out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put_floats(out, checkpoint.remover.w1.flat());
  put_floats(out, checkpoint.remover.w2.flat());
  put_floats(out, checkpoint.head.weights.flat());
  return out;
}

Checkpoint deserialize_checkpoint(const Bytes& bytes) {
  constexpr std::size_t kPrefix = sizeof(kCheckpointMagic) + 4;
  if (bytes.size() < kPrefix) throw LoadError("checkpoint: file too short for header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw LoadError("checkpoint: bad magic (not a DPSTYLR1 file)");
  }
  const std::size_t header_len = get_u32(bytes.data() + sizeof(kCheckpointMagic));
  if (bytes.size() < kPrefix + header_len) throw LoadError("checkpoint: truncated header");
  const std::string text(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint: malformed header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    const auto version = header.at("format_version");
    if (!version.is_number_integer() || version.get<int>() != kCheckpointFormatVersion) {
      throw LoadError("checkpoint: unsupported format version " + version.dump() + " (expected " +
                      std::to_string(kCheckpointFormatVersion) + ")");
    }
    ckpt.format_version = version.get<int>();
    ckpt.backend = {header.at("C").get<std::size_t>(), header.at("D").get<std::size_t>(),
                    header.at("backend").get<std::string>()};
    ckpt.remover.ratio = header.at("r").get<int>();
    ckpt.template_id = header.at("template").at("id").get<std::string>();
    ckpt.template_pattern = header.at("template").at("pattern").get<std::string>();
    ckpt.class_names = header.at("class_names").get<std::vector<std::string>>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.config_snapshot = header.at("config").dump();
    if (header.at("M").get<std::size_t>() != ckpt.class_names.size()) throw LoadError("checkpoint: M != class count");

    const std::size_t data_begin = kPrefix + header_len;
    const std::size_t data_size = bytes.size() - data_begin;
    std::size_t expected_end = 0;
    for (const auto& entry : header.at("arrays")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offset = entry.at("offset").get<std::size_t>();
      if (shape.size() != 2) throw LoadError("checkpoint: array " + name + " is not 2-D");
      const std::size_t count = shape[0] * shape[1];
      if (entry.at("bytes").get<std::size_t>() != count * 4) throw LoadError("checkpoint: array " + name + " size mismatch");
      if (offset + count * 4 > data_size) throw LoadError("checkpoint: truncated data for array " + name);
      Matrix<float> m(shape[0], shape[1], get_floats(bytes.data() + data_begin + offset, count));
      if (name == "W1") {
        ckpt.remover.w1 = std::move(m);
      } else if (name == "W2") {
        ckpt.remover.w2 = std::move(m);
      } else if (name == "head") {
        ckpt.head.weights = std::move(m);
      } else {
        throw LoadError("checkpoint: unknown array " + name);
      }
      expected_end = std::max(expected_end, offset + count * 4);
    }
    if (expected_end != data_size) {
      throw LoadError("checkpoint: data section is " + std::to_string(data_size) + " bytes, manifest covers " +
                      std::to_string(expected_end));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint: bad header field: ") + e.what());
  }
  ckpt.validate();
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace dpstyler
