#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpstyler/encoder.hpp"
#include "dpstyler/losses.hpp"
#include "dpstyler/style_removal.hpp"

namespace dpstyler {

inline constexpr char kCheckpointMagic[8] = {'D', 'P', 'S', 'T', 'Y', 'L', 'R', '1'};
inline constexpr int kCheckpointFormatVersion = 1;

/// Everything needed to transplant one trained head onto the image encoder.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  StyleRemoverParams<float> remover;
  ClassifierHead<float> head;
  std::string template_id;
  std::string template_pattern;
  std::vector<std::string> class_names;
  BackendDescriptor backend;
  std::uint64_t seed = 0;
  /// JSON text of the training configuration.
  std::string config_snapshot = "{}";

  /// Throws LoadError if shapes disagree with each other or with the backend descriptor.
  void validate() const;
};

/// Layout: 8-byte magic "DPSTYLR1", u32 LE header length, UTF-8 JSON header, then
/// little-endian float32 arrays W1, W2, head in header-manifest order.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes);

}  // namespace dpstyler
