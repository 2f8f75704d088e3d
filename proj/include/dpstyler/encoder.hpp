#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dpstyler/embedding.hpp"
#include "dpstyler/style_generation.hpp"

namespace dpstyler {

/// Decoded RGB raster, row-major HWC floats.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<float> pixels;
};

/// Toy-backend image: a class index plus a D-dimensional nuisance style.
struct SyntheticImage {
  std::size_t class_index = 0;
  std::vector<float> nuisance;

  bool operator==(const SyntheticImage&) const = default;
};

using DecodedImage = std::variant<Raster, SyntheticImage>;

struct BackendDescriptor {
  std::size_t joint_dim = 0;  // C
  std::size_t token_dim = 0;  // D
  std::string variant;

  bool operator==(const BackendDescriptor&) const = default;
};

/// Frozen text/image encoder pair sharing a C-dimensional joint space.
/// Implementations are immutable after construction and safe for concurrent readers.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual BackendDescriptor descriptor() const = 0;
  std::size_t joint_dim() const { return descriptor().joint_dim; }
  std::size_t token_dim() const { return descriptor().token_dim; }

  /// Fills the template, injects `style` at the S* token (required iff the template has one),
  /// and runs the text encoder.
  virtual JointEmbedding text_encode(const PromptTemplate& prompt, const std::string& class_name,
                                     const StyleVector* style) const = 0;

  /// Encodes the style-only probe prompt "S*-like style".
  JointEmbedding style_text_encode(const StyleVector& style) const {
    return text_encode(style_probe_template(), std::string{}, &style);
  }

  virtual JointEmbedding image_encode(const DecodedImage& image) const = 0;

  /// Throws DecodeError for unreadable or malformed files.
  virtual DecodedImage decode_image(const std::filesystem::path& path) const = 0;

  /// Embedding-table row of a single-token word. Multi-token words are a ContractError.
  virtual StyleVector token_embedding_lookup(std::string_view word) const = 0;
};

/// Lowercased word tokens; punctuation becomes its own token and "S*" is kept whole.
std::vector<std::string> tokenize_prompt(std::string_view text);

/// Lexicon vectors via the backend's token lookup.
PredefinedLexicon build_lexicon(const std::vector<std::string>& words, const EncoderBackend& backend);

/// Published CLIP channel statistics.
inline constexpr float kClipMean[3] = {0.48145466f, 0.4578275f, 0.40821073f};
inline constexpr float kClipStd[3] = {0.26862954f, 0.26130258f, 0.27577711f};

/// Bilinear resize to size x size followed by per-channel CLIP normalization.
/// Input pixels are expected in [0, 1].
Raster preprocess_for_clip(const Raster& image, std::size_t size = 224);

/// Settings for a pretrained CLIP adapter. Weights live outside this project.
struct ExternalBackendConfig {
  std::string variant = "RN50";  // RN50 | ViT-B/16 | ViT-L/14
  std::filesystem::path weights;
};

/// Joint and token dimensions of a supported pretrained variant.
BackendDescriptor external_backend_descriptor(const std::string& variant);

}  // namespace dpstyler
