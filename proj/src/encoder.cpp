#include "dpstyler/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "dpstyler/errors.hpp"

namespace dpstyler {

std::vector<std::string> tokenize_prompt(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::exchange(current, {}));
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c == 'S' && i + 1 < text.size() && text[i + 1] == '*') {
      flush();
      tokens.emplace_back("S*");
      ++i;
    } else if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

PredefinedLexicon build_lexicon(const std::vector<std::string>& words, const EncoderBackend& backend) {
  std::vector<StyleVector> vectors;
  vectors.reserve(words.size());
  for (const auto& word : words) vectors.push_back(backend.token_embedding_lookup(word));
  return PredefinedLexicon(words, std::move(vectors));
}

Raster preprocess_for_clip(const Raster& image, std::size_t size) {
  if (image.width == 0 || image.height == 0 || image.channels != 3 ||
      image.pixels.size() != image.width * image.height * 3) {
    throw DecodeError("preprocess_for_clip: expected a non-empty RGB raster");
  }
  if (size == 0) throw ContractError("preprocess_for_clip: zero target size");
  Raster out{size, size, 3, std::vector<float>(size * size * 3)};
  const double sx = static_cast<double>(image.width) / static_cast<double>(size);
  const double sy = static_cast<double>(image.height) / static_cast<double>(size);
  auto at = [&](std::size_t x, std::size_t y, std::size_t c) {
    return static_cast<double>(image.pixels[(y * image.width + x) * 3 + c]);
  };
  for (std::size_t oy = 0; oy < size; ++oy) {
    // Half-pixel centers, edge-clamped.
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < size; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = at(x0, y0, c) * (1 - wx) + at(x1, y0, c) * wx;
        const double bottom = at(x0, y1, c) * (1 - wx) + at(x1, y1, c) * wx;
        const double v = top * (1 - wy) + bottom * wy;
        out.pixels[(oy * size + ox) * 3 + c] = static_cast<float>((v - kClipMean[c]) / kClipStd[c]);
      }
    }
  }
  return out;
}

BackendDescriptor external_backend_descriptor(const std::string& variant) {
  if (variant == "RN50") return {1024, 512, "clip-RN50"};
  if (variant == "ViT-B/16") return {512, 512, "clip-ViT-B/16"};
  // ViT-L/14 has a 768-wide text transformer, so its token embeddings are 768 too
  if (variant == "ViT-L/14") return {768, 768, "clip-ViT-L/14"};
  throw ContractError("unknown pretrained backend variant '" + variant + "'");
}

}  // namespace dpstyler
