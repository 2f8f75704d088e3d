#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpstyler/encoder.hpp"

namespace dpstyler {

/// Seeded desk-scale encoder.
///   text:  l2n(U_t e_class + V l2n(style))
///   image: l2n(U_img e_class + gain * V l2n(nuisance) + eps)
/// U_t = U_0 + template_jitter * P_t, U_img = U_0 + image_shift * P_img; all entries N(0, 1/sqrt(C)).
struct ToyBackendSpec {
  std::size_t joint_dim = 64;
  std::size_t token_dim = 32;
  std::size_t max_classes = 16;
  std::uint64_t seed = 0;
  double noise = 0.1;
  double template_jitter = 0.1;
  double image_shift = 0.1;
  double image_style_gain = 1.0;
  /// Rows of V that carry style. 0 means every row (dense V).
  std::size_t style_channels = 0;

  void validate() const;
  std::size_t effective_style_channels() const;
};

class ToyBackend final : public EncoderBackend {
 public:
  /// `vocabulary` maps class names to content columns (at most max_classes names).
  ToyBackend(ToyBackendSpec spec, std::vector<std::string> vocabulary);

  BackendDescriptor descriptor() const override;
  JointEmbedding text_encode(const PromptTemplate& prompt, const std::string& class_name,
                             const StyleVector* style) const override;
  JointEmbedding image_encode(const DecodedImage& image) const override;
  DecodedImage decode_image(const std::filesystem::path& path) const override;
  StyleVector token_embedding_lookup(std::string_view word) const override;

  const ToyBackendSpec& spec() const { return spec_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

 private:
  std::size_t class_column(const std::string& class_name) const;
  std::vector<double> content_column(std::size_t column, std::uint64_t perturbation_key, double scale) const;
  void add_style_term(std::vector<double>& acc, const std::vector<float>& style, double gain) const;

  ToyBackendSpec spec_;
  std::vector<std::string> vocabulary_;
  std::vector<double> content_;  // U_0, C x max_classes
  std::vector<double> style_map_;  // V, C x D
};

void write_synthetic_image(const std::filesystem::path& path, const SyntheticImage& image);
SyntheticImage read_synthetic_image(const std::filesystem::path& path);

struct ToyDomain {
  std::string name;
  StyleVector nuisance_center;
  double jitter = 0.3;
};

/// Domains named photo/art/cartoon/sketch/... with seeded nuisance centers.
std::vector<ToyDomain> default_toy_domains(std::size_t token_dim, std::size_t count, std::uint64_t seed);

/// Writes root/<domain>/<class>/<n>.toyimg files; returns the number of images written.
std::size_t generate_toy_dataset(const std::filesystem::path& root, const std::vector<std::string>& class_names,
                                 const std::vector<ToyDomain>& domains, std::size_t per_class, std::uint64_t seed);

}  // namespace dpstyler
