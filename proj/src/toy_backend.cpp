#include "dpstyler/toy_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dpstyler/errors.hpp"
#include "dpstyler/rng.hpp"

namespace dpstyler {

namespace {

std::vector<double> normal_block(std::size_t count, double stddev, Rng rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(count);
  for (auto& x : out) x = stddev * dist(rng);
  return out;
}

JointEmbedding to_unit_float(const std::vector<double>& acc) {
  const auto unit = l2_normalize(acc);
  return JointEmbedding(unit.begin(), unit.end());
}

std::uint64_t image_key(const SyntheticImage& image) {
  std::string bytes(reinterpret_cast<const char*>(&image.class_index), sizeof(image.class_index));
  bytes.append(reinterpret_cast<const char*>(image.nuisance.data()), image.nuisance.size() * sizeof(float));
  return fnv1a(bytes);
}

const char* const kDomainNames[] = {"photo", "art", "cartoon", "sketch", "infograph", "quickdraw", "clipart", "real"};

}  // namespace

void ToyBackendSpec::validate() const {
  if (joint_dim == 0 || token_dim == 0 || max_classes == 0) throw ContractError("toy backend: zero dimension");
  if (noise < 0.0 || template_jitter < 0.0 || image_shift < 0.0 || image_style_gain < 0.0) {
    throw ContractError("toy backend: negative scale");
  }
  if (style_channels > joint_dim) throw ContractError("toy backend: style_channels exceeds joint_dim");
}

std::size_t ToyBackendSpec::effective_style_channels() const {
  return style_channels == 0 ? joint_dim : style_channels;
}

ToyBackend::ToyBackend(ToyBackendSpec spec, std::vector<std::string> vocabulary)
    : spec_(spec), vocabulary_(std::move(vocabulary)) {
  spec_.validate();
  if (vocabulary_.size() > spec_.max_classes) {
    throw ContractError("toy backend: " + std::to_string(vocabulary_.size()) + " classes exceed max_classes=" +
                        std::to_string(spec_.max_classes));
  }
  const double stddev = 1.0 / std::sqrt(static_cast<double>(spec_.joint_dim));
  content_ = normal_block(spec_.joint_dim * spec_.max_classes, stddev, make_rng(spec_.seed, "toy-content"));
  // style lives on the leading style_channels rows of V; the rest stay zero
  const std::size_t channels = spec_.effective_style_channels();
  style_map_ = normal_block(spec_.joint_dim * spec_.token_dim, 1.0 / std::sqrt(static_cast<double>(channels)),
                            make_rng(spec_.seed, "toy-style-map"));
  std::fill(style_map_.begin() + static_cast<std::ptrdiff_t>(channels * spec_.token_dim), style_map_.end(), 0.0);
}

BackendDescriptor ToyBackend::descriptor() const {
  return {spec_.joint_dim, spec_.token_dim, "toy"};
}

std::size_t ToyBackend::class_column(const std::string& class_name) const {
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (vocabulary_[i] == class_name) return i;
  }
  throw EncodeError("toy backend: class '" + class_name + "' is not in the vocabulary");
}

std::vector<double> ToyBackend::content_column(std::size_t column, std::uint64_t perturbation_key, double scale) const {
  const std::size_t dim = spec_.joint_dim;
  std::vector<double> out(dim);
  for (std::size_t c = 0; c < dim; ++c) out[c] = content_[c * spec_.max_classes + column];
  if (scale > 0.0) {
    const auto perturbation = normal_block(dim, 1.0 / std::sqrt(static_cast<double>(dim)),
                                           make_rng(spec_.seed ^ perturbation_key, "toy-perturb", column));
    for (std::size_t c = 0; c < dim; ++c) out[c] += scale * perturbation[c];
  }
  return out;
}

void ToyBackend::add_style_term(std::vector<double>& acc, const std::vector<float>& style, double gain) const {
  if (style.size() != spec_.token_dim) {
    throw ContractError("toy backend: style length " + std::to_string(style.size()) + " != D=" +
                        std::to_string(spec_.token_dim));
  }
  const double n = l2_norm(style);
  if (!(n >= kZeroNormThreshold)) return;
  for (std::size_t c = 0; c < spec_.joint_dim; ++c) {
    double dot_row = 0.0;
    for (std::size_t d = 0; d < spec_.token_dim; ++d) dot_row += style_map_[c * spec_.token_dim + d] * style[d];
    acc[c] += gain * dot_row / n;
  }
}

JointEmbedding ToyBackend::text_encode(const PromptTemplate& prompt, const std::string& class_name,
                                       const StyleVector* style) const {
  const auto tokens = tokenize_prompt(prompt.fill_class(class_name));
  const auto style_slots = static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), "S*"));
  if (style_slots != (style != nullptr ? 1u : 0u)) {
    throw ContractError("text_encode: prompt '" + prompt.pattern() + "' has " + std::to_string(style_slots) +
                        " style slots but " + (style != nullptr ? "a style was" : "no style was") + " given");
  }
  std::vector<double> acc(spec_.joint_dim, 0.0);
  if (prompt.has_class()) {
    acc = content_column(class_column(class_name), fnv1a(prompt.pattern()), spec_.template_jitter);
  }
  if (style != nullptr) add_style_term(acc, *style, 1.0);
  return to_unit_float(acc);
}

JointEmbedding ToyBackend::image_encode(const DecodedImage& image) const {
  const auto* synthetic = std::get_if<SyntheticImage>(&image);
  if (synthetic == nullptr) throw DecodeError("toy backend only encodes synthetic images");
  if (synthetic->class_index >= vocabulary_.size()) {
    throw DecodeError("synthetic image class " + std::to_string(synthetic->class_index) + " outside the vocabulary");
  }
  auto acc = content_column(synthetic->class_index, fnv1a("toy-image"), spec_.image_shift);
  add_style_term(acc, synthetic->nuisance, spec_.image_style_gain);
  if (spec_.noise > 0.0) {
    const auto eps = normal_block(spec_.joint_dim, spec_.noise / std::sqrt(static_cast<double>(spec_.joint_dim)),
                                  make_rng(spec_.seed, "toy-image-noise", image_key(*synthetic)));
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += eps[c];
  }
  return to_unit_float(acc);
}

DecodedImage ToyBackend::decode_image(const std::filesystem::path& path) const {
  auto image = read_synthetic_image(path);
  if (image.nuisance.size() != spec_.token_dim) {
    throw DecodeError(path.string() + ": nuisance length " + std::to_string(image.nuisance.size()) + " != D=" +
                      std::to_string(spec_.token_dim));
  }
  return image;
}

StyleVector ToyBackend::token_embedding_lookup(std::string_view word) const {
  const auto tokens = tokenize_prompt(word);
  if (tokens.size() != 1) {
    throw ContractError("token_embedding_lookup: '" + std::string(word) + "' is not a single token");
  }
  const auto values = normal_block(spec_.token_dim, 1.0 / std::sqrt(static_cast<double>(spec_.token_dim)),
                                   make_rng(spec_.seed, "toy-token", fnv1a(tokens.front())));
  return StyleVector(values.begin(), values.end());
}

void write_synthetic_image(const std::filesystem::path& path, const SyntheticImage& image) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "toyimg 1\nclass " << image.class_index << "\nnuisance";
  char buf[32];
  for (float x : image.nuisance) {
    std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(x));
    out << buf;
  }
  out << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

SyntheticImage read_synthetic_image(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DecodeError("cannot open " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "toyimg" || version != 1) {
    throw DecodeError(path.string() + ": not a toyimg v1 record");
  }
  std::string key;
  long long cls = -1;
  if (!(in >> key >> cls) || key != "class" || cls < 0) throw DecodeError(path.string() + ": bad class line");
  if (!(in >> key) || key != "nuisance") throw DecodeError(path.string() + ": missing nuisance line");
  std::string rest;
  std::getline(in, rest);
  std::istringstream values(rest);
  SyntheticImage image{static_cast<std::size_t>(cls), {}};
  float x = 0.0f;
  while (values >> x) {
    if (!std::isfinite(x)) throw DecodeError(path.string() + ": non-finite nuisance value");
    image.nuisance.push_back(x);
  }
  if (!values.eof()) throw DecodeError(path.string() + ": malformed nuisance value");
  if (image.nuisance.empty()) throw DecodeError(path.string() + ": empty nuisance vector");
  return image;
}

std::vector<ToyDomain> default_toy_domains(std::size_t token_dim, std::size_t count, std::uint64_t seed) {
  std::vector<ToyDomain> domains;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = i < std::size(kDomainNames) ? kDomainNames[i] : "domain" + std::to_string(i);
    const auto center = normal_block(token_dim, 1.0, make_rng(seed, "toy-domain", i));
    domains.push_back({name, StyleVector(center.begin(), center.end()), 0.3});
  }
  return domains;
}

std::size_t generate_toy_dataset(const std::filesystem::path& root, const std::vector<std::string>& class_names,
                                 const std::vector<ToyDomain>& domains, std::size_t per_class, std::uint64_t seed) {
  std::size_t written = 0;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const auto& domain = domains[d];
    auto rng = make_rng(seed, "toy-dataset", d);
    for (std::size_t m = 0; m < class_names.size(); ++m) {
      const auto dir = root / domain.name / class_names[m];
      std::filesystem::create_directories(dir);
      for (std::size_t n = 0; n < per_class; ++n) {
        SyntheticImage image{m, domain.nuisance_center};
        for (auto& x : image.nuisance) x = static_cast<float>(x + domain.jitter * unit(rng));
        char name[32];
        std::snprintf(name, sizeof(name), "%04zu.toyimg", n);
        write_synthetic_image(dir / name, image);
        ++written;
      }
    }
  }
  return written;
}

}  // namespace dpstyler
