#include "dpstyler/style_generation.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include "dpstyler/errors.hpp"

namespace dpstyler {

namespace {

constexpr std::array<std::string_view, 5> kDistNames = {"normal", "xavier_uniform", "xavier_normal",
                                                        "kaiming_normal", "kaiming_uniform"};
constexpr std::array<std::string_view, 5> kStrategyNames = {"random", "stylemix", "random_mix", "gaussian",
                                                            "frozen"};
constexpr int kMaxMixRetries = 64;

StyleVector uniform_vector(std::size_t dim, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  StyleVector out(dim);
  for (auto& x : out) x = static_cast<float>(dist(rng));
  return out;
}

StyleVector normal_vector(std::size_t dim, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  StyleVector out(dim);
  for (auto& x : out) x = static_cast<float>(stddev * dist(rng));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void fill_random(StyleBank& out, std::size_t count, std::size_t dim, Rng& rng) {
  out.method_of_last_refresh = RefreshMethod::random;
  for (std::size_t i = 0; i < count; ++i) {
    const auto dist = pick_random_distribution(rng);
    out.distributions.push_back(dist);
    out.styles.push_back(random_style(dist, dim, rng));
  }
}

void fill_stylemix(StyleBank& out, std::size_t count, std::size_t dim, const StyleGenConfig& config,
                   const PredefinedLexicon* lexicon, Rng& rng) {
  if (lexicon == nullptr) throw ContractError("stylemix generation needs a lexicon");
  if (lexicon->dim() != dim) throw ContractError("lexicon vectors do not match the token dimension");
  if (lexicon->size() != config.L) {
    throw ContractError("lexicon has " + std::to_string(lexicon->size()) + " words but L=" + std::to_string(config.L));
  }
  out.method_of_last_refresh = RefreshMethod::stylemix;
  for (std::size_t i = 0; i < count; ++i) out.styles.push_back(stylemix_style(*lexicon, config.alpha, rng));
}

void fill_gaussian(StyleBank& out, std::size_t count, std::size_t dim, double stddev, Rng& rng) {
  out.method_of_last_refresh = RefreshMethod::gaussian;
  for (std::size_t i = 0; i < count; ++i) out.styles.push_back(gaussian_style(dim, stddev, rng));
}

// One fair coin from `coin`, then every style with the chosen method from `draws`.
void fill_random_mix(StyleBank& out, const StyleGenConfig& config, std::size_t dim, const PredefinedLexicon* lexicon,
                     Rng& coin, Rng& draws) {
  std::bernoulli_distribution fair(0.5);
  if (fair(coin)) {
    fill_random(out, config.K, dim, draws);
  } else {
    fill_stylemix(out, config.K, dim, config, lexicon, draws);
  }
}

}  // namespace

std::string_view to_string(RandomDistribution dist) { return kDistNames[static_cast<std::size_t>(dist)]; }
std::string_view to_string(StyleStrategy strategy) { return kStrategyNames[static_cast<std::size_t>(strategy)]; }

std::string_view to_string(RefreshMethod method) {
  switch (method) {
    case RefreshMethod::none: return "none";
    case RefreshMethod::random: return "random";
    case RefreshMethod::stylemix: return "stylemix";
    case RefreshMethod::gaussian: return "gaussian";
  }
  return "unknown";
}

RandomDistribution parse_random_distribution(std::string_view name) {
  for (std::size_t i = 0; i < kDistNames.size(); ++i) {
    if (kDistNames[i] == name) return static_cast<RandomDistribution>(i);
  }
  throw ContractError("unknown random distribution '" + std::string(name) + "'");
}

StyleStrategy parse_style_strategy(std::string_view name) {
  for (std::size_t i = 0; i < kStrategyNames.size(); ++i) {
    if (kStrategyNames[i] == name) return static_cast<StyleStrategy>(i);
  }
  throw ContractError("unknown style strategy '" + std::string(name) + "'");
}

PredefinedLexicon::PredefinedLexicon(std::vector<std::string> labels, std::vector<StyleVector> vectors)
    : labels_(std::move(labels)), vectors_(std::move(vectors)) {
  if (labels_.size() != vectors_.size()) throw ContractError("lexicon: label/vector count mismatch");
  if (labels_.size() < 2) throw ContractError("lexicon needs at least two entries");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!seen.insert(labels_[i]).second) throw ContractError("lexicon: duplicate label '" + labels_[i] + "'");
    if (vectors_[i].size() != vectors_.front().size() || vectors_[i].empty()) {
      throw ContractError("lexicon: vector length mismatch at '" + labels_[i] + "'");
    }
  }
}

std::vector<std::string> default_lexicon_words() {
  return {"white", "cartoon", "sketchy", "painted", "blurry", "bright", "dark", "colorful"};
}

std::vector<std::string> load_lexicon_words(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open lexicon file " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

void StyleGenConfig::validate() const {
  if (K < 1) throw ContractError("style count K must be >= 1");
  if (!(alpha > 0.0)) throw ContractError("Beta concentration alpha must be > 0");
  if (!(gaussian_std > 0.0)) throw ContractError("gaussian_std must be > 0");
  if ((strategy == StyleStrategy::stylemix || strategy == StyleStrategy::random_mix) && L < 2) {
    throw ContractError("lexicon size L must be >= 2");
  }
}

StyleVector random_style(RandomDistribution dist, std::size_t dim, Rng& rng) {
  if (dim == 0) throw ContractError("random_style: zero dimension");
  const double fan_in = static_cast<double>(dim);
  const double fan_out = 1.0;
  switch (dist) {
    case RandomDistribution::normal:
      return normal_vector(dim, 1.0, rng);
    case RandomDistribution::xavier_uniform:
      return uniform_vector(dim, std::sqrt(6.0 / (fan_in + fan_out)), rng);
    case RandomDistribution::xavier_normal:
      return normal_vector(dim, std::sqrt(2.0 / (fan_in + fan_out)), rng);
    // Kaiming with the ReLU gain sqrt(2), fan_in mode.
    case RandomDistribution::kaiming_normal:
      return normal_vector(dim, std::sqrt(2.0 / fan_in), rng);
    case RandomDistribution::kaiming_uniform:
      return uniform_vector(dim, std::sqrt(6.0 / fan_in), rng);
  }
  throw ContractError("random_style: unknown distribution");
}

RandomDistribution pick_random_distribution(Rng& rng) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(kRandomDistributionCount) - 1);
  return static_cast<RandomDistribution>(pick(rng));
}

StyleVector gaussian_style(std::size_t dim, double stddev, Rng& rng) {
  if (!(stddev > 0.0)) throw ContractError("gaussian_style: std must be > 0");
  return normal_vector(dim, stddev, rng);
}

std::vector<double> sample_mix_weights(std::size_t count, double alpha, Rng& rng) {
  if (count == 0) throw ContractError("sample_mix_weights: empty lexicon");
  if (!(alpha > 0.0)) throw ContractError("sample_mix_weights: alpha must be > 0");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> weights(count);
  for (int attempt = 0; attempt < kMaxMixRetries; ++attempt) {
    double total = 0.0;
    bool usable = false;
    for (auto& w : weights) {
      // Beta(alpha, alpha) as X / (X + Y) with X, Y ~ Gamma(alpha, 1).
      const double x = gamma(rng);
      const double y = gamma(rng);
      w = (x + y) > 0.0 ? x / (x + y) : 0.0;
      usable = usable || w >= kZeroNormThreshold;
      total += w;
    }
    if (!usable) continue;
    for (auto& w : weights) w /= total;
    return weights;
  }
  throw ContractError("sample_mix_weights: every Beta draw underflowed");
}

StyleVector mix_styles(const PredefinedLexicon& lexicon, std::span<const double> weights) {
  if (weights.size() != lexicon.size()) throw ContractError("mix_styles: weight count != lexicon size");
  std::vector<double> acc(lexicon.dim(), 0.0);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const auto& v = lexicon.vectors()[j];
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += weights[j] * static_cast<double>(v[d]);
  }
  return StyleVector(acc.begin(), acc.end());
}

StyleVector stylemix_style(const PredefinedLexicon& lexicon, double alpha, Rng& rng) {
  const auto weights = sample_mix_weights(lexicon.size(), alpha, rng);
  return mix_styles(lexicon, weights);
}

StyleBank initial_bank(const StyleGenConfig& config, std::size_t dim, const PredefinedLexicon* lexicon) {
  config.validate();
  auto coin = make_rng(config.seed, "style-init-coin");
  auto draws = make_rng(config.seed, "style-init-draws");
  StyleBank out;
  out.styles.reserve(config.K);
  if (lexicon != nullptr) {
    fill_random_mix(out, config, dim, lexicon, coin, draws);
  } else {
    fill_random(out, config.K, dim, draws);
  }
  out.epoch_of_last_refresh = -1;
  return out;
}

StyleBank refresh_bank(const StyleBank& bank, const StyleGenConfig& config, std::size_t dim,
                       const PredefinedLexicon* lexicon, int epoch) {
  config.validate();
  if (config.strategy == StyleStrategy::frozen) return bank;

  const auto index = static_cast<std::uint64_t>(static_cast<std::int64_t>(epoch));
  auto coin = make_rng(config.seed, "style-coin", index);
  auto draws = make_rng(config.seed, "style-draws", index);
  StyleBank out;
  out.styles.reserve(config.K);
  switch (config.strategy) {
    case StyleStrategy::random: fill_random(out, config.K, dim, draws); break;
    case StyleStrategy::stylemix: fill_stylemix(out, config.K, dim, config, lexicon, draws); break;
    case StyleStrategy::gaussian: fill_gaussian(out, config.K, dim, config.gaussian_std, draws); break;
    case StyleStrategy::random_mix: fill_random_mix(out, config, dim, lexicon, coin, draws); break;
    case StyleStrategy::frozen: break;
  }
  out.epoch_of_last_refresh = epoch;
  return out;
}

}  // namespace dpstyler
