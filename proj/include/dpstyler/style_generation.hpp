#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpstyler/embedding.hpp"
#include "dpstyler/rng.hpp"

namespace dpstyler {

enum class RandomDistribution { normal, xavier_uniform, xavier_normal, kaiming_normal, kaiming_uniform };
inline constexpr std::size_t kRandomDistributionCount = 5;

enum class StyleStrategy { random, stylemix, random_mix, gaussian, frozen };

/// How the bank's current contents were produced.
enum class RefreshMethod { none, random, stylemix, gaussian };

std::string_view to_string(RandomDistribution dist);
std::string_view to_string(StyleStrategy strategy);
std::string_view to_string(RefreshMethod method);
RandomDistribution parse_random_distribution(std::string_view name);
StyleStrategy parse_style_strategy(std::string_view name);

/// Adjective word vectors mixed by StyleMix. Labels unique, L >= 2, equal lengths.
class PredefinedLexicon {
 public:
  PredefinedLexicon(std::vector<std::string> labels, std::vector<StyleVector> vectors);

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return vectors_.front().size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<StyleVector>& vectors() const { return vectors_; }

 private:
  std::vector<std::string> labels_;
  std::vector<StyleVector> vectors_;
};

/// Built-in adjective list, used when no lexicon file is configured.
std::vector<std::string> default_lexicon_words();

/// One adjective per line; blank lines and '#' comments are skipped.
std::vector<std::string> load_lexicon_words(const std::filesystem::path& path);

struct StyleGenConfig {
  std::size_t K = 80;
  StyleStrategy strategy = StyleStrategy::random_mix;
  double alpha = 0.1;
  std::size_t L = 8;
  double gaussian_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StyleBank {
  std::vector<StyleVector> styles;
  int epoch_of_last_refresh = -1;
  RefreshMethod method_of_last_refresh = RefreshMethod::none;
  /// Per-style distribution when the last refresh used Random generation, else empty.
  std::vector<RandomDistribution> distributions;

  std::size_t size() const { return styles.size(); }
  bool operator==(const StyleBank&) const = default;
};

/// Draws a length-D vector from `dist`, viewing it as a 1 x D weight (fan_in = D, fan_out = 1).
StyleVector random_style(RandomDistribution dist, std::size_t dim, Rng& rng);

/// Uniform choice over the five Random distributions.
RandomDistribution pick_random_distribution(Rng& rng);

StyleVector gaussian_style(std::size_t dim, double stddev, Rng& rng);

/// Beta(alpha, alpha) draws normalized to sum 1. All-underflow draws are resampled.
std::vector<double> sample_mix_weights(std::size_t count, double alpha, Rng& rng);

/// Weighted sum of lexicon vectors with caller-provided weights.
StyleVector mix_styles(const PredefinedLexicon& lexicon, std::span<const double> weights);

StyleVector stylemix_style(const PredefinedLexicon& lexicon, double alpha, Rng& rng);

/// Bank used before the first refresh; it is what a frozen run keeps for its whole life.
/// Produced by the Random-Mix procedure on a dedicated stream.
StyleBank initial_bank(const StyleGenConfig& config, std::size_t dim, const PredefinedLexicon* lexicon);

/// Regenerates the bank for `epoch`. Streams are derived from (config.seed, epoch), so the
/// result depends only on its arguments. `lexicon` is required by stylemix and random_mix.
StyleBank refresh_bank(const StyleBank& bank, const StyleGenConfig& config, std::size_t dim,
                       const PredefinedLexicon* lexicon, int epoch);

}  // namespace dpstyler
