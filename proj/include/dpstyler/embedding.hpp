#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <ranges>
#include <string>
#include <vector>

#include "dpstyler/errors.hpp"

namespace dpstyler {

/// Feature in the joint vision-language space (length C).
using JointEmbedding = std::vector<float>;
/// Pseudo-word vector in token-embedding space (length D).
using StyleVector = std::vector<float>;

/// Norms below this are treated as zero.
inline constexpr double kZeroNormThreshold = 1e-12;

template <typename R>
concept RealRange = std::ranges::contiguous_range<R> && std::ranges::sized_range<R> &&
                    std::floating_point<std::ranges::range_value_t<R>>;

template <RealRange R>
using real_t = std::ranges::range_value_t<R>;

template <RealRange A, RealRange B>
real_t<A> dot(const A& a, const B& b) {
  if (std::ranges::size(a) != std::ranges::size(b)) {
    throw ContractError("dot: length mismatch " + std::to_string(std::ranges::size(a)) + " vs " +
                        std::to_string(std::ranges::size(b)));
  }
  real_t<A> acc{0};
  auto ib = std::ranges::begin(b);
  for (auto x : a) acc += x * static_cast<real_t<A>>(*ib++);
  return acc;
}

template <RealRange A>
real_t<A> l2_norm(const A& a) {
  return std::sqrt(dot(a, a));
}

template <RealRange A>
std::vector<real_t<A>> l2_normalize(const A& v) {
  using T = real_t<A>;
  const T n = l2_norm(v);
  if (!(static_cast<double>(n) >= kZeroNormThreshold)) {
    throw DomainError("l2_normalize: zero or non-finite vector");
  }
  std::vector<T> out(std::ranges::begin(v), std::ranges::end(v));
  for (auto& x : out) x /= n;
  return out;
}

template <RealRange A, RealRange B>
real_t<A> cosine_similarity(const A& u, const B& v) {
  if (std::ranges::size(u) != std::ranges::size(v)) {
    throw ContractError("cosine_similarity: length mismatch");
  }
  const auto nu = l2_norm(u);
  const auto nv = static_cast<real_t<A>>(l2_norm(v));
  if (!(static_cast<double>(nu) >= kZeroNormThreshold) || !(static_cast<double>(nv) >= kZeroNormThreshold)) {
    throw DomainError("cosine_similarity: zero vector");
  }
  return std::clamp(dot(u, v) / (nu * nv), real_t<A>{-1}, real_t<A>{1});
}

/// Max-subtracted softmax.
template <RealRange A>
std::vector<real_t<A>> softmax(const A& z) {
  using T = real_t<A>;
  if (std::ranges::empty(z)) throw ContractError("softmax: empty input");
  T peak = -std::numeric_limits<T>::infinity();
  for (auto x : z) {
    if (!std::isfinite(x)) throw DomainError("softmax: non-finite logit");
    peak = std::max(peak, x);
  }
  std::vector<T> out;
  out.reserve(std::ranges::size(z));
  T sum{0};
  for (auto x : z) {
    out.push_back(std::exp(x - peak));
    sum += out.back();
  }
  for (auto& p : out) p /= sum;
  return out;
}

/// Index of the largest entry; ties go to the lowest index.
template <RealRange A>
std::size_t argmax(const A& v) {
  if (std::ranges::empty(v)) throw ContractError("argmax: empty input");
  std::size_t best = 0;
  auto it = std::ranges::begin(v);
  for (std::size_t i = 1; i < std::ranges::size(v); ++i) {
    if (it[i] > it[best]) best = i;
  }
  return best;
}

/// Ordered, unique class names of a task (M >= 2).
class TaskDefinition {
 public:
  explicit TaskDefinition(std::vector<std::string> class_names);

  std::size_t size() const { return class_names_.size(); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const std::string& name(std::size_t index) const { return class_names_.at(index); }
  /// Throws ContractError for unknown names.
  std::size_t index_of(const std::string& name) const;

  bool operator==(const TaskDefinition&) const = default;

 private:
  std::vector<std::string> class_names_;
};

/// A text prompt pattern with a `[class]` slot and, for training prompts, one `S*` style slot.
class PromptTemplate {
 public:
  static constexpr const char* kClassPlaceholder = "[class]";
  static constexpr const char* kStylePlaceholder = "S*";

  /// Requires exactly one class placeholder and exactly one style placeholder.
  static PromptTemplate styled(std::string pattern, std::string id = {});
  /// Requires exactly one class placeholder and no style placeholder (zero-shot prompts).
  static PromptTemplate content_only(std::string pattern, std::string id = {});
  /// Requires exactly one style placeholder and no class placeholder (domain probe prompts).
  static PromptTemplate style_only(std::string pattern, std::string id = {});

  const std::string& pattern() const { return pattern_; }
  const std::string& id() const { return id_; }
  bool has_class() const { return has_class_; }
  bool has_style() const { return has_style_; }

  /// Pattern with the class slot filled in; the style slot is left as a token.
  std::string fill_class(const std::string& class_name) const;

  /// Lowercase alphanumeric slug of a pattern, used as the default id.
  static std::string slug(const std::string& pattern);

 private:
  PromptTemplate(std::string pattern, std::string id, bool has_class, bool has_style);

  std::string pattern_;
  std::string id_;
  bool has_class_ = false;
  bool has_style_ = false;
};

/// The three default training templates.
std::vector<PromptTemplate> default_templates();

/// Style-only prompt used for the domain probe.
PromptTemplate style_probe_template();

}  // namespace dpstyler
