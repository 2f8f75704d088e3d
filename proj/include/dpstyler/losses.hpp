#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <span>
#include <type_traits>
#include <vector>

#include "dpstyler/embedding.hpp"
#include "dpstyler/errors.hpp"
#include "dpstyler/matrix.hpp"

namespace dpstyler {

/// Linear classifier used in cosine space: one weight row per class.
template <std::floating_point T>
struct ClassifierHead {
  Matrix<T> weights;  // M x C

  std::size_t classes() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }

  void validate() const {
    if (weights.rows() == 0 || weights.cols() == 0) throw ContractError("classifier head is empty");
    for (std::size_t m = 0; m < weights.rows(); ++m) {
      if (!(static_cast<double>(l2_norm(weights.row(m))) >= kZeroNormThreshold)) {
        throw DomainError("classifier head row " + std::to_string(m) + " has zero norm");
      }
    }
  }

  template <typename U>
  ClassifierHead<U> cast() const {
    return {weights.template cast<U>()};
  }

  bool operator==(const ClassifierHead&) const = default;
};

struct ArcFaceConfig {
  double scale = 5.0;
  double margin = 0.5;

  void validate() const {
    if (!(scale > 0.0)) throw ContractError("ArcFace scale must be > 0");
    if (!(margin >= 0.0 && margin < std::numbers::pi)) throw ContractError("ArcFace margin must lie in [0, pi)");
  }
};

/// Unit-normalized text features of the K current style-only prompts.
template <std::floating_point T>
class DomainProbe {
 public:
  DomainProbe() = default;
  explicit DomainProbe(const std::vector<std::vector<T>>& style_features) {
    if (style_features.empty()) throw ContractError("domain probe needs at least one style feature");
    features_ = Matrix<T>(style_features.size(), style_features.front().size());
    for (std::size_t k = 0; k < style_features.size(); ++k) {
      if (style_features[k].size() != features_.cols()) throw ContractError("domain probe: ragged features");
      const auto unit = l2_normalize(style_features[k]);
      std::copy(unit.begin(), unit.end(), features_.row(k).begin());
    }
  }

  std::size_t size() const { return features_.rows(); }
  std::size_t dim() const { return features_.cols(); }
  const Matrix<T>& features() const { return features_; }

 private:
  Matrix<T> features_;
};

/// z_j = cos(feature, probe_j).
template <std::floating_point T>
std::vector<T> domain_logits(std::type_identity_t<std::span<const T>> feature, const DomainProbe<T>& probe) {
  if (probe.size() == 0) throw ContractError("domain_logits: empty probe");
  if (feature.size() != probe.dim()) throw ContractError("domain_logits: dimension mismatch");
  const auto unit = l2_normalize(feature);
  std::vector<T> z(probe.size());
  for (std::size_t j = 0; j < probe.size(); ++j) z[j] = dot(unit, probe.features().row(j));
  return z;
}

/// Sum_j p_j ln p_j with 0 ln 0 = 0. Lies in [-ln K, 0].
template <RealRange P>
real_t<P> domain_uncertainty_loss(const P& p) {
  using T = real_t<P>;
  if (std::ranges::empty(p)) throw ContractError("domain_uncertainty_loss: empty distribution");
  T sum{0};
  T loss{0};
  for (auto x : p) {
    if (x < T{0}) throw ContractError("domain_uncertainty_loss: negative probability");
    sum += x;
    if (x > T{0}) loss += x * std::log(x);
  }
  if (std::abs(static_cast<double>(sum) - 1.0) > 1e-5) {
    throw ContractError("domain_uncertainty_loss: probabilities sum to " + std::to_string(sum));
  }
  return loss;
}

template <std::floating_point T>
struct ArcFaceResult {
  T loss;
  std::vector<T> logits;
};

namespace detail {

template <std::floating_point T>
T clamp_cosine(T c) {
  constexpr T kEdge = static_cast<T>(1e-7);
  return std::clamp(c, T{-1} + kEdge, T{1} - kEdge);
}

/// Cosines between the feature and every normalized head row.
template <std::floating_point T>
std::vector<T> head_cosines(std::type_identity_t<std::span<const T>> unit_feature, const ClassifierHead<T>& head,
                            std::vector<T>* row_norms = nullptr) {
  std::vector<T> cosines(head.classes());
  if (row_norms != nullptr) row_norms->resize(head.classes());
  for (std::size_t m = 0; m < head.classes(); ++m) {
    const auto row = head.weights.row(m);
    const T n = l2_norm(row);
    if (!(static_cast<double>(n) >= kZeroNormThreshold)) throw DomainError("classifier head row has zero norm");
    cosines[m] = dot(unit_feature, row) / n;
    if (row_norms != nullptr) (*row_norms)[m] = n;
  }
  return cosines;
}

template <std::floating_point T>
T log_sum_exp(std::span<const T> z) {
  T peak = z[0];
  for (auto x : z) peak = std::max(peak, x);
  T acc{0};
  for (auto x : z) acc += std::exp(x - peak);
  return peak + std::log(acc);
}

}  // namespace detail

/// ArcFace: target logit s*cos(theta_y + m), others s*cos(theta_j), cross-entropy over them.
template <std::floating_point T>
ArcFaceResult<T> arcface_loss(std::type_identity_t<std::span<const T>> feature, const ClassifierHead<T>& head, std::size_t target,
                              const ArcFaceConfig& config) {
  config.validate();
  if (target >= head.classes()) {
    throw ContractError("arcface_loss: target " + std::to_string(target) + " out of range for M=" +
                        std::to_string(head.classes()));
  }
  if (feature.size() != head.dim()) throw ContractError("arcface_loss: dimension mismatch");
  const auto unit = l2_normalize(feature);
  const auto cosines = detail::head_cosines(std::span<const T>(unit), head);
  const T s = static_cast<T>(config.scale);
  std::vector<T> logits(cosines.size());
  for (std::size_t m = 0; m < cosines.size(); ++m) logits[m] = s * cosines[m];
  // The 1e-7 edge clamp lives in the backward pass only, where 1/sin would blow up.
  // Here cos(theta + m) stays exact at perfect alignment.
  const T c = std::clamp(cosines[target], T{-1}, T{1});
  const T sine = std::sqrt(std::clamp(T{1} - c * c, T{0}, T{1}));
  logits[target] = s * (c * static_cast<T>(std::cos(config.margin)) - sine * static_cast<T>(std::sin(config.margin)));
  const T loss = detail::log_sum_exp(std::span<const T>(logits)) - logits[target];
  return {loss, logits};
}

template <std::floating_point T>
T total_loss(T uncertainty, T classification) {
  return uncertainty + classification;
}

template <std::floating_point T>
struct SampleLoss {
  T value;
  std::vector<T> d_feature;
};

/// Domain-uncertainty loss of one removed feature and its gradient w.r.t. that feature.
template <std::floating_point T>
SampleLoss<T> domain_uncertainty_with_grad(std::type_identity_t<std::span<const T>> feature, const DomainProbe<T>& probe) {
  const T n = l2_norm(feature);
  const auto z = domain_logits(feature, probe);
  const auto p = softmax(z);
  const T loss = domain_uncertainty_loss(p);
  // dL/dz_j = p_j (ln p_j - L)
  std::vector<T> d_unit(feature.size(), T{0});
  for (std::size_t j = 0; j < p.size(); ++j) {
    const T dz = p[j] > T{0} ? p[j] * (std::log(p[j]) - loss) : T{0};
    const auto q = probe.features().row(j);
    for (std::size_t c = 0; c < feature.size(); ++c) d_unit[c] += dz * q[c];
  }
  // d unit / d feature = (I - u u^T) / |feature|
  std::vector<T> d_feature(feature.size());
  T radial{0};
  for (std::size_t c = 0; c < feature.size(); ++c) radial += d_unit[c] * feature[c] / n;
  for (std::size_t c = 0; c < feature.size(); ++c) d_feature[c] = (d_unit[c] - radial * feature[c] / n) / n;
  return {loss, d_feature};
}

/// ArcFace loss of one feature; returns d/d feature and adds `weight` * d/d head into `d_head`.
template <std::floating_point T>
SampleLoss<T> arcface_with_grad(std::type_identity_t<std::span<const T>> feature, const ClassifierHead<T>& head, std::size_t target,
                                const ArcFaceConfig& config, Matrix<T>& d_head, T weight) {
  const auto result = arcface_loss(feature, head, target, config);
  const T n = l2_norm(feature);
  std::vector<T> unit(feature.begin(), feature.end());
  for (auto& x : unit) x /= n;
  std::vector<T> row_norms;
  const auto cosines = detail::head_cosines(std::span<const T>(unit), head, &row_norms);
  const auto probs = softmax(result.logits);
  const T s = static_cast<T>(config.scale);

  // dL/dcos_m
  std::vector<T> d_cos(cosines.size());
  for (std::size_t m = 0; m < cosines.size(); ++m) {
    const T d_logit = probs[m] - (m == target ? T{1} : T{0});
    if (m != target) {
      d_cos[m] = d_logit * s;
      continue;
    }
    const T raw = cosines[m];
    const T c = detail::clamp_cosine(raw);
    if (c != raw) {
      d_cos[m] = T{0};
      continue;
    }
    const T sine = std::sqrt(std::clamp(T{1} - c * c, T{0}, T{1}));
    const T slope = s * (static_cast<T>(std::cos(config.margin)) + c * static_cast<T>(std::sin(config.margin)) / sine);
    d_cos[m] = d_logit * slope;
  }

  std::vector<T> d_unit(feature.size(), T{0});
  for (std::size_t m = 0; m < cosines.size(); ++m) {
    const auto row = head.weights.row(m);
    auto g_row = d_head.row(m);
    const T rn = row_norms[m];
    for (std::size_t c = 0; c < feature.size(); ++c) {
      const T w_unit = row[c] / rn;
      d_unit[c] += d_cos[m] * w_unit;
      g_row[c] += weight * d_cos[m] * (unit[c] - cosines[m] * w_unit) / rn;
    }
  }
  T radial{0};
  for (std::size_t c = 0; c < feature.size(); ++c) radial += d_unit[c] * unit[c];
  std::vector<T> d_feature(feature.size());
  for (std::size_t c = 0; c < feature.size(); ++c) d_feature[c] = (d_unit[c] - radial * unit[c]) / n;
  return {result.loss, d_feature};
}

template <std::floating_point T>
struct LossGradients {
  T mean_uncertainty{0};
  T mean_classification{0};
  T mean_total{0};
  Matrix<T> d_features;  // B x C, gradient of the batch-mean total loss
  Matrix<T> d_head;      // M x C
};

/// Batch-mean of L_U + L_C over removed features and its gradients. The probe is a constant.
template <std::floating_point T>
LossGradients<T> loss_gradients(const Matrix<T>& features, const DomainProbe<T>& probe, const ClassifierHead<T>& head,
                                std::span<const std::size_t> targets, const ArcFaceConfig& config) {
  const std::size_t batch = features.rows();
  if (batch == 0) throw ContractError("loss_gradients: empty batch");
  if (targets.size() != batch) throw ContractError("loss_gradients: target count != batch size");
  if (features.cols() != head.dim() || features.cols() != probe.dim()) {
    throw ContractError("loss_gradients: feature dimension mismatch");
  }
  LossGradients<T> out{T{0}, T{0}, T{0}, Matrix<T>(batch, features.cols()), Matrix<T>(head.classes(), head.dim())};
  const T inv = T{1} / static_cast<T>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto u = features.row(b);
    const auto domain = domain_uncertainty_with_grad(u, probe);
    const auto cls = arcface_with_grad(u, head, targets[b], config, out.d_head, inv);
    out.mean_uncertainty += domain.value;
    out.mean_classification += cls.value;
    auto g = out.d_features.row(b);
    for (std::size_t c = 0; c < g.size(); ++c) g[c] = inv * (domain.d_feature[c] + cls.d_feature[c]);
  }
  out.mean_uncertainty *= inv;
  out.mean_classification *= inv;
  out.mean_total = total_loss(out.mean_uncertainty, out.mean_classification);
  return out;
}

}  // namespace dpstyler
