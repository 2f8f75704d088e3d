#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dpstyler/checkpoint.hpp"
#include "dpstyler/embedding.hpp"
#include "dpstyler/encoder.hpp"
#include "dpstyler/losses.hpp"
#include "dpstyler/rng.hpp"
#include "dpstyler/style_generation.hpp"
#include "dpstyler/style_removal.hpp"

namespace dpstyler {

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.008;
  double momentum = 0.9;
  std::size_t batch_size = 128;
  int ratio = 16;
  StyleGenConfig style_gen;
  ArcFaceConfig arcface;
  std::uint64_t seed = 0;
  /// Encode each (class, style) prompt once per epoch instead of once per batch.
  bool cache_features = true;

  void validate() const;
};

struct PromptPair {
  std::size_t class_index = 0;
  std::size_t style_index = 0;

  bool operator==(const PromptPair&) const = default;
  auto operator<=>(const PromptPair&) const = default;
};

/// The M x K (class, style) cross product, shuffled with `rng`.
std::vector<PromptPair> build_prompt_set(const TaskDefinition& task, const StyleBank& bank, Rng& rng);
std::vector<PromptPair> build_prompt_set(std::size_t classes, std::size_t styles, Rng& rng);

/// Classical momentum: v <- mu v - lr g, theta <- theta + v.
template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, double learning_rate, double momentum,
              std::span<T> velocity) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ContractError("sgd_step: parameter, gradient and velocity sizes differ");
  }
  const T mu = static_cast<T>(momentum);
  const T lr = static_cast<T>(learning_rate);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mu * velocity[i] - lr * grads[i];
    params[i] += velocity[i];
  }
}

template <std::floating_point T>
struct ObjectiveGradients {
  T mean_uncertainty{0};
  T mean_classification{0};
  T mean_total{0};
  Matrix<T> d_w1;
  Matrix<T> d_w2;
  Matrix<T> d_head;
};

/// Batch-mean L_U + L_C of R(v) for normalized encoder features v, with gradients for the
/// remover and the head. Nothing flows into the encoder or the probe.
/// Overflowed features or head weights give NaN losses and empty gradients.
template <std::floating_point T>
ObjectiveGradients<T> objective_gradients(const Matrix<T>& inputs, std::span<const std::size_t> targets,
                                          const StyleRemoverParams<T>& remover, const ClassifierHead<T>& head,
                                          const DomainProbe<T>& probe, const ArcFaceConfig& arcface) {
  if (inputs.cols() != remover.dim()) throw ContractError("objective: feature dimension != remover C");
  std::vector<RemoverTrace<T>> traces;
  traces.reserve(inputs.rows());
  Matrix<T> removed(inputs.rows(), inputs.cols());
  for (std::size_t b = 0; b < inputs.rows(); ++b) {
    traces.push_back(remover_forward_traced(inputs.row(b), remover));
    std::copy(traces.back().output.begin(), traces.back().output.end(), removed.row(b).begin());
  }
  const auto finite = [](std::span<const T> xs) {
    return std::all_of(xs.begin(), xs.end(), [](T x) { return std::isfinite(x); });
  };
  if (!finite(removed.flat()) || !finite(head.weights.flat())) {
    const T nan = std::numeric_limits<T>::quiet_NaN();
    return {nan, nan, nan, {}, {}, {}};
  }
  auto losses = loss_gradients(removed, probe, head, targets, arcface);
  RemoverGradients<T> grads{{}, Matrix<T>(remover.dim(), remover.hidden()), Matrix<T>(remover.hidden(), remover.dim())};
  for (std::size_t b = 0; b < inputs.rows(); ++b) {
    remover_backward_accumulate(inputs.row(b), remover, traces[b],
                                std::span<const T>(losses.d_features.row(b)), grads);
  }
  return {losses.mean_uncertainty, losses.mean_classification, losses.mean_total, std::move(grads.d_w1),
          std::move(grads.d_w2), std::move(losses.d_head)};
}

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double mean_uncertainty = 0.0;
  double mean_classification = 0.0;
  double mean_total = 0.0;
  double wall_seconds = 0.0;
  RefreshMethod refresh = RefreshMethod::none;
};

/// One metrics record as a single JSON line.
std::string metrics_json_line(const EpochMetrics& metrics);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> history;
  StyleBank final_bank;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// M x C head drawn from U(-1/sqrt(C), 1/sqrt(C)).
ClassifierHead<float> head_init(std::size_t classes, std::size_t dim, Rng& rng);

/// Normalized text features of every (class, style) pair, row m * K + i.
Matrix<float> encode_prompt_features(const TaskDefinition& task, const EncoderBackend& backend,
                                     const PromptTemplate& prompt, const StyleBank& bank);

DomainProbe<float> build_domain_probe(const EncoderBackend& backend, const StyleBank& bank);

/// Mean L_U over the rows of `features`, passed through `remover` first when it is given.
double mean_domain_uncertainty(const Matrix<float>& features, const DomainProbe<float>& probe,
                               const StyleRemoverParams<float>* remover = nullptr);

/// One-stage training of a remover and classifier for one template.
/// `lexicon` is required by the stylemix and random_mix strategies.
TrainResult train_one_model(const TaskDefinition& task, const EncoderBackend& backend, const PromptTemplate& prompt,
                            const TrainConfig& config, const PredefinedLexicon* lexicon,
                            const EpochCallback& on_epoch = {});

}  // namespace dpstyler
