#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dpstyler/checkpoint.hpp"
#include "dpstyler/encoder.hpp"
#include "dpstyler/manifest.hpp"

namespace dpstyler {

enum class Fusion { max, average };
enum class ZeroShotPrompt { C, PC };

std::string_view to_string(Fusion fusion);
Fusion parse_fusion(std::string_view name);

/// cos(R(x), w_m) for every class, times `scale`. No margin at inference.
std::vector<float> predict_scores(const JointEmbedding& image_embedding, const Checkpoint& member, double scale = 1.0);

/// N trained members that agree on C and on the class list.
struct EnsembleBundle {
  std::vector<Checkpoint> members;
  Fusion fusion = Fusion::max;

  /// Throws ContractError if members are missing or incompatible.
  void validate() const;
};

/// Fuses an N x M score table. Max: class of the single largest score. Average: argmax of the
/// per-class mean. Ties go to the lowest class index, then the lowest member index.
std::size_t fuse_scores(const std::vector<std::vector<float>>& scores, Fusion fusion);

std::size_t ensemble_predict(const JointEmbedding& image_embedding, const EnsembleBundle& bundle);

/// "[class]" for C, "a photo of a [class]" for PC.
PromptTemplate zeroshot_template(ZeroShotPrompt style);

/// Zero-shot classifier with the class prompt features encoded once.
class ZeroShotClassifier {
 public:
  ZeroShotClassifier(const EncoderBackend& backend, const TaskDefinition& task, ZeroShotPrompt style);
  std::size_t predict(const JointEmbedding& image_embedding) const;

 private:
  std::vector<std::vector<float>> class_features_;
};

std::size_t zeroshot_predict(const JointEmbedding& image_embedding, const EncoderBackend& backend,
                             const TaskDefinition& task, ZeroShotPrompt style);

using Predictor = std::function<std::size_t(const JointEmbedding&)>;

struct DomainAccuracy {
  std::string domain;
  std::size_t correct = 0;
  std::size_t total = 0;   // decoded images
  std::size_t errors = 0;  // images that failed to decode
  double accuracy = 0.0;   // percent
};

struct EvalReport {
  std::string label;
  std::vector<DomainAccuracy> domains;
  double average = 0.0;
  std::string config_fingerprint;
  std::uint64_t seed = 0;

  std::size_t total_errors() const;
  /// One JSON object.
  std::string to_json() const;
  /// Aligned human-readable table.
  std::string to_table() const;
};

EvalReport evaluate(const DatasetManifest& manifest, const EncoderBackend& backend, const Predictor& predictor);

/// Writes path,domain,class,raw_0..raw_{C-1}[,removed_0..] rows; returns the number of rows.
/// Raw columns are the normalized image feature, removed columns R(raw).
std::size_t export_embeddings(const DatasetManifest& manifest, const EncoderBackend& backend,
                              const Checkpoint* checkpoint, const std::vector<std::string>& class_names,
                              const std::filesystem::path& out_path);

}  // namespace dpstyler
