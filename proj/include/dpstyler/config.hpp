#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpstyler/encoder.hpp"
#include "dpstyler/inference.hpp"
#include "dpstyler/style_generation.hpp"
#include "dpstyler/toy_backend.hpp"
#include "dpstyler/trainer.hpp"

namespace dpstyler {

/// Environment variable consulted when the config names no external weight path.
inline constexpr const char* kBackendWeightsEnv = "DPSTYLER_BACKEND_WEIGHTS";

struct BackendSection {
  std::string variant = "toy";  // toy | external
  ToyBackendSpec toy;
  ExternalBackendConfig external;
};

struct EvalSection {
  std::filesystem::path manifest;
  Fusion fusion = Fusion::max;
};

struct RunConfig {
  std::vector<std::string> classes;
  BackendSection backend;
  TrainConfig train;
  /// Words for the StyleMix lexicon; empty means the built-in list.
  std::filesystem::path lexicon;
  std::vector<std::string> templates;
  EvalSection eval;
  std::filesystem::path output = "runs";
  bool parallel_templates = false;

  TaskDefinition task() const { return TaskDefinition(classes); }
  std::vector<PromptTemplate> prompt_templates() const;
};

/// Full document with every default filled in.
nlohmann::json default_config_json();

/// Merges `document` over the defaults. Unknown keys and wrong types are ContractErrors.
/// Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& document, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& config);

/// 16 hex digits of FNV-1a over the canonical merged document.
std::string config_fingerprint(const RunConfig& config);

/// Sets the master seed and the style-stream seed together.
void override_seed(RunConfig& config, std::uint64_t seed);

/// Throws ContractError naming the first referenced path that does not exist.
void check_referenced_paths(const RunConfig& config);

std::unique_ptr<EncoderBackend> make_backend(const RunConfig& config);

/// Lexicon encoded through `backend`, or nullopt when the strategy never mixes.
std::optional<PredefinedLexicon> make_lexicon(const RunConfig& config, const EncoderBackend& backend);

}  // namespace dpstyler
