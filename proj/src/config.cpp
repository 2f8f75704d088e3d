#include "dpstyler/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "dpstyler/errors.hpp"
#include "dpstyler/rng.hpp"

namespace dpstyler {

using nlohmann::json;

namespace {

void merge_checked(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ContractError("config: " + where + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    auto it = base.find(key);
    if (it == base.end()) throw ContractError("config: unknown key '" + path + "'");
    if (it->is_object()) {
      merge_checked(*it, value, path);
      continue;
    }
    const bool numeric_ok = it->is_number() && value.is_number();
    if (it->type() != value.type() && !numeric_ok) {
      throw ContractError("config: '" + path + "' expects " + std::string(it->type_name()) + ", got " +
                          value.type_name());
    }
    *it = value;
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
  if (text.empty()) return {};
  std::filesystem::path p(text);
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

template <typename T>
T get(const json& j, const char* key, const std::string& section) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ContractError("config: " + section + "." + key + ": " + e.what());
  }
}

std::size_t get_count(const json& j, const char* key, const std::string& section) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ContractError("config: " + section + "." + key + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

std::vector<PromptTemplate> RunConfig::prompt_templates() const {
  std::vector<PromptTemplate> out;
  out.reserve(templates.size());
  for (const auto& pattern : templates) out.push_back(PromptTemplate::styled(pattern));
  return out;
}

json default_config_json() {
  const ToyBackendSpec toy;
  const TrainConfig train;
  const StyleGenConfig& styles = train.style_gen;
  json templates = json::array();
  for (const auto& t : default_templates()) templates.push_back(t.pattern());
  return {
      {"classes", json::array()},
      {"backend",
       {{"variant", "toy"},
        {"C", toy.joint_dim},
        {"D", toy.token_dim},
        {"seed", toy.seed},
        {"noise", toy.noise},
        {"template_jitter", toy.template_jitter},
        {"image_shift", toy.image_shift},
        {"image_style_gain", toy.image_style_gain},
        {"style_channels", toy.style_channels},
        {"external_variant", "RN50"},
        {"weights", ""}}},
      {"train",
       {{"epochs", train.epochs},
        {"learning_rate", train.learning_rate},
        {"momentum", train.momentum},
        {"batch_size", train.batch_size},
        {"ratio", train.ratio},
        {"seed", train.seed},
        {"arcface", {{"scale", train.arcface.scale}, {"margin", train.arcface.margin}}},
        {"parallel_templates", false}}},
      {"styles",
       {{"K", styles.K},
        {"strategy", std::string(to_string(styles.strategy))},
        {"alpha", styles.alpha},
        {"L", styles.L},
        {"gaussian_std", styles.gaussian_std},
        {"seed", styles.seed},
        {"lexicon", ""}}},
      {"templates", templates},
      {"eval", {{"manifest", ""}, {"fusion", "max"}}},
      {"output", "runs"},
  };
}

RunConfig parse_run_config(const json& document, const std::filesystem::path& base_dir) {
  json merged = default_config_json();
  merge_checked(merged, document, "");

  RunConfig cfg;
  cfg.classes = get<std::vector<std::string>>(merged, "classes", "");
  (void)cfg.task();  // validates count and uniqueness

  const auto& b = merged.at("backend");
  cfg.backend.variant = get<std::string>(b, "variant", "backend");
  if (cfg.backend.variant != "toy" && cfg.backend.variant != "external") {
    throw ContractError("config: backend.variant must be 'toy' or 'external', got '" + cfg.backend.variant + "'");
  }
  auto& toy = cfg.backend.toy;
  toy.joint_dim = get_count(b, "C", "backend");
  toy.token_dim = get_count(b, "D", "backend");
  toy.seed = get<std::uint64_t>(b, "seed", "backend");
  toy.noise = get<double>(b, "noise", "backend");
  toy.template_jitter = get<double>(b, "template_jitter", "backend");
  toy.image_shift = get<double>(b, "image_shift", "backend");
  toy.image_style_gain = get<double>(b, "image_style_gain", "backend");
  toy.style_channels = get_count(b, "style_channels", "backend");
  toy.max_classes = std::max(toy.max_classes, cfg.classes.size());
  toy.validate();
  cfg.backend.external.variant = get<std::string>(b, "external_variant", "backend");
  cfg.backend.external.weights = resolve(base_dir, get<std::string>(b, "weights", "backend"));
  if (cfg.backend.external.weights.empty()) {
    if (const char* env = std::getenv(kBackendWeightsEnv); env != nullptr && *env != '\0') {
      cfg.backend.external.weights = env;
    }
  }

  const auto& t = merged.at("train");
  auto& train = cfg.train;
  train.epochs = get<int>(t, "epochs", "train");
  train.learning_rate = get<double>(t, "learning_rate", "train");
  train.momentum = get<double>(t, "momentum", "train");
  train.batch_size = get_count(t, "batch_size", "train");
  train.ratio = get<int>(t, "ratio", "train");
  train.seed = get<std::uint64_t>(t, "seed", "train");
  train.arcface.scale = get<double>(t.at("arcface"), "scale", "train.arcface");
  train.arcface.margin = get<double>(t.at("arcface"), "margin", "train.arcface");
  cfg.parallel_templates = get<bool>(t, "parallel_templates", "train");

  const auto& s = merged.at("styles");
  auto& styles = train.style_gen;
  styles.K = get_count(s, "K", "styles");
  styles.strategy = parse_style_strategy(get<std::string>(s, "strategy", "styles"));
  styles.alpha = get<double>(s, "alpha", "styles");
  styles.L = get_count(s, "L", "styles");
  styles.gaussian_std = get<double>(s, "gaussian_std", "styles");
  styles.seed = get<std::uint64_t>(s, "seed", "styles");
  cfg.lexicon = resolve(base_dir, get<std::string>(s, "lexicon", "styles"));
  train.validate();

  cfg.templates = get<std::vector<std::string>>(merged, "templates", "");
  if (cfg.templates.empty()) throw ContractError("config: templates must list at least one pattern");
  (void)cfg.prompt_templates();

  const auto& e = merged.at("eval");
  cfg.eval.manifest = resolve(base_dir, get<std::string>(e, "manifest", "eval"));
  cfg.eval.fusion = parse_fusion(get<std::string>(e, "fusion", "eval"));

  cfg.output = resolve(base_dir, get<std::string>(merged, "output", ""));
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("config: cannot open " + path.string());
  json document;
  try {
    document = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ContractError("config: " + path.string() + ": " + e.what());
  }
  return parse_run_config(document, path.parent_path());
}

json to_json(const RunConfig& config) {
  const auto& toy = config.backend.toy;
  const auto& train = config.train;
  const auto& styles = train.style_gen;
  return {
      {"classes", config.classes},
      {"backend",
       {{"variant", config.backend.variant},
        {"C", toy.joint_dim},
        {"D", toy.token_dim},
        {"seed", toy.seed},
        {"noise", toy.noise},
        {"template_jitter", toy.template_jitter},
        {"image_shift", toy.image_shift},
        {"image_style_gain", toy.image_style_gain},
        {"style_channels", toy.style_channels},
        {"external_variant", config.backend.external.variant},
        {"weights", config.backend.external.weights.string()}}},
      {"train",
       {{"epochs", train.epochs},
        {"learning_rate", train.learning_rate},
        {"momentum", train.momentum},
        {"batch_size", train.batch_size},
        {"ratio", train.ratio},
        {"seed", train.seed},
        {"arcface", {{"scale", train.arcface.scale}, {"margin", train.arcface.margin}}},
        {"parallel_templates", config.parallel_templates}}},
      {"styles",
       {{"K", styles.K},
        {"strategy", std::string(to_string(styles.strategy))},
        {"alpha", styles.alpha},
        {"L", styles.L},
        {"gaussian_std", styles.gaussian_std},
        {"seed", styles.seed},
        {"lexicon", config.lexicon.string()}}},
      {"templates", config.templates},
      {"eval", {{"manifest", config.eval.manifest.string()}, {"fusion", std::string(to_string(config.eval.fusion))}}},
      {"output", config.output.string()},
  };
}

std::string config_fingerprint(const RunConfig& config) {
  // paths are left out so moving a run directory keeps its fingerprint
  json doc = to_json(config);
  doc["backend"].erase("weights");
  doc["styles"].erase("lexicon");
  doc["eval"].erase("manifest");
  doc.erase("output");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(doc.dump())));
  return buf;
}

void override_seed(RunConfig& config, std::uint64_t seed) {
  config.train.seed = seed;
  config.train.style_gen.seed = seed;
}

void check_referenced_paths(const RunConfig& config) {
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (!p.empty() && !std::filesystem::exists(p)) {
      throw ContractError(std::string("config: ") + what + " not found: " + p.string());
    }
  };
  require(config.lexicon, "styles.lexicon");
  require(config.eval.manifest, "eval.manifest");
  if (config.backend.variant == "external") require(config.backend.external.weights, "backend weights");
}

std::unique_ptr<EncoderBackend> make_backend(const RunConfig& config) {
  if (config.backend.variant == "toy") return std::make_unique<ToyBackend>(config.backend.toy, config.classes);
  const auto desc = external_backend_descriptor(config.backend.external.variant);
  if (config.backend.external.weights.empty()) {
    throw ContractError("external backend " + desc.variant + " needs a weight path (backend.weights or " +
                        kBackendWeightsEnv + ")");
  }
  throw ContractError("external backend " + desc.variant + ": this build has no pretrained-weight loader; "
                      "implement EncoderBackend for it and link it in");
}

std::optional<PredefinedLexicon> make_lexicon(const RunConfig& config, const EncoderBackend& backend) {
  const auto strategy = config.train.style_gen.strategy;
  if (strategy != StyleStrategy::stylemix && strategy != StyleStrategy::random_mix) return std::nullopt;
  const auto words = config.lexicon.empty() ? default_lexicon_words() : load_lexicon_words(config.lexicon);
  return build_lexicon(words, backend);
}

}  // namespace dpstyler
