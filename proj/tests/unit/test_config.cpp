#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

#include "dpstyler/config.hpp"
#include "dpstyler/errors.hpp"

using namespace dpstyler;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal() { return {{"classes", {"dog", "horse", "guitar"}}}; }

std::string error_of(const json& doc) {
  try {
    parse_run_config(doc, "/base");
  } catch (const ContractError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults fill everything a minimal document leaves out") {
  const auto cfg = parse_run_config(minimal(), "/base");
  CHECK(cfg.classes.size() == 3);
  CHECK(cfg.backend.variant == "toy");
  CHECK(cfg.train.epochs == 100);
  CHECK(cfg.train.learning_rate == 0.008);
  CHECK(cfg.train.momentum == 0.9);
  CHECK(cfg.train.batch_size == 128);
  CHECK(cfg.train.ratio == 16);
  CHECK(cfg.train.style_gen.K == 80);
  CHECK(cfg.train.style_gen.strategy == StyleStrategy::random_mix);
  CHECK(cfg.train.arcface.scale == 5.0);
  CHECK(cfg.train.arcface.margin == 0.5);
  CHECK(cfg.templates.size() == 3);
  CHECK(cfg.eval.fusion == Fusion::max);
  CHECK(cfg.output == fs::path("/base/runs"));
  CHECK(cfg.lexicon.empty());
  CHECK(cfg.prompt_templates().front().has_style());
}

TEST_CASE("nested overrides and relative paths") {
  auto doc = minimal();
  doc["train"] = {{"epochs", 7}, {"arcface", {{"margin", 0.25}}}};
  doc["styles"] = {{"K", 8}, {"lexicon", "../words.txt"}};
  doc["backend"] = {{"C", 32}, {"image_style_gain", 2}};
  doc["eval"] = {{"manifest", "data/m.csv"}, {"fusion", "average"}};
  const auto cfg = parse_run_config(doc, "/proj/configs");
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.train.arcface.margin == 0.25);
  CHECK(cfg.train.arcface.scale == 5.0);
  CHECK(cfg.train.style_gen.K == 8);
  CHECK(cfg.backend.toy.joint_dim == 32);
  CHECK(cfg.backend.toy.image_style_gain == 2.0);
  CHECK(cfg.lexicon == fs::path("/proj/words.txt"));
  CHECK(cfg.eval.manifest == fs::path("/proj/configs/data/m.csv"));
  CHECK(cfg.eval.fusion == Fusion::average);
}

TEST_CASE("unknown keys and wrong types are named") {
  auto doc = minimal();
  doc["train"] = {{"epoch", 3}};
  CHECK(error_of(doc).find("train.epoch") != std::string::npos);
  doc = minimal();
  doc["styles"] = {{"K", "eight"}};
  CHECK(error_of(doc).find("styles.K") != std::string::npos);
  doc = minimal();
  doc["backend"] = {{"variant", "clip"}};
  CHECK(error_of(doc).find("variant") != std::string::npos);
  doc = minimal();
  doc["eval"] = {{"fusion", "vote"}};
  CHECK_FALSE(error_of(doc).empty());
  doc = minimal();
  doc["styles"] = {{"K", -1}};
  CHECK_FALSE(error_of(doc).empty());
  doc = minimal();
  doc["train"] = {{"learning_rate", 0}};
  CHECK_FALSE(error_of(doc).empty());
  doc = minimal();
  doc["templates"] = json::array({"a photo of a [class]"});
  CHECK_FALSE(error_of(doc).empty());
  doc = minimal();
  doc["templates"] = json::array();
  CHECK_FALSE(error_of(doc).empty());
  CHECK_FALSE(error_of({{"classes", {"dog"}}}).empty());
  CHECK_FALSE(error_of({{"classes", {"dog", "dog"}}}).empty());
  CHECK_FALSE(error_of(json::array()).empty());
}

TEST_CASE("the merged document round-trips through to_json") {
  auto doc = minimal();
  doc["styles"] = {{"K", 8}, {"strategy", "gaussian"}};
  const auto cfg = parse_run_config(doc, "/base");
  const auto again = parse_run_config(to_json(cfg), "/elsewhere");
  CHECK(to_json(again) == to_json(cfg));
}

TEST_CASE("fingerprints ignore paths but not settings") {
  const auto a = parse_run_config(minimal(), "/one");
  const auto b = parse_run_config(minimal(), "/two");
  CHECK(config_fingerprint(a) == config_fingerprint(b));
  CHECK(config_fingerprint(a).size() == 16);
  CHECK(config_fingerprint(a).find_first_not_of("0123456789abcdef") == std::string::npos);

  auto seeded = a;
  override_seed(seeded, 42);
  CHECK(seeded.train.seed == 42);
  CHECK(seeded.train.style_gen.seed == 42);
  CHECK(config_fingerprint(seeded) != config_fingerprint(a));

  auto doc = minimal();
  doc["train"] = {{"epochs", 99}};
  CHECK(config_fingerprint(parse_run_config(doc, "/one")) != config_fingerprint(a));
}

TEST_CASE("weights fall back to the environment") {
  auto doc = minimal();
  doc["backend"] = {{"variant", "external"}, {"external_variant", "ViT-B/16"}};
  ::setenv(kBackendWeightsEnv, "/models/vitb16.bin", 1);
  const auto cfg = parse_run_config(doc, "/base");
  ::unsetenv(kBackendWeightsEnv);
  CHECK(cfg.backend.external.weights == fs::path("/models/vitb16.bin"));
  doc["backend"]["weights"] = "w.bin";
  ::setenv(kBackendWeightsEnv, "/models/ignored.bin", 1);
  CHECK(parse_run_config(doc, "/base").backend.external.weights == fs::path("/base/w.bin"));
  ::unsetenv(kBackendWeightsEnv);
}

TEST_CASE("external backends are a contract without a loader") {
  auto doc = minimal();
  doc["backend"] = {{"variant", "external"}};
  const auto no_weights = parse_run_config(doc, "/base");
  try {
    make_backend(no_weights);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find(kBackendWeightsEnv) != std::string::npos);
  }
  doc["backend"]["weights"] = "/nonexistent/rn50.bin";
  const auto with_weights = parse_run_config(doc, "/base");
  CHECK_THROWS_AS(make_backend(with_weights), ContractError);
  CHECK_THROWS_AS(check_referenced_paths(with_weights), ContractError);
}

TEST_CASE("missing referenced files are named") {
  auto doc = minimal();
  doc["styles"] = {{"lexicon", "no_such_words.txt"}};
  const auto cfg = parse_run_config(doc, "/base");
  try {
    check_referenced_paths(cfg);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("/base/no_such_words.txt") != std::string::npos);
  }
}

TEST_CASE("lexicon only for mixing strategies") {
  auto doc = minimal();
  doc["styles"] = {{"strategy", "random"}};
  auto cfg = parse_run_config(doc, "/base");
  auto backend = make_backend(cfg);
  CHECK_FALSE(make_lexicon(cfg, *backend).has_value());

  cfg = parse_run_config(minimal(), "/base");
  backend = make_backend(cfg);
  const auto lex = make_lexicon(cfg, *backend);
  REQUIRE(lex.has_value());
  CHECK(lex->size() == 8);
}

TEST_CASE("files on disk") {
  const auto dir = fs::temp_directory_path() / "dpstyler_config_test";
  fs::create_directories(dir);
  {
    std::ofstream(dir / "ok.json") << R"({"classes": ["a", "b"], "output": "out"})";
    std::ofstream(dir / "broken.json") << R"({"classes": ["a", "b"],)";
  }
  const auto cfg = load_run_config(dir / "ok.json");
  CHECK(cfg.output == (dir / "out").lexically_normal());
  CHECK_THROWS_AS(load_run_config(dir / "broken.json"), ContractError);
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), ContractError);
  fs::remove_all(dir);
}

TEST_CASE("the shipped toy config parses") {
  const auto cfg = load_run_config(fs::path(DPSTYLER_SOURCE_DIR) / "configs" / "toy.json");
  CHECK(cfg.classes.size() == 5);
  CHECK(cfg.train.style_gen.K == 8);
  CHECK_NOTHROW(make_backend(cfg));
}

}  // TEST_SUITE
