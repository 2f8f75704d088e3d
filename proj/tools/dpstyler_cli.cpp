// dpstyler command-line tool.
//   dpstyler train --config run.json
//   dpstyler eval --config run.json runs/*.dpst
//   dpstyler zeroshot --config run.json
//   dpstyler export-embeddings --config run.json --out feats.csv [--checkpoint m.dpst]
//   dpstyler info --config run.json
//   dpstyler toy-dataset --config run.json --out data/

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"

#include "dpstyler/checkpoint.hpp"
#include "dpstyler/config.hpp"
#include "dpstyler/errors.hpp"
#include "dpstyler/inference.hpp"
#include "dpstyler/manifest.hpp"
#include "dpstyler/toy_backend.hpp"
#include "dpstyler/trainer.hpp"

namespace fs = std::filesystem;
using namespace dpstyler;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::string out;
  std::string fusion;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> checkpoints;
  std::string checkpoint;
  std::size_t per_class = 10;
  std::size_t domains = 4;
  double jitter = 1.0;
  std::uint64_t data_seed = 7;
  std::uint64_t domain_seed = 99;
};

RunConfig load(const Options& opt, bool check_paths = true) {
  auto cfg = load_run_config(opt.config);
  if (opt.seed) override_seed(cfg, *opt.seed);
  if (!opt.fusion.empty()) cfg.eval.fusion = parse_fusion(opt.fusion);
  if (check_paths) check_referenced_paths(cfg);
  return cfg;
}

fs::path output_dir(const Options& opt, const RunConfig& cfg) {
  fs::path dir = opt.out.empty() ? cfg.output : fs::path(opt.out);
  fs::create_directories(dir);
  return dir;
}

DatasetManifest manifest_for(const RunConfig& cfg) {
  if (cfg.eval.manifest.empty()) throw ContractError("config: eval.manifest is not set");
  return resolve_manifest(cfg.eval.manifest, cfg.task());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
}

int cmd_train(const Options& opt) {
  const auto cfg = load(opt);
  const auto dir = output_dir(opt, cfg);
  const auto fingerprint = config_fingerprint(cfg);
  const auto backend = make_backend(cfg);
  const auto lexicon = make_lexicon(cfg, *backend);
  const auto task = cfg.task();
  const auto templates = cfg.prompt_templates();

  std::vector<std::exception_ptr> failures(templates.size());
  std::mutex print_mutex;
  auto run = [&](std::size_t i) {
    try {
      const auto& prompt = templates[i];
      const auto stem = prompt.id() + "-" + fingerprint;
      std::ofstream metrics(dir / (stem + ".metrics.jsonl"));
      auto result = train_one_model(task, *backend, prompt, cfg.train, lexicon ? &*lexicon : nullptr,
                                    [&](const EpochMetrics& m) { metrics << metrics_json_line(m) << '\n'; });
      const auto path = dir / (stem + ".dpst");
      save_checkpoint(result.checkpoint, path);
      const auto& last = result.history.back();
      std::lock_guard lock(print_mutex);
      std::printf("%s: L_U=%.5f L_C=%.5f -> %s\n", prompt.id().c_str(), last.mean_uncertainty,
                  last.mean_classification, path.string().c_str());
    } catch (...) {
      failures[i] = std::current_exception();
    }
  };
  if (cfg.parallel_templates) {
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < templates.size(); ++i) workers.emplace_back(run, i);
    for (auto& w : workers) w.join();
  } else {
    for (std::size_t i = 0; i < templates.size(); ++i) run(i);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return kExitOk;
}

void emit_report(EvalReport& report, const RunConfig& cfg, const fs::path& dir, const std::string& name) {
  report.config_fingerprint = config_fingerprint(cfg);
  report.seed = cfg.train.seed;
  std::cout << report.to_table();
  if (report.total_errors() > 0) std::cout << report.total_errors() << " image(s) failed to decode\n";
  write_text(dir / (name + "-" + report.config_fingerprint + ".json"), report.to_json() + "\n");
}

int cmd_eval(const Options& opt) {
  const auto cfg = load(opt);
  EnsembleBundle bundle;
  bundle.fusion = cfg.eval.fusion;
  for (const auto& p : opt.checkpoints) bundle.members.push_back(load_checkpoint(p));
  bundle.validate();
  if (bundle.members.front().class_names != cfg.classes) {
    throw ContractError("checkpoint class names do not match the config's classes");
  }
  const auto backend = make_backend(cfg);
  const auto manifest = manifest_for(cfg);
  auto report = evaluate(manifest, *backend, [&](const JointEmbedding& e) { return ensemble_predict(e, bundle); });
  report.label = "ensemble-" + std::string(to_string(bundle.fusion));
  emit_report(report, cfg, output_dir(opt, cfg), "report-" + std::string(to_string(bundle.fusion)));
  return kExitOk;
}

int cmd_zeroshot(const Options& opt) {
  const auto cfg = load(opt);
  const auto backend = make_backend(cfg);
  const auto manifest = manifest_for(cfg);
  const auto dir = output_dir(opt, cfg);
  for (const auto mode : {ZeroShotPrompt::C, ZeroShotPrompt::PC}) {
    ZeroShotClassifier zs(*backend, cfg.task(), mode);
    auto report = evaluate(manifest, *backend, [&](const JointEmbedding& e) { return zs.predict(e); });
    const std::string name = mode == ZeroShotPrompt::C ? "C" : "PC";
    report.label = "zeroshot-" + name;
    emit_report(report, cfg, dir, "zeroshot-" + name);
  }
  return kExitOk;
}

int cmd_export(const Options& opt) {
  const auto cfg = load(opt);
  const fs::path out(opt.out);
  const auto parent = out.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw ContractError("output directory does not exist: " + parent.string());
  }
  std::optional<Checkpoint> ckpt;
  if (!opt.checkpoint.empty()) ckpt = load_checkpoint(opt.checkpoint);
  const auto backend = make_backend(cfg);
  const auto manifest = manifest_for(cfg);
  const auto rows = export_embeddings(manifest, *backend, ckpt ? &*ckpt : nullptr, cfg.classes, out);
  std::printf("wrote %zu rows to %s\n", rows, out.string().c_str());
  return kExitOk;
}

int cmd_info(const Options& opt) {
  const auto cfg = load(opt, false);
  auto doc = to_json(cfg);
  doc["fingerprint"] = config_fingerprint(cfg);
  std::cout << doc.dump(2) << '\n';
  return kExitOk;
}

int cmd_toy_dataset(const Options& opt) {
  // the manifest named in the config is usually the directory about to be written
  const auto cfg = load(opt, false);
  if (cfg.backend.variant != "toy") throw ContractError("toy-dataset needs backend.variant = toy");
  auto domains = default_toy_domains(cfg.backend.toy.token_dim, opt.domains, opt.domain_seed);
  for (auto& d : domains) d.jitter = opt.jitter;
  const fs::path root = opt.out.empty() ? cfg.output / "toy-data" : fs::path(opt.out);
  const auto n = generate_toy_dataset(root, cfg.classes, domains, opt.per_class, opt.data_seed);
  std::printf("wrote %zu images under %s\n", n, root.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source-free domain generalization with synthesized prompt styles"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Override the master and style seeds");
  };

  auto* train = app.add_subcommand("train", "Train one model per prompt template");
  add_common(train);
  train->add_option("--out", opt.out, "Output directory (default: config output)");

  auto* eval = app.add_subcommand("eval", "Evaluate an ensemble of checkpoints");
  add_common(eval);
  eval->add_option("--out", opt.out, "Report directory");
  eval->add_option("--fusion", opt.fusion, "Score fusion")->check(CLI::IsMember({"max", "average"}));
  eval->add_option("checkpoints", opt.checkpoints, "Checkpoint files")->required()->check(CLI::ExistingFile);

  auto* zeroshot = app.add_subcommand("zeroshot", "Zero-shot baselines with [class] and 'a photo of a [class]'");
  add_common(zeroshot);
  zeroshot->add_option("--out", opt.out, "Report directory");

  auto* exp = app.add_subcommand("export-embeddings", "Write raw (and removed) image features as CSV");
  add_common(exp);
  exp->add_option("--out", opt.out, "CSV path")->required();
  exp->add_option("--checkpoint", opt.checkpoint, "Apply this checkpoint's remover")->check(CLI::ExistingFile);

  auto* info = app.add_subcommand("info", "Print the config after default merging");
  add_common(info);

  auto* toy = app.add_subcommand("toy-dataset", "Generate a synthetic multi-domain dataset for the toy backend");
  add_common(toy);
  toy->add_option("--out", opt.out, "Dataset root (default: <output>/toy-data)");
  toy->add_option("--per-class", opt.per_class, "Images per class and domain");
  toy->add_option("--domains", opt.domains, "Number of domains");
  toy->add_option("--jitter", opt.jitter, "Per-image style jitter around the domain center");
  toy->add_option("--data-seed", opt.data_seed, "Seed for the per-image draws");
  toy->add_option("--domain-seed", opt.domain_seed, "Seed for the domain style centers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(opt);
    if (*eval) return cmd_eval(opt);
    if (*zeroshot) return cmd_zeroshot(opt);
    if (*exp) return cmd_export(opt);
    if (*info) return cmd_info(opt);
    if (*toy) return cmd_toy_dataset(opt);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
