// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "backend_hash.hpp"
#include "bridge.hpp"
#include "oracles.hpp"
#include "dpstyler/checkpoint.hpp"
#include "dpstyler/inference.hpp"
#include "dpstyler/losses.hpp"
#include "dpstyler/style_generation.hpp"
#include "dpstyler/style_removal.hpp"
#include "dpstyler/toy_backend.hpp"
#include "dpstyler/trainer.hpp"

using namespace dpstyler;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

/// Outcome of one criterion: pass flag plus a short human-readable summary.
struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

// 1. analytic gradients of the full objective against finite differences in double
void gradient_oracle(Outcome& out) {
  const std::size_t dim = 8, styles = 4, classes = 3, batch = 5;
  const int instances = 120;
  Rng rng(101);
  std::mt19937_64 orng(101);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int trial = 0; trial < instances; ++trial) {
    auto remover = remover_init<double>(dim, 2, rng);
    for (auto& x : remover.w1.flat()) x *= 2.0;
    for (auto& x : remover.w2.flat()) x *= 2.0;
    auto head_m = oracle::random_matrix(classes, dim, 1.0, orng);
    const auto probe_m = oracle::random_matrix(styles, dim, 1.0, orng);
    auto inputs = oracle::random_matrix(batch, dim, 1.0, orng);
    for (auto& row : inputs) row = oracle::normalize(row);
    std::vector<std::size_t> targets;
    for (std::size_t b = 0; b < batch; ++b) targets.push_back((b + static_cast<std::size_t>(trial)) % classes);

    const auto g = objective_gradients(bridge::from_oracle<double>(inputs), targets, remover,
                                       ClassifierHead<double>{bridge::from_oracle<double>(head_m)},
                                       DomainProbe<double>(probe_m), ArcFaceConfig{5.0, 0.5});
    auto w1 = bridge::to_oracle(remover.w1);
    auto w2 = bridge::to_oracle(remover.w2);
    auto f = [&] { return oracle::objective(inputs, targets, w1, w2, head_m, probe_m, 5.0, 0.5); };
    auto sweep = [&](oracle::Mat& m, const Matrix<double>& analytic) {
      for (std::size_t r = 0; r < m.size(); ++r) {
        for (std::size_t c = 0; c < m[r].size(); ++c) {
          worst = std::max(worst, oracle::relative_error(analytic(r, c), oracle::central_difference(&m[r][c], f)));
          ++checked;
        }
      }
    };
    sweep(w1, g.d_w1);
    sweep(w2, g.d_w2);
    sweep(head_m, g.d_head);
  }
  out.detail << instances << " instances, " << checked << " partials, worst relative error " << worst;
  out.require(worst < 1e-5, "relative error < 1e-5");
}

// 2. L_U range and extremes, ArcFace m=0 against plain cross-entropy, scale invariance
void loss_invariants(Outcome& out) {
  const std::vector<double> uniform(80, 1.0 / 80.0);
  const double lu_uniform = domain_uncertainty_loss(uniform);
  out.require(std::abs(lu_uniform + std::log(80.0)) < 1e-12, "uniform K=80 gives -log 80");
  out.require(std::abs(lu_uniform - (-4.38203)) < 5e-6, "uniform K=80 gives -4.38203");
  std::vector<double> one_hot(80, 0.0);
  one_hot[17] = 1.0;
  out.require(domain_uncertainty_loss(one_hot) == 0.0, "one-hot gives 0");

  Rng rng(202);
  std::mt19937_64 orng(202);
  double worst_ce = 0.0;
  double worst_scale = 0.0;
  bool in_range = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 79);
    const auto probe_m = oracle::random_matrix(k, 16, 1.0, orng);
    const DomainProbe<double> probe(probe_m);
    const auto head_m = oracle::random_matrix(5, 16, 1.0, orng);
    const ClassifierHead<double> head{bridge::from_oracle<double>(head_m)};
    std::vector<double> f(16);
    std::normal_distribution<double> dist;
    for (auto& x : f) x = dist(orng);

    const double lu = domain_uncertainty_loss(softmax(domain_logits<double>(f, probe)));
    in_range = in_range && lu <= 0.0 && lu >= -std::log(static_cast<double>(k)) - 1e-12;

    const std::size_t target = static_cast<std::size_t>(trial) % 5;
    const double arc0 = arcface_loss<double>(f, head, target, ArcFaceConfig{5.0, 0.0}).loss;
    oracle::Vec z;
    for (const auto& row : head_m) z.push_back(5.0 * oracle::cosine(f, row));
    const auto p = oracle::naive_softmax(z);
    worst_ce = std::max(worst_ce, std::abs(arc0 - (-std::log(p[target]))));

    const double k_scale = std::exp(dist(orng) * 2.0);
    std::vector<double> scaled = f;
    for (auto& x : scaled) x *= k_scale;
    const double lu_scaled = domain_uncertainty_loss(softmax(domain_logits<double>(scaled, probe)));
    const double arc = arcface_loss<double>(f, head, target, ArcFaceConfig{}).loss;
    const double arc_scaled = arcface_loss<double>(scaled, head, target, ArcFaceConfig{}).loss;
    worst_scale = std::max({worst_scale, std::abs(lu - lu_scaled), std::abs(arc - arc_scaled)});
  }
  out.detail << "L_U(uniform,80)=" << lu_uniform << ", max |ArcFace(m=0) - CE| " << worst_ce
             << ", max rescaling drift " << worst_scale;
  out.require(in_range, "L_U within [-log K, 0]");
  out.require(worst_ce < 1e-6, "m=0 equals cross-entropy");
  out.require(worst_scale < 1e-9, "scale invariance");
}

// 3. Style-SE structure
void style_se_structure(Outcome& out) {
  StyleRemoverParams<float> zero{Matrix<float>(6, 3), Matrix<float>(3, 6), 2};
  const std::vector<float> v{0.3f, -1.25f, 2.0f, 0.0f, 7.5f, -0.125f};
  const auto r = remover_forward(v, zero);
  bool exact = true;
  for (std::size_t c = 0; c < v.size(); ++c) exact = exact && r[c] == 1.5f * v[c];
  out.require(exact, "W=0 gives exactly 1.5 v");

  StyleRemoverParams<double> hand{Matrix<double>(2, 1, {1.0, 0.0}), Matrix<double>(1, 2, {1.0, 0.0}), 2};
  const auto t = remover_forward_traced(std::vector<double>{1.0, 1.0}, hand);
  const double expected0 = 1.0 + 1.0 / (1.0 + std::exp(-1.0));
  out.require(std::abs(t.output[0] - expected0) < 1e-6 && std::abs(t.output[1] - 1.5) < 1e-6,
              "hand-computed C=2 example");

  Rng rng(303);
  bool gates = true, signs = true, fixed = true;
  for (int trial = 0; trial < 2000; ++trial) {
    auto p = remover_init<double>(16, 4, rng);
    for (auto& x : p.w1.flat()) x *= 3.0;
    for (auto& x : p.w2.flat()) x *= 3.0;
    std::normal_distribution<double> dist;
    std::vector<double> x(16);
    for (auto& e : x) e = dist(rng);
    x[static_cast<std::size_t>(trial) % 16] = 0.0;
    const auto tr = remover_forward_traced(x, p);
    for (std::size_t c = 0; c < 16; ++c) {
      gates = gates && tr.gate[c] > 0.0 && tr.gate[c] < 1.0;
      if (x[c] == 0.0) {
        fixed = fixed && tr.output[c] == 0.0;
      } else {
        signs = signs && std::signbit(tr.output[c]) == std::signbit(x[c]);
      }
    }
  }
  out.detail << "2000 random gates, C=2 output (" << t.output[0] << ", " << t.output[1] << ")";
  out.require(gates, "gate in (0, 1)");
  out.require(signs, "sign preservation");
  out.require(fixed, "zero fixed points");
}

// 4. style generation statistics and determinism
void style_generation_suite(Outcome& out) {
  auto lex_rng = make_rng(404, "acceptance-lexicon");
  std::normal_distribution<float> dist;
  std::vector<std::string> labels;
  std::vector<StyleVector> vectors;
  for (int j = 0; j < 8; ++j) {
    labels.push_back("w" + std::to_string(j));
    StyleVector v(32);
    for (auto& x : v) x = dist(lex_rng);
    vectors.push_back(v);
  }
  const PredefinedLexicon lexicon(labels, vectors);

  Rng rng(404);
  bool sums = true, hull = true;
  for (int i = 0; i < 10000; ++i) {
    const auto w = sample_mix_weights(8, 0.1, rng);
    double s = 0.0;
    for (double x : w) s += x;
    sums = sums && std::abs(s - 1.0) <= 1e-6;
    const auto mixed = mix_styles(lexicon, w);
    for (std::size_t d = 0; d < 32; ++d) {
      float lo = vectors[0][d], hi = lo;
      for (const auto& v : vectors) {
        lo = std::min(lo, v[d]);
        hi = std::max(hi, v[d]);
      }
      hull = hull && mixed[d] >= lo - 1e-6f && mixed[d] <= hi + 1e-6f;
    }
  }
  out.require(sums, "weights sum to 1");
  out.require(hull, "convex hull bounds");

  StyleGenConfig cfg;
  cfg.K = 1;
  cfg.seed = 404;
  const auto bank = initial_bank(cfg, 32, &lexicon);
  int random_epochs = 0;
  for (int e = 0; e < 10000; ++e) {
    if (refresh_bank(bank, cfg, 32, &lexicon, e).method_of_last_refresh == RefreshMethod::random) ++random_epochs;
  }
  const double coin = random_epochs / 10000.0;
  out.require(std::abs(coin - 0.5) <= 0.02, "Random-Mix coin 50% +- 2%");

  std::array<int, kRandomDistributionCount> counts{};
  for (int i = 0; i < 10000; ++i) ++counts[static_cast<std::size_t>(pick_random_distribution(rng))];
  double worst_share = 0.0;
  for (int c : counts) worst_share = std::max(worst_share, std::abs(c / 10000.0 - 0.2));
  out.require(worst_share <= 0.02, "distribution choice 20% +- 2%");

  bool deterministic = true;
  for (auto strategy : {StyleStrategy::random, StyleStrategy::stylemix, StyleStrategy::gaussian,
                        StyleStrategy::random_mix, StyleStrategy::frozen}) {
    StyleGenConfig c;
    c.K = 80;
    c.strategy = strategy;
    c.seed = 405;
    for (int epoch : {0, 1, 57}) {
      const auto a = refresh_bank(initial_bank(c, 32, &lexicon), c, 32, &lexicon, epoch);
      const auto b = refresh_bank(initial_bank(c, 32, &lexicon), c, 32, &lexicon, epoch);
      deterministic = deterministic && a == b;
    }
  }
  out.require(deterministic, "bit-identical banks");
  out.detail << "coin " << coin << ", worst distribution deviation " << worst_share;
}

// 5. fusion against exhaustive scans
void ensemble_oracle(Outcome& out) {
  Rng rng(505);
  std::uniform_int_distribution<std::size_t> size(1, 6);
  std::uniform_real_distribution<float> score(-1.0f, 1.0f);
  std::size_t max_bad = 0, avg_bad = 0, with_ties = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = size(rng), m = 1 + size(rng);
    std::vector<std::vector<float>> s(n, std::vector<float>(m));
    const bool coarse = trial % 2 == 0;
    for (auto& row : s) {
      // coarse grids make ties common
      for (auto& x : row) x = coarse ? std::round(score(rng) * 2.0f) / 2.0f : score(rng);
    }
    oracle::Mat table;
    for (const auto& row : s) table.emplace_back(row.begin(), row.end());
    if (coarse) ++with_ties;
    if (fuse_scores(s, Fusion::max) != oracle::max_fusion_scan(table)) ++max_bad;
    if (fuse_scores(s, Fusion::average) != oracle::average_fusion_scan(table)) ++avg_bad;
  }
  const std::vector<std::vector<float>> worked{{0.2f, 0.9f}, {0.95f, 0.1f}};
  out.require(fuse_scores(worked, Fusion::max) == 0 && fuse_scores(worked, Fusion::average) == 0, "worked example");
  out.detail << "10000 instances (" << with_ties << " on a tie-heavy grid), mismatches max=" << max_bad
             << " average=" << avg_bad;
  out.require(max_bad == 0, "max mode");
  out.require(avg_bad == 0, "average mode");
}

struct ToyScenario {
  std::vector<std::string> classes{"dog", "elephant", "giraffe", "guitar", "horse"};
  std::uint64_t seed = 0;

  ToyBackendSpec backend_spec() const {
    ToyBackendSpec spec;
    spec.joint_dim = 64;
    spec.token_dim = 32;
    spec.seed = seed;
    spec.style_channels = 16;
    spec.image_style_gain = 2.5;
    return spec;
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.style_gen.K = 8;
    cfg.seed = seed;
    cfg.style_gen.seed = seed;
    return cfg;
  }
};

struct PipelineState {
  std::vector<Checkpoint> members;
  std::uint64_t hash_before = 0;
  std::uint64_t hash_after = 0;
};

// 6. end-to-end toy pipeline
void toy_pipeline(Outcome& out, PipelineState& state) {
  const ToyScenario scenario;
  const TaskDefinition task(scenario.classes);
  const ToyBackend backend(scenario.backend_spec(), scenario.classes);
  const auto lexicon = build_lexicon(default_lexicon_words(), backend);
  const auto cfg = scenario.train_config();
  state.hash_before = testing_support::backend_output_hash(backend, scenario.classes);

  double slowest = 0.0;
  EnsembleBundle bundle;
  std::vector<StyleBank> final_banks;
  for (const auto& prompt : default_templates()) {
    const auto start = Clock::now();
    auto result = train_one_model(task, backend, prompt, cfg, &lexicon);
    slowest = std::max(slowest, seconds_since(start));
    bundle.members.push_back(result.checkpoint);
    final_banks.push_back(std::move(result.final_bank));
  }
  state.members = bundle.members;
  state.hash_after = testing_support::backend_output_hash(backend, scenario.classes);

  const fs::path root = fs::temp_directory_path() / "dpstyler_acceptance_toy";
  fs::remove_all(root);
  auto domains = default_toy_domains(32, 4, scenario.seed + 99);
  for (auto& d : domains) d.jitter = 1.0;
  const std::size_t images = generate_toy_dataset(root, scenario.classes, domains, 10, scenario.seed + 7);
  const auto manifest = discover_manifest(root, task);

  const auto ensemble = evaluate(manifest, backend, [&](const JointEmbedding& e) { return ensemble_predict(e, bundle); });
  const ZeroShotClassifier zs_c(backend, task, ZeroShotPrompt::C);
  const ZeroShotClassifier zs_pc(backend, task, ZeroShotPrompt::PC);
  const auto zero_c = evaluate(manifest, backend, [&](const JointEmbedding& e) { return zs_c.predict(e); });
  const auto zero_pc = evaluate(manifest, backend, [&](const JointEmbedding& e) { return zs_pc.predict(e); });
  fs::remove_all(root);

  // held-out prompts: a bank from an epoch the runs never reached, each member with its own template
  double raw = 0.0, removed = 0.0;
  const auto templates = default_templates();
  for (std::size_t i = 0; i < bundle.members.size(); ++i) {
    const auto held_out = refresh_bank(final_banks[i], cfg.style_gen, 32, &lexicon, 1000000);
    const auto features = encode_prompt_features(task, backend, templates[i], held_out);
    const auto probe = build_domain_probe(backend, held_out);
    raw += mean_domain_uncertainty(features, probe);
    removed += mean_domain_uncertainty(features, probe, &bundle.members[i].remover);
  }
  raw /= static_cast<double>(bundle.members.size());
  removed /= static_cast<double>(bundle.members.size());

  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%zu images, ensemble %.2f%%, zero-shot C %.2f%% PC %.2f%%, L_U raw %.6f removed %.6f, "
                "slowest model %.2fs",
                images, ensemble.average, zero_c.average, zero_pc.average, raw, removed, slowest);
  out.detail << buf;
  out.require(images == 200, "200-image manifest");
  out.require(slowest < 60.0, "< 60 s per model");
  out.require(ensemble.average >= 95.0, "ensemble >= 95%");
  out.require(removed < raw, "L_U removed < raw");
  out.require(zero_c.average < ensemble.average && zero_pc.average < ensemble.average, "zero-shot below ensemble");
}

// 7. determinism, persistence, frozen encoder
void determinism_and_persistence(Outcome& out, const PipelineState& state) {
  const ToyScenario scenario;
  const TaskDefinition task(scenario.classes);
  const ToyBackend backend(scenario.backend_spec(), scenario.classes);
  const auto lexicon = build_lexicon(default_lexicon_words(), backend);
  const auto again = train_one_model(task, backend, default_templates()[0], scenario.train_config(), &lexicon);
  const bool repeatable =
      !state.members.empty() && serialize_checkpoint(again.checkpoint) == serialize_checkpoint(state.members[0]);
  out.require(repeatable, "identical seeds give identical checkpoints");

  const fs::path path = fs::temp_directory_path() / "dpstyler_acceptance.dpst";
  save_checkpoint(again.checkpoint, path);
  const auto loaded = load_checkpoint(path);
  fs::remove(path);
  out.require(serialize_checkpoint(loaded) == serialize_checkpoint(again.checkpoint), "round trip");

  out.require(state.hash_before == state.hash_after && state.hash_before != 0, "frozen-encoder hash");
  char buf[96];
  std::snprintf(buf, sizeof buf, "encoder hash %016llx before and %016llx after training",
                static_cast<unsigned long long>(state.hash_before), static_cast<unsigned long long>(state.hash_after));
  out.detail << buf;
}

bool run(int number, const char* name, double budget_seconds, const std::function<void(Outcome&)>& body) {
  Outcome outcome;
  const auto start = Clock::now();
  try {
    body(outcome);
  } catch (const std::exception& e) {
    outcome.pass = false;
    outcome.detail << " [exception: " << e.what() << "]";
  }
  const double elapsed = seconds_since(start);
  if (elapsed >= budget_seconds) {
    outcome.pass = false;
    outcome.detail << " [over the " << budget_seconds << " s budget]";
  }
  std::printf("criterion %d %-34s %s  %7.2fs  %s\n", number, name, outcome.pass ? "PASS" : "FAIL", elapsed,
              outcome.detail.str().c_str());
  std::fflush(stdout);
  return outcome.pass;
}

}  // namespace

int main() {
  PipelineState state;
  bool ok = true;
  ok &= run(1, "gradient oracle", 30.0, gradient_oracle);
  ok &= run(2, "loss invariants", 10.0, loss_invariants);
  ok &= run(3, "Style-SE structure", 10.0, style_se_structure);
  ok &= run(4, "style generation", 60.0, style_generation_suite);
  ok &= run(5, "ensemble oracle", 10.0, ensemble_oracle);
  ok &= run(6, "end-to-end toy pipeline", 300.0, [&](Outcome& o) { toy_pipeline(o, state); });
  ok &= run(7, "determinism and persistence", 120.0, [&](Outcome& o) { determinism_and_persistence(o, state); });
  std::printf("%s\n", ok ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL");
  return ok ? 0 : 1;
}
