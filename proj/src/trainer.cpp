#include "dpstyler/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace dpstyler {

namespace {

using Clock = std::chrono::steady_clock;

std::string train_config_json(const TrainConfig& config) {
  nlohmann::json j = {
      {"epochs", config.epochs},
      {"learning_rate", config.learning_rate},
      {"momentum", config.momentum},
      {"batch_size", config.batch_size},
      {"ratio", config.ratio},
      {"seed", config.seed},
      {"arcface", {{"scale", config.arcface.scale}, {"margin", config.arcface.margin}}},
      {"styles",
       {{"K", config.style_gen.K},
        {"strategy", to_string(config.style_gen.strategy)},
        {"alpha", config.style_gen.alpha},
        {"L", config.style_gen.L},
        {"gaussian_std", config.style_gen.gaussian_std},
        {"seed", config.style_gen.seed}}},
  };
  return j.dump();
}

std::string describe_failure(int epoch, std::size_t batch, double uncertainty, double classification) {
  std::ostringstream out;
  out << "non-finite loss at epoch " << epoch << " batch " << batch << " (L_U=" << uncertainty
      << ", L_C=" << classification << ")";
  return out.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0, 1)");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (ratio < 1) throw ContractError("compression ratio must be >= 1");
  style_gen.validate();
  arcface.validate();
}

std::vector<PromptPair> build_prompt_set(std::size_t classes, std::size_t styles, Rng& rng) {
  std::vector<PromptPair> pairs;
  pairs.reserve(classes * styles);
  for (std::size_t m = 0; m < classes; ++m) {
    for (std::size_t i = 0; i < styles; ++i) pairs.push_back({m, i});
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return pairs;
}

std::vector<PromptPair> build_prompt_set(const TaskDefinition& task, const StyleBank& bank, Rng& rng) {
  return build_prompt_set(task.size(), bank.size(), rng);
}

std::string metrics_json_line(const EpochMetrics& metrics) {
  nlohmann::json j = {{"epoch", metrics.epoch},
                      {"mean_uncertainty", metrics.mean_uncertainty},
                      {"mean_classification", metrics.mean_classification},
                      {"mean_total", metrics.mean_total},
                      {"wall_seconds", metrics.wall_seconds},
                      {"refresh", to_string(metrics.refresh)}};
  return j.dump();
}

ClassifierHead<float> head_init(std::size_t classes, std::size_t dim, Rng& rng) {
  // linear-layer default U(-1/sqrt(C), 1/sqrt(C)); Xavier here starts too close to zero-shot
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  ClassifierHead<float> head{Matrix<float>(classes, dim)};
  for (auto& x : head.weights.flat()) x = static_cast<float>(uniform(rng));
  return head;
}

Matrix<float> encode_prompt_features(const TaskDefinition& task, const EncoderBackend& backend,
                                     const PromptTemplate& prompt, const StyleBank& bank) {
  Matrix<float> features(task.size() * bank.size(), backend.joint_dim());
  for (std::size_t m = 0; m < task.size(); ++m) {
    for (std::size_t i = 0; i < bank.size(); ++i) {
      const auto unit = l2_normalize(backend.text_encode(prompt, task.name(m), &bank.styles[i]));
      std::copy(unit.begin(), unit.end(), features.row(m * bank.size() + i).begin());
    }
  }
  return features;
}

DomainProbe<float> build_domain_probe(const EncoderBackend& backend, const StyleBank& bank) {
  std::vector<std::vector<float>> features;
  features.reserve(bank.size());
  for (const auto& style : bank.styles) features.push_back(backend.style_text_encode(style));
  return DomainProbe<float>(features);
}

double mean_domain_uncertainty(const Matrix<float>& features, const DomainProbe<float>& probe,
                               const StyleRemoverParams<float>* remover) {
  if (features.rows() == 0) throw ContractError("mean_domain_uncertainty: no features");
  double sum = 0.0;
  for (std::size_t b = 0; b < features.rows(); ++b) {
    const auto row = features.row(b);
    if (remover) {
      const auto removed = remover_forward(row, *remover);
      sum += domain_uncertainty_loss(softmax(domain_logits<float>(removed, probe)));
    } else {
      sum += domain_uncertainty_loss(softmax(domain_logits<float>(row, probe)));
    }
  }
  return sum / static_cast<double>(features.rows());
}

TrainResult train_one_model(const TaskDefinition& task, const EncoderBackend& backend, const PromptTemplate& prompt,
                            const TrainConfig& config, const PredefinedLexicon* lexicon,
                            const EpochCallback& on_epoch) {
  config.validate();
  if (!prompt.has_class() || !prompt.has_style()) {
    throw ContractError("training template needs both a [class] and an S* placeholder");
  }
  const std::size_t dim = backend.joint_dim();
  const std::size_t token_dim = backend.token_dim();

  auto remover_rng = make_rng(config.seed, "remover-init");
  auto head_rng = make_rng(config.seed, "head-init");
  auto remover = remover_init<float>(dim, config.ratio, remover_rng);
  auto head = head_init(task.size(), dim, head_rng);
  std::vector<float> v_w1(remover.w1.size(), 0.0f);
  std::vector<float> v_w2(remover.w2.size(), 0.0f);
  std::vector<float> v_head(head.weights.size(), 0.0f);

  TrainResult result;
  StyleBank bank = initial_bank(config.style_gen, token_dim, lexicon);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = Clock::now();
    bank = refresh_bank(bank, config.style_gen, token_dim, lexicon, epoch);
    const auto probe = build_domain_probe(backend, bank);
    auto shuffle_rng = make_rng(config.seed, "prompt-shuffle", static_cast<std::uint64_t>(epoch));
    const auto pairs = build_prompt_set(task, bank, shuffle_rng);

    Matrix<float> cache;
    if (config.cache_features) cache = encode_prompt_features(task, backend, prompt, bank);

    double sum_u = 0.0;
    double sum_c = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < pairs.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(pairs.size(), begin + config.batch_size);
      Matrix<float> inputs(end - begin, dim);
      std::vector<std::size_t> targets;
      targets.reserve(end - begin);
      for (std::size_t b = begin; b < end; ++b) {
        const auto& pair = pairs[b];
        auto row = inputs.row(b - begin);
        if (config.cache_features) {
          const auto cached = cache.row(pair.class_index * bank.size() + pair.style_index);
          std::copy(cached.begin(), cached.end(), row.begin());
        } else {
          const auto unit = l2_normalize(
              backend.text_encode(prompt, task.name(pair.class_index), &bank.styles[pair.style_index]));
          std::copy(unit.begin(), unit.end(), row.begin());
        }
        targets.push_back(pair.class_index);
      }

      auto grads = objective_gradients(inputs, targets, remover, head, probe, config.arcface);
      if (!std::isfinite(grads.mean_total)) {
        throw NumericError(describe_failure(epoch + 1, batch_index, grads.mean_uncertainty, grads.mean_classification));
      }
      const double weight = static_cast<double>(end - begin);
      sum_u += weight * grads.mean_uncertainty;
      sum_c += weight * grads.mean_classification;

      sgd_step<float>(remover.w1.flat(), grads.d_w1.flat(), config.learning_rate, config.momentum, v_w1);
      sgd_step<float>(remover.w2.flat(), grads.d_w2.flat(), config.learning_rate, config.momentum, v_w2);
      sgd_step<float>(head.weights.flat(), grads.d_head.flat(), config.learning_rate, config.momentum, v_head);
    }

    EpochMetrics metrics;
    metrics.epoch = epoch + 1;
    metrics.mean_uncertainty = sum_u / static_cast<double>(pairs.size());
    metrics.mean_classification = sum_c / static_cast<double>(pairs.size());
    metrics.mean_total = metrics.mean_uncertainty + metrics.mean_classification;
    metrics.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    metrics.refresh = bank.method_of_last_refresh;
    result.history.push_back(metrics);
    if (on_epoch) on_epoch(metrics);
  }

  Checkpoint& ckpt = result.checkpoint;
  ckpt.remover = std::move(remover);
  ckpt.head = std::move(head);
  ckpt.template_id = prompt.id();
  ckpt.template_pattern = prompt.pattern();
  ckpt.class_names = task.class_names();
  ckpt.backend = backend.descriptor();
  ckpt.seed = config.seed;
  ckpt.config_snapshot = train_config_json(config);
  result.final_bank = std::move(bank);
  return result;
}

}  // namespace dpstyler
