#include "dpstyler/inference.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace dpstyler {

std::string_view to_string(Fusion fusion) { return fusion == Fusion::max ? "max" : "average"; }

Fusion parse_fusion(std::string_view name) {
  if (name == "max") return Fusion::max;
  if (name == "average") return Fusion::average;
  throw ContractError("unknown fusion mode '" + std::string(name) + "' (expected max or average)");
}

std::vector<float> predict_scores(const JointEmbedding& image_embedding, const Checkpoint& member, double scale) {
  if (image_embedding.size() != member.remover.dim()) {
    throw ContractError("predict_scores: embedding length " + std::to_string(image_embedding.size()) +
                        " != checkpoint C=" + std::to_string(member.remover.dim()));
  }
  const auto unit = l2_normalize(image_embedding);
  const auto removed = remover_forward(unit, member.remover);
  std::vector<float> scores(member.head.classes());
  for (std::size_t m = 0; m < scores.size(); ++m) {
    scores[m] = static_cast<float>(scale) * cosine_similarity(removed, member.head.weights.row(m));
  }
  return scores;
}

void EnsembleBundle::validate() const {
  if (members.empty()) throw ContractError("ensemble needs at least one member");
  const auto& first = members.front();
  for (const auto& m : members) {
    if (m.remover.dim() != first.remover.dim()) throw ContractError("ensemble members disagree on C");
    if (m.class_names != first.class_names) throw ContractError("ensemble members disagree on class names");
  }
}

std::size_t fuse_scores(const std::vector<std::vector<float>>& scores, Fusion fusion) {
  if (scores.empty() || scores.front().empty()) throw ContractError("fuse_scores: empty score table");
  const std::size_t classes = scores.front().size();
  for (const auto& row : scores) {
    if (row.size() != classes) throw ContractError("fuse_scores: ragged score table");
  }
  if (fusion == Fusion::average) {
    std::vector<double> mean(classes, 0.0);
    for (const auto& row : scores) {
      for (std::size_t m = 0; m < classes; ++m) mean[m] += row[m];
    }
    for (auto& x : mean) x /= static_cast<double>(scores.size());
    return argmax(mean);
  }
  // Scanning classes in the outer loop makes the first maximum the lowest class, then member.
  std::size_t best_class = 0;
  float best = scores[0][0];
  for (std::size_t m = 0; m < classes; ++m) {
    for (const auto& row : scores) {
      if (row[m] > best) {
        best = row[m];
        best_class = m;
      }
    }
  }
  return best_class;
}

std::size_t ensemble_predict(const JointEmbedding& image_embedding, const EnsembleBundle& bundle) {
  bundle.validate();
  std::vector<std::vector<float>> scores;
  scores.reserve(bundle.members.size());
  for (const auto& member : bundle.members) scores.push_back(predict_scores(image_embedding, member));
  return fuse_scores(scores, bundle.fusion);
}

PromptTemplate zeroshot_template(ZeroShotPrompt style) {
  return style == ZeroShotPrompt::C ? PromptTemplate::content_only("[class]", "zs-c")
                                    : PromptTemplate::content_only("a photo of a [class]", "zs-pc");
}

ZeroShotClassifier::ZeroShotClassifier(const EncoderBackend& backend, const TaskDefinition& task,
                                       ZeroShotPrompt style) {
  const auto prompt = zeroshot_template(style);
  for (const auto& name : task.class_names()) {
    class_features_.push_back(l2_normalize(backend.text_encode(prompt, name, nullptr)));
  }
}

std::size_t ZeroShotClassifier::predict(const JointEmbedding& image_embedding) const {
  std::vector<float> scores;
  scores.reserve(class_features_.size());
  for (const auto& f : class_features_) scores.push_back(cosine_similarity(image_embedding, f));
  return argmax(scores);
}

std::size_t zeroshot_predict(const JointEmbedding& image_embedding, const EncoderBackend& backend,
                             const TaskDefinition& task, ZeroShotPrompt style) {
  return ZeroShotClassifier(backend, task, style).predict(image_embedding);
}

std::size_t EvalReport::total_errors() const {
  std::size_t n = 0;
  for (const auto& d : domains) n += d.errors;
  return n;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["label"] = label;
  j["domains"] = nlohmann::json::array();
  for (const auto& d : domains) {
    j["domains"].push_back(
        {{"domain", d.domain}, {"accuracy", d.accuracy}, {"correct", d.correct}, {"total", d.total}, {"errors", d.errors}});
  }
  j["average"] = average;
  j["config_fingerprint"] = config_fingerprint;
  j["seed"] = seed;
  j["decode_errors"] = total_errors();
  return j.dump();
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  if (!label.empty()) out << label << '\n';
  out << std::left << std::setw(16) << "domain" << std::right << std::setw(10) << "top-1 %" << std::setw(10)
      << "correct" << std::setw(8) << "total" << std::setw(8) << "errors" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& d : domains) {
    out << std::left << std::setw(16) << d.domain << std::right << std::setw(10) << d.accuracy << std::setw(10)
        << d.correct << std::setw(8) << d.total << std::setw(8) << d.errors << '\n';
  }
  out << std::left << std::setw(16) << "average" << std::right << std::setw(10) << average << '\n';
  return out.str();
}

EvalReport evaluate(const DatasetManifest& manifest, const EncoderBackend& backend, const Predictor& predictor) {
  EvalReport report;
  for (const auto& domain : manifest.domains) report.domains.push_back({domain});
  for (const auto& entry : manifest.entries) {
    const auto it = std::find(manifest.domains.begin(), manifest.domains.end(), entry.domain);
    auto& slot = report.domains[static_cast<std::size_t>(it - manifest.domains.begin())];
    JointEmbedding embedding;
    try {
      embedding = backend.image_encode(backend.decode_image(entry.path));
    } catch (const DecodeError&) {
      ++slot.errors;
      continue;
    }
    ++slot.total;
    if (predictor(embedding) == entry.label) ++slot.correct;
  }
  double sum = 0.0;
  for (auto& d : report.domains) {
    d.accuracy = d.total == 0 ? 0.0 : 100.0 * static_cast<double>(d.correct) / static_cast<double>(d.total);
    sum += d.accuracy;
  }
  report.average = report.domains.empty() ? 0.0 : sum / static_cast<double>(report.domains.size());
  return report;
}

std::size_t export_embeddings(const DatasetManifest& manifest, const EncoderBackend& backend,
                              const Checkpoint* checkpoint, const std::vector<std::string>& class_names,
                              const std::filesystem::path& out_path) {
  const std::size_t dim = backend.joint_dim();
  if (checkpoint != nullptr && checkpoint->remover.dim() != dim) {
    throw ContractError("export_embeddings: checkpoint C does not match the backend");
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write embeddings to " + out_path.string());
  out << "path,domain,class";
  for (std::size_t c = 0; c < dim; ++c) out << ",raw_" << c;
  if (checkpoint != nullptr) {
    for (std::size_t c = 0; c < dim; ++c) out << ",removed_" << c;
  }
  out << '\n';

  char buf[32];
  auto write_values = [&](const std::vector<float>& values) {
    for (float x : values) {
      std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(x));
      out << buf;
    }
  };
  std::size_t rows = 0;
  for (const auto& entry : manifest.entries) {
    JointEmbedding raw;
    try {
      raw = l2_normalize(backend.image_encode(backend.decode_image(entry.path)));
    } catch (const DecodeError&) {
      continue;
    }
    out << entry.path.string() << ',' << entry.domain << ',' << class_names.at(entry.label);
    write_values(raw);
    if (checkpoint != nullptr) write_values(remover_forward(raw, checkpoint->remover));
    out << '\n';
    ++rows;
  }
  if (!out) throw std::runtime_error("write failed for " + out_path.string());
  return rows;
}

}  // namespace dpstyler
