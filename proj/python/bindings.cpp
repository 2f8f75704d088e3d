#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dpstyler/checkpoint.hpp"
#include "dpstyler/config.hpp"
#include "dpstyler/errors.hpp"
#include "dpstyler/inference.hpp"
#include "dpstyler/losses.hpp"
#include "dpstyler/style_generation.hpp"
#include "dpstyler/style_removal.hpp"
#include "dpstyler/toy_backend.hpp"
#include "dpstyler/trainer.hpp"

namespace py = pybind11;
using namespace dpstyler;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<float> to_vector(const FloatArray& a) {
  if (a.ndim() != 1) throw ContractError("expected a 1-D array, got " + std::to_string(a.ndim()) + "-D");
  return {a.data(), a.data() + a.size()};
}

Matrix<float> to_matrix(const FloatArray& a) {
  if (a.ndim() != 2) throw ContractError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix<float>(rows, cols, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const std::vector<float>& v) { return py::array_t<float>(v.size(), v.data()); }

py::array_t<float> to_array(const Matrix<float>& m) {
  py::array_t<float> out({m.rows(), m.cols()});
  std::copy(m.flat().begin(), m.flat().end(), out.mutable_data());
  return out;
}

std::vector<std::vector<float>> to_rows(const FloatArray& a) {
  const auto m = to_matrix(a);
  std::vector<std::vector<float>> rows;
  for (std::size_t r = 0; r < m.rows(); ++r) rows.emplace_back(m.row(r).begin(), m.row(r).end());
  return rows;
}

StyleRemoverParams<float> remover_from(const FloatArray& w1, const FloatArray& w2) {
  StyleRemoverParams<float> p{to_matrix(w1), to_matrix(w2), 1};
  if (p.w1.cols() == 0 || p.w1.rows() % p.w1.cols() != 0) throw ContractError("W1 must be C x C/r");
  p.ratio = static_cast<int>(p.w1.rows() / p.w1.cols());
  if (p.w2.rows() != p.w1.cols() || p.w2.cols() != p.w1.rows()) throw ContractError("W2 must be C/r x C");
  return p;
}

py::dict metrics_dict(const EpochMetrics& m) {
  py::dict d;
  d["epoch"] = m.epoch;
  d["mean_uncertainty"] = m.mean_uncertainty;
  d["mean_classification"] = m.mean_classification;
  d["mean_total"] = m.mean_total;
  d["wall_seconds"] = m.wall_seconds;
  d["refresh"] = std::string(to_string(m.refresh));
  return d;
}

/// Backend, task and lexicon built from one config file.
struct Session {
  RunConfig config;
  std::unique_ptr<EncoderBackend> backend;
  std::optional<PredefinedLexicon> lexicon;

  explicit Session(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
    config = load_run_config(path);
    if (seed) override_seed(config, *seed);
    check_referenced_paths(config);
    backend = make_backend(config);
    lexicon = make_lexicon(config, *backend);
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Source-free domain generalization core: style synthesis, style removal, training and evaluation.";

  auto base = py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<LoadError>(m, "LoadError", PyExc_OSError);
  py::register_exception<DecodeError>(m, "DecodeError", PyExc_OSError);
  py::register_exception<EncodeError>(m, "EncodeError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  (void)base;

  m.def("l2_normalize", [](const FloatArray& v) { return to_array(l2_normalize(to_vector(v))); }, py::arg("v"));
  m.def("softmax", [](const FloatArray& z) { return to_array(softmax(to_vector(z))); }, py::arg("z"));

  m.def(
      "random_style",
      [](const std::string& distribution, std::size_t dim, std::uint64_t seed) {
        auto rng = make_rng(seed, "python-random-style");
        return to_array(random_style(parse_random_distribution(distribution), dim, rng));
      },
      py::arg("distribution"), py::arg("dim"), py::arg("seed") = 0,
      "One style vector from normal, xavier_uniform, xavier_normal, kaiming_normal or kaiming_uniform.");
  m.def(
      "sample_mix_weights",
      [](std::size_t count, double alpha, std::uint64_t seed) {
        auto rng = make_rng(seed, "python-mix-weights");
        return sample_mix_weights(count, alpha, rng);
      },
      py::arg("count"), py::arg("alpha") = 0.1, py::arg("seed") = 0);
  m.def(
      "style_bank",
      [](std::size_t K, const std::string& strategy, std::size_t dim, int epoch, std::uint64_t seed,
         std::optional<FloatArray> lexicon) {
        StyleGenConfig cfg;
        cfg.K = K;
        cfg.strategy = parse_style_strategy(strategy);
        cfg.seed = seed;
        std::optional<PredefinedLexicon> lex;
        if (lexicon) {
          const auto rows = to_rows(*lexicon);
          std::vector<std::string> labels;
          for (std::size_t j = 0; j < rows.size(); ++j) labels.push_back("w" + std::to_string(j));
          lex.emplace(labels, rows);
          cfg.L = rows.size();
        }
        const auto* lp = lex ? &*lex : nullptr;
        const auto bank = refresh_bank(initial_bank(cfg, dim, lp), cfg, dim, lp, epoch);
        Matrix<float> out(bank.size(), dim);
        for (std::size_t i = 0; i < bank.size(); ++i) std::copy(bank.styles[i].begin(), bank.styles[i].end(), out.row(i).begin());
        return py::make_tuple(to_array(out), std::string(to_string(bank.method_of_last_refresh)));
      },
      py::arg("K"), py::arg("strategy"), py::arg("dim"), py::arg("epoch") = 0, py::arg("seed") = 0,
      py::arg("lexicon") = py::none(), "K x D bank for one epoch and the method that produced it.");

  m.def(
      "remover_forward",
      [](const FloatArray& v, const FloatArray& w1, const FloatArray& w2) {
        return to_array(remover_forward(to_vector(v), remover_from(w1, w2)));
      },
      py::arg("v"), py::arg("w1"), py::arg("w2"), "R(v) = (1 + sigmoid(relu(v W1) W2)) * v.");
  m.def(
      "domain_uncertainty_loss", [](const FloatArray& p) { return domain_uncertainty_loss(to_vector(p)); },
      py::arg("p"), "sum p ln p, in [-ln K, 0].");
  m.def(
      "arcface_loss",
      [](const FloatArray& feature, const FloatArray& head, std::size_t target, double scale, double margin) {
        const ClassifierHead<float> h{to_matrix(head)};
        const auto f = to_vector(feature);
        return arcface_loss<float>(f, h, target, ArcFaceConfig{scale, margin}).loss;
      },
      py::arg("feature"), py::arg("head"), py::arg("target"), py::arg("scale") = 5.0, py::arg("margin") = 0.5);
  m.def(
      "fuse_scores",
      [](const FloatArray& scores, const std::string& fusion) { return fuse_scores(to_rows(scores), parse_fusion(fusion)); },
      py::arg("scores"), py::arg("fusion") = "max", "Class chosen from an N x M score table.");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_static("load", [](const std::filesystem::path& path) { return load_checkpoint(path); }, py::arg("path"))
      .def("save", [](const Checkpoint& c, const std::filesystem::path& path) { save_checkpoint(c, path); },
           py::arg("path"))
      .def("to_bytes",
           [](const Checkpoint& c) {
             const auto bytes = serialize_checkpoint(c);
             return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
           })
      .def_static("from_bytes",
                  [](const py::bytes& data) {
                    const std::string s = data;
                    return deserialize_checkpoint(std::vector<unsigned char>(s.begin(), s.end()));
                  })
      .def_property_readonly("w1", [](const Checkpoint& c) { return to_array(c.remover.w1); })
      .def_property_readonly("w2", [](const Checkpoint& c) { return to_array(c.remover.w2); })
      .def_property_readonly("head", [](const Checkpoint& c) { return to_array(c.head.weights); })
      .def_readonly("template_id", &Checkpoint::template_id)
      .def_readonly("template_pattern", &Checkpoint::template_pattern)
      .def_readonly("class_names", &Checkpoint::class_names)
      .def_readonly("seed", &Checkpoint::seed)
      .def_readonly("config_snapshot", &Checkpoint::config_snapshot)
      .def("predict_scores",
           [](const Checkpoint& c, const FloatArray& embedding, double scale) {
             return to_array(predict_scores(to_vector(embedding), c, scale));
           },
           py::arg("embedding"), py::arg("scale") = 1.0)
      .def("__repr__", [](const Checkpoint& c) {
        return "<Checkpoint " + c.template_id + " C=" + std::to_string(c.remover.dim()) +
               " M=" + std::to_string(c.class_names.size()) + ">";
      });

  py::class_<ToyBackend>(m, "ToyBackend")
      .def(py::init([](std::vector<std::string> classes, std::size_t C, std::size_t D, std::uint64_t seed,
                       double noise, double image_style_gain, std::size_t style_channels) {
             ToyBackendSpec spec;
             spec.joint_dim = C;
             spec.token_dim = D;
             spec.max_classes = std::max(spec.max_classes, classes.size());
             spec.seed = seed;
             spec.noise = noise;
             spec.image_style_gain = image_style_gain;
             spec.style_channels = style_channels;
             return ToyBackend(spec, std::move(classes));
           }),
           py::arg("classes"), py::arg("C") = 64, py::arg("D") = 32, py::arg("seed") = 0, py::arg("noise") = 0.1,
           py::arg("image_style_gain") = 1.0, py::arg("style_channels") = 0)
      .def_property_readonly("C", [](const ToyBackend& b) { return b.joint_dim(); })
      .def_property_readonly("D", [](const ToyBackend& b) { return b.token_dim(); })
      .def("text_encode",
           [](const ToyBackend& b, const std::string& pattern, const std::string& class_name,
              std::optional<FloatArray> style) {
             if (style) {
               const auto s = to_vector(*style);
               return to_array(b.text_encode(PromptTemplate::styled(pattern), class_name, &s));
             }
             return to_array(b.text_encode(PromptTemplate::content_only(pattern), class_name, nullptr));
           },
           py::arg("pattern"), py::arg("class_name"), py::arg("style") = py::none())
      .def("image_encode",
           [](const ToyBackend& b, std::size_t class_index, const FloatArray& nuisance) {
             return to_array(b.image_encode(SyntheticImage{class_index, to_vector(nuisance)}));
           },
           py::arg("class_index"), py::arg("nuisance"))
      .def("token_embedding",
           [](const ToyBackend& b, const std::string& word) { return to_array(b.token_embedding_lookup(word)); },
           py::arg("word"));

  m.def(
      "generate_toy_dataset",
      [](const std::filesystem::path& root, const std::vector<std::string>& classes, std::size_t D,
         std::size_t domains, std::size_t per_class, double jitter, std::uint64_t domain_seed,
         std::uint64_t data_seed) {
        auto ds = default_toy_domains(D, domains, domain_seed);
        for (auto& d : ds) d.jitter = jitter;
        return generate_toy_dataset(root, classes, ds, per_class, data_seed);
      },
      py::arg("root"), py::arg("classes"), py::arg("D") = 32, py::arg("domains") = 4, py::arg("per_class") = 10,
      py::arg("jitter") = 1.0, py::arg("domain_seed") = 99, py::arg("data_seed") = 7);

  m.def(
      "config_json",
      [](const std::filesystem::path& path) {
        const auto cfg = load_run_config(path);
        auto doc = to_json(cfg);
        doc["fingerprint"] = config_fingerprint(cfg);
        return doc.dump();
      },
      py::arg("config"), "Merged config document as JSON text.");

  m.def(
      "train",
      [](const std::filesystem::path& config, std::size_t template_index, std::optional<std::uint64_t> seed) {
        const Session s(config, seed);
        const auto templates = s.config.prompt_templates();
        if (template_index >= templates.size()) throw ContractError("template index out of range");
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train_one_model(s.config.task(), *s.backend, templates[template_index], s.config.train,
                                   s.lexicon ? &*s.lexicon : nullptr);
        }
        py::list history;
        for (const auto& h : result.history) history.append(metrics_dict(h));
        return py::make_tuple(result.checkpoint, history);
      },
      py::arg("config"), py::arg("template_index") = 0, py::arg("seed") = py::none(),
      "Train one model; returns (Checkpoint, per-epoch metrics).");

  m.def(
      "evaluate",
      [](const std::filesystem::path& config, const std::vector<Checkpoint>& members, const std::string& fusion) {
        const Session s(config, std::nullopt);
        EnsembleBundle bundle{members, parse_fusion(fusion)};
        bundle.validate();
        const auto manifest = resolve_manifest(s.config.eval.manifest, s.config.task());
        auto report =
            evaluate(manifest, *s.backend, [&](const JointEmbedding& e) { return ensemble_predict(e, bundle); });
        report.label = "ensemble-" + fusion;
        report.config_fingerprint = config_fingerprint(s.config);
        report.seed = s.config.train.seed;
        return report.to_json();
      },
      py::arg("config"), py::arg("members"), py::arg("fusion") = "max", "Ensemble report as JSON text.");

  m.def(
      "zeroshot",
      [](const std::filesystem::path& config, const std::string& prompt) {
        const Session s(config, std::nullopt);
        if (prompt != "C" && prompt != "PC") throw ContractError("prompt must be 'C' or 'PC'");
        const ZeroShotClassifier zs(*s.backend, s.config.task(), prompt == "C" ? ZeroShotPrompt::C : ZeroShotPrompt::PC);
        const auto manifest = resolve_manifest(s.config.eval.manifest, s.config.task());
        auto report = evaluate(manifest, *s.backend, [&](const JointEmbedding& e) { return zs.predict(e); });
        report.label = "zeroshot-" + prompt;
        report.config_fingerprint = config_fingerprint(s.config);
        report.seed = s.config.train.seed;
        return report.to_json();
      },
      py::arg("config"), py::arg("prompt") = "PC", "Zero-shot report as JSON text.");
}
