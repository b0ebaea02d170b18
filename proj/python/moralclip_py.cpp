#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "moralclip/agreement.hpp"
#include "moralclip/compass.hpp"
#include "moralclip/dataset.hpp"
#include "moralclip/evaluation.hpp"
#include "moralclip/features.hpp"
#include "moralclip/labels.hpp"
#include "moralclip/losses.hpp"
#include "moralclip/manifest.hpp"
#include "moralclip/synthetic.hpp"
#include "moralclip/training.hpp"
#include "moralclip/version.hpp"

namespace py = pybind11;
using namespace moralclip;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.values().begin());
  return m;
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<MoralLabelVector> labels_of(const std::vector<std::string>& encoded) {
  std::vector<MoralLabelVector> out;
  out.reserve(encoded.size());
  for (const auto& e : encoded) out.push_back(parse_label(e));
  return out;
}

LabeledEmbeddings embeddings(const Array& vectors, const std::vector<std::string>& labels,
                             std::optional<std::vector<std::string>> ids) {
  LabeledEmbeddings e;
  e.vectors = to_matrix(vectors);
  e.labels = labels_of(labels);
  if (e.labels.size() != e.vectors.rows()) throw ValidationError("one label per row is required");
  if (ids) {
    e.ids = *ids;
  } else {
    for (std::size_t i = 0; i < e.vectors.rows(); ++i) e.ids.push_back(std::to_string(i));
  }
  return e;
}

std::vector<Polarity> polarities(const std::vector<std::string>& words) {
  std::vector<Polarity> out;
  for (const auto& w : words) out.push_back(parse_rating_word(w, "rating"));
  return out;
}

py::dict loss_dict(const LossValue& v) {
  py::dict d;
  d["value"] = v.value;
  d["grad_image"] = to_array(v.grad_image);
  d["grad_text"] = to_array(v.grad_text);
  return d;
}

}  // namespace

PYBIND11_MODULE(_moralclip, m) {
  m.attr("__version__") = std::string(kVersion);

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // labels
  m.def("moral_similarity", [](const std::string& a, const std::string& b) {
    return moral_similarity(parse_label(a), parse_label(b));
  });
  m.def("shares_label", [](const std::string& a, const std::string& b) {
    return shares_label(parse_label(a), parse_label(b));
  });
  m.def("collapse_polarity", [](const std::string& a) { return std::string(to_string(collapse_polarity(parse_label(a)))); });
  m.def("active_set", [](const std::string& a) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [f, p] : active_set(parse_label(a))) out.emplace_back(to_string(f), to_string(p));
    return out;
  });
  m.def("normalize_label", [](const std::string& a) { return serialize_label(parse_label(a)); });

  // features
  m.def("cosine_matrix",
        [](const Array& a, const Array& b, std::optional<double> temperature) {
          const auto s = cosine_matrix(to_matrix(a), to_matrix(b), temperature);
          Matrix out(s.n_rows, s.n_cols);
          std::copy(s.values.begin(), s.values.end(), out.values().begin());
          return to_array(out);
        },
        py::arg("a"), py::arg("b"), py::arg("temperature") = py::none());
  m.def("read_bank", [](const std::filesystem::path& p) {
    const FeatureBank bank = read_bank(p);
    return py::make_tuple(bank.ids(), to_array(bank.to_matrix()));
  });
  m.def("write_bank", [](const std::filesystem::path& p, const std::vector<std::string>& ids, const Array& v) {
    write_bank(bank_from_matrix(to_matrix(v), ids), p);
  });

  // losses
  m.def("clip_contrastive_loss", [](const Array& img, const Array& txt, double tau) {
    return loss_dict(clip_contrastive_loss(to_matrix(img), to_matrix(txt), tau));
  });
  m.def("moral_loss",
        [](const Array& img, const Array& txt, const std::vector<std::string>& img_labels,
           const std::vector<std::string>& txt_labels, double tau, bool include_diagonal, bool match_scale) {
          const auto il = labels_of(img_labels), tl = labels_of(txt_labels);
          return loss_dict(moral_loss(to_matrix(img), to_matrix(txt), il, tl, tau,
                                      {include_diagonal, match_scale ? MoralScale::MatchScale : MoralScale::Literal}));
        },
        py::arg("image"), py::arg("text"), py::arg("image_labels"), py::arg("text_labels"), py::arg("temperature"),
        py::arg("include_diagonal") = false, py::arg("match_scale") = false);
  m.def("total_loss",
        [](const Array& img, const Array& txt, const std::vector<std::string>& img_labels,
           const std::vector<std::string>& txt_labels, double lambda, double tau) {
          const auto il = labels_of(img_labels), tl = labels_of(txt_labels);
          const auto r = total_loss(to_matrix(img), to_matrix(txt), il, tl, lambda, tau);
          py::dict d;
          d["total"] = r.total;
          d["clip_term"] = r.clip_term;
          d["moral_term"] = r.moral_term;
          d["grad_image"] = to_array(r.grad_image);
          d["grad_text"] = to_array(r.grad_text);
          return d;
        });

  // evaluation
  m.def("mean_average_precision",
        [](const Array& q, const std::vector<std::string>& ql, const Array& c, const std::vector<std::string>& cl,
           bool exclude_self, std::optional<std::vector<std::string>> q_ids, std::optional<std::vector<std::string>> c_ids) {
          return mean_average_precision(embeddings(q, ql, q_ids), embeddings(c, cl, c_ids), exclude_self).value;
        },
        py::arg("queries"), py::arg("query_labels"), py::arg("corpus"), py::arg("corpus_labels"),
        py::arg("exclude_self") = false, py::arg("query_ids") = py::none(), py::arg("corpus_ids") = py::none());
  m.def("discriminative_power", [](const Array& v, const std::vector<std::string>& labels) {
    return discriminative_power(embeddings(v, labels, std::nullopt));
  });
  m.def("silhouette", [](const Array& v, const std::vector<std::string>& labels) {
    return silhouette(embeddings(v, labels, std::nullopt));
  });

  // dataset
  m.def("classify_foundation", [](double valence, double relevance) {
    return std::string(to_string(classify_foundation(valence, relevance)));
  });

  // agreement
  m.def("krippendorff_alpha", [](const std::vector<std::vector<std::string>>& items) {
    std::vector<std::vector<Polarity>> coded;
    for (const auto& i : items) coded.push_back(polarities(i));
    return krippendorff_alpha(coded);
  });
  m.def("cohen_kappa", [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return cohen_kappa(polarities(a), polarities(b));
  });
  m.def("majority_vote", [](const std::vector<std::string>& ratings) -> std::optional<std::string> {
    const auto v = majority_vote(polarities(ratings));
    if (!v) return std::nullopt;
    return std::string(rating_word(*v));
  });

  // pipeline on files
  m.def("synthesize",
        [](const std::filesystem::path& out, std::size_t n, std::size_t dim, double signal, double noise,
           double semantic, double label_signal, std::uint64_t seed) {
          SyntheticCorpusConfig cfg;
          cfg.n_samples = n;
          cfg.feature_dim = dim;
          cfg.moral_signal_strength = signal;
          cfg.noise_scale = noise;
          cfg.semantic_strength = semantic;
          cfg.label_signal_strength = label_signal;
          cfg.seed = seed;
          const auto c = synthesize_corpus(cfg);
          std::filesystem::create_directories(out);
          write_manifest(c.records, out / "manifest.jsonl");
          write_bank(c.images, out / "image_features.mcfb");
          write_bank(c.texts, out / "text_features.mcfb");
        },
        py::arg("out"), py::arg("n_samples") = 2000, py::arg("dim") = 64, py::arg("signal") = 5.0,
        py::arg("noise") = 1.0, py::arg("semantic") = 1.0, py::arg("label_signal") = 0.0, py::arg("seed") = 7);
  m.def("split",
        [](const std::filesystem::path& in, const std::filesystem::path& out, double val, double test, std::uint64_t seed) {
          write_manifest(stratified_split(read_manifest(in), {val, test, seed}), out);
        },
        py::arg("manifest"), py::arg("out"), py::arg("val_fraction") = 0.05, py::arg("test_fraction") = 0.05,
        py::arg("seed") = 0);
  m.def("train",
        [](const std::filesystem::path& manifest, const std::filesystem::path& image_bank,
           const std::filesystem::path& text_bank, double lambda, std::size_t epochs, double learning_rate,
           bool match_scale, std::uint64_t seed, const std::string& variant) {
          TrainConfig cfg;
          cfg.lambda = lambda;
          cfg.epochs = epochs;
          cfg.learning_rate = learning_rate;
          cfg.moral_scale = match_scale ? MoralScale::MatchScale : MoralScale::Literal;
          cfg.seed = seed;
          const Manifest records = read_manifest(manifest);
          const FeatureBank images = read_bank(image_bank), texts = read_bank(text_bank);
          const auto r = train(cfg, records, images, texts, parse_variant(variant));
          py::dict d;
          d["best_epoch"] = r.best_epoch;
          d["best_val_map"] = r.best_val_map;
          d["history"] = r.history.to_csv();
          const Manifest test = select_split(records, Split::Test);
          if (!test.empty()) d["test_map"] = retrieval_map(embed_records(r.best_model, test, images, texts)).mean;
          return d;
        },
        py::arg("manifest"), py::arg("image_bank"), py::arg("text_bank"), py::arg("lambda_") = 0.4,
        py::arg("epochs") = 10, py::arg("learning_rate") = 1e-5, py::arg("match_scale") = false, py::arg("seed") = 0,
        py::arg("variant") = "normal");
}
