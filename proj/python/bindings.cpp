#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>

#include "l2copy/config.hpp"
#include "l2copy/data.hpp"
#include "l2copy/errors.hpp"
#include "l2copy/eval.hpp"
#include "l2copy/experiment.hpp"
#include "l2copy/labeling.hpp"
#include "l2copy/train.hpp"

namespace py = pybind11;
using namespace l2copy;

namespace {

using PyTriplet = std::tuple<Tokens, Tokens, Tokens, std::optional<Labels>>;

Triplet to_triplet(const PyTriplet& t) {
  return {std::get<0>(t), std::get<1>(t), std::get<2>(t), std::get<3>(t)};
}

PyTriplet from_triplet(const Triplet& t) { return {t.src, t.mt, t.pe, t.labels}; }

std::vector<Triplet> to_corpus(const std::vector<PyTriplet>& rows) {
  std::vector<Triplet> corpus;
  corpus.reserve(rows.size());
  for (const auto& r : rows) corpus.push_back(to_triplet(r));
  return corpus;
}

// A trained or loaded model together with the configuration and vocabulary
// it was built with.
class System {
 public:
  System(Config config, Vocab vocab, std::unique_ptr<ApeModel> model)
      : config_(std::move(config)), vocab_(std::move(vocab)), model_(std::move(model)) {}

  static System train(const Config& config, const std::vector<PyTriplet>& corpus) {
    auto trained = train_system(config, to_corpus(corpus));
    return System(std::move(trained.config), std::move(trained.vocab), std::move(trained.model));
  }

  static System load(const std::string& path) {
    auto ckpt = load_checkpoint(path);
    return System(std::move(ckpt.config), std::move(ckpt.vocab), std::move(ckpt.model));
  }

  void save(const std::string& path) const { save_checkpoint(path, config_, vocab_, *model_); }

  Tokens decode(const Tokens& src, const Tokens& mt) const {
    const std::vector<Triplet> pairs = {Triplet{src, mt, {}, std::nullopt}};
    return decode_corpus(*model_, vocab_, pairs, config_.decode).front();
  }

  std::vector<double> copy_scores(const Tokens& src, const Tokens& mt) const {
    return model_->copy_scores(vocab_.encode(src), vocab_.encode(mt));
  }

  SystemScores score(const std::vector<PyTriplet>& corpus) const {
    return score_system(*model_, vocab_, config_, to_corpus(corpus));
  }

  const Config& config() const { return config_; }
  std::size_t vocab_size() const { return vocab_.size(); }

 private:
  Config config_;
  Vocab vocab_;
  std::unique_ptr<ApeModel> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Learning-to-copy automatic post-editing";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  m.def("split_tokens", &split_tokens, py::arg("line"));
  m.def("join_tokens", &join_tokens, py::arg("tokens"));

  m.def(
      "lcs_length", [](const Tokens& a, const Tokens& b) { return lcs_length(a, b); }, py::arg("a"), py::arg("b"));
  m.def(
      "lcs_labels",
      [](const Tokens& mt, const Tokens& pe, bool union_of_alignments) {
        return lcs_labels(mt, pe, union_of_alignments ? LabelMode::union_of_alignments : LabelMode::single);
      },
      py::arg("mt"), py::arg("pe"), py::arg("union_of_alignments") = false);

  m.def(
      "ter", [](const Tokens& hyp, const Tokens& ref) { return ter(hyp, ref); }, py::arg("hyp"), py::arg("ref"),
      "Sentence TER as a fraction of the reference length.");
  m.def("corpus_ter", &corpus_ter, py::arg("hyps"), py::arg("refs"));
  m.def("bleu", &bleu, py::arg("hyps"), py::arg("refs"), "Corpus BLEU-4 in percent.");
  m.def("copying_accuracy", &copying_accuracy, py::arg("hyps"), py::arg("refs"), py::arg("mts"));
  m.def(
      "prediction_accuracy",
      [](const std::vector<double>& scores, const Labels& labels) { return prediction_accuracy(scores, labels); },
      py::arg("scores"), py::arg("labels"));

  py::class_<BpeModel>(m, "BpeModel")
      .def("apply", [](const BpeModel& b, const std::string& text) { return bpe_apply(b, text); })
      .def("to_text", &BpeModel::to_text)
      .def_static("from_text", [](const std::string& text) { return BpeModel::from_text(text); })
      .def_property_readonly("merge_count", [](const BpeModel& b) { return b.merges.size(); });
  m.def("bpe_learn", &bpe_learn, py::arg("lines"), py::arg("merges"));
  m.def("bpe_join", &bpe_join, py::arg("subwords"));

  m.def(
      "synth_corpus",
      [](std::uint64_t seed, std::size_t n, std::size_t vocab_size, double sub_rate, double del_rate,
         double ins_rate) {
        SynthOptions o;
        o.seed = seed;
        o.n = n;
        o.vocab_size = vocab_size;
        o.noise = {sub_rate, del_rate, ins_rate};
        std::vector<PyTriplet> rows;
        for (const auto& t : synth_corpus(o).triplets) rows.push_back(from_triplet(t));
        return rows;
      },
      py::arg("seed") = 1, py::arg("n") = 2000, py::arg("vocab_size") = 50, py::arg("sub_rate") = 0.15,
      py::arg("del_rate") = 0.0, py::arg("ins_rate") = 0.0,
      "Synthetic (src, mt, pe, labels) triplets.");

  py::class_<Config>(m, "Config")
      .def(py::init<>())
      .def_static("profile", [](const std::string& name) { return profile_config(name); }, py::arg("name"))
      .def("set", [](Config& c, const std::string& key, const std::string& value) { c.set(key, value); })
      .def("get", [](const Config& c, const std::string& key) { return c.get(key); })
      .def_static("keys", &Config::keys)
      .def("to_text", &Config::to_text)
      .def("validate", &Config::validate);

  py::class_<SystemScores>(m, "SystemScores")
      .def_readonly("ter", &SystemScores::ter)
      .def_readonly("bleu", &SystemScores::bleu)
      .def_readonly("token_acc", &SystemScores::token_acc)
      .def_readonly("pred_acc", &SystemScores::pred_acc);

  py::class_<System>(m, "System")
      .def_static("train", &System::train, py::arg("config"), py::arg("corpus"),
                  py::call_guard<py::gil_scoped_release>())
      .def_static("load", &System::load, py::arg("path"))
      .def("save", &System::save, py::arg("path"))
      .def("decode", &System::decode, py::arg("src"), py::arg("mt"))
      .def("copy_scores", &System::copy_scores, py::arg("src"), py::arg("mt"))
      .def("score", &System::score, py::arg("corpus"))
      .def_property_readonly("config", &System::config)
      .def_property_readonly("vocab_size", &System::vocab_size);
}
