#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eapo/error.hpp"
#include "eapo/evaluation.hpp"
#include "eapo/objectives.hpp"
#include "eapo/pipeline.hpp"
#include "eapo/retrieval.hpp"
#include "eapo/training.hpp"

namespace py = pybind11;
using namespace eapo;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

std::vector<std::vector<double>> rows_of(const Array& x) {
  if (x.ndim() != 2) throw InvalidArgument("expected a 2-D feature array");
  const auto r = x.unchecked<2>();
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(r.shape(0)));
  for (py::ssize_t i = 0; i < r.shape(0); ++i) {
    rows[i].resize(static_cast<std::size_t>(r.shape(1)));
    for (py::ssize_t j = 0; j < r.shape(1); ++j) rows[i][j] = r(i, j);
  }
  return rows;
}

Dataset make_dataset(const Array& x, const Labels& y, std::optional<Array> intensity) {
  auto rows = rows_of(x);
  const auto yl = y.unchecked<1>();
  if (static_cast<std::size_t>(yl.shape(0)) != rows.size()) {
    throw InvalidArgument("features and labels differ in length");
  }
  std::vector<Record> recs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Record r{std::move(rows[i]), yl(i), std::nullopt, i};
    if (intensity && r.label == 1) r.intensity = intensity->at(i);
    recs.push_back(std::move(r));
  }
  const std::size_t dim = x.ndim() == 2 ? static_cast<std::size_t>(x.shape(1)) : 0;
  return Dataset(std::move(recs), dim);
}

Array features_of(const Dataset& ds) {
  Array out({ds.size(), ds.dim()});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) w(i, j) = ds[i].features[j];
  }
  return out;
}

py::dict dataset_dict(const Dataset& ds) {
  py::dict d;
  d["features"] = features_of(ds);
  d["labels"] = py::array(py::cast(ds.labels()));
  std::vector<std::optional<double>> inten;
  for (const auto& r : ds.records()) inten.push_back(r.intensity);
  d["intensity"] = inten;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["threshold"] = r.threshold;
  d["accuracy"] = r.accuracy;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["false_positive_rate"] = r.false_positive_rate;
  d["roc_auc"] = r.roc_auc;
  d["tp"] = r.counts.tp;
  d["fp"] = r.counts.fp;
  d["tn"] = r.counts.tn;
  d["fn"] = r.counts.fn;
  return d;
}

py::tuple loss_tuple(const LossValue& l) { return py::make_tuple(l.value, l.dvalue_dlogit); }

BaseLoss base_loss(const std::string& kind, const FocalParams& focal) {
  return BaseLoss{parse_loss_kind(kind), focal};
}

}  // namespace

PYBIND11_MODULE(_eapo, m) {
  m.doc() = "Retrieval-based preference fine-tuning for rare-event classifiers";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::class_<FocalParams>(m, "FocalParams")
      .def(py::init([](double gamma, double alpha, bool alpha_weighting) {
             return FocalParams{gamma, alpha, alpha_weighting};
           }),
           py::arg("gamma") = 2.0, py::arg("alpha") = 0.25, py::arg("alpha_weighting") = true)
      .def_readwrite("gamma", &FocalParams::gamma)
      .def_readwrite("alpha", &FocalParams::alpha)
      .def_readwrite("alpha_weighting", &FocalParams::alpha_weighting);

  py::class_<EapoWeights>(m, "EapoWeights")
      .def(py::init([](double beta, double lambda1, double lambda2) {
             return EapoWeights{beta, lambda1, lambda2};
           }),
           py::arg("beta") = 0.1, py::arg("lambda1") = 1.0, py::arg("lambda2") = 0.1)
      .def_readwrite("beta", &EapoWeights::beta)
      .def_readwrite("lambda1", &EapoWeights::lambda1)
      .def_readwrite("lambda2", &EapoWeights::lambda2);

  m.def("bce", [](double z, int y) { return loss_tuple(bce(z, y)); }, py::arg("logit"), py::arg("y"),
        "(value, d value / d logit)");
  m.def("focal", [](double z, int y, const FocalParams& p) { return loss_tuple(focal(z, y, p)); },
        py::arg("logit"), py::arg("y"), py::arg("params") = FocalParams{});
  m.def("dpo",
        [](double t, double r, int y, double beta) { return loss_tuple(dpo(t, r, y, beta)); },
        py::arg("logit_theta"), py::arg("logit_ref"), py::arg("y_plus"), py::arg("beta") = 0.1);

  m.def(
      "eapo_batch",
      [](const std::vector<std::pair<double, int>>& sft,
         const std::vector<std::tuple<double, double, int>>& local,
         const std::vector<std::tuple<double, double, int>>& extreme, const EapoWeights& w,
         const std::string& loss, const FocalParams& focal) {
        std::vector<SftItem> s;
        for (const auto& [z, y] : sft) s.push_back({z, y});
        auto pairs = [](const auto& v) {
          std::vector<PairItem> out;
          for (const auto& [t, r, y] : v) out.push_back({t, r, y});
          return out;
        };
        const auto res = eapo_batch(s, pairs(local), pairs(extreme), w, base_loss(loss, focal));
        py::dict d;
        d["value"] = res.value;
        d["sft"] = res.sft_value;
        d["local"] = res.local_value;
        d["extreme"] = res.extreme_value;
        d["sft_grads"] = res.sft_grads;
        d["local_grads"] = res.local_grads;
        d["extreme_grads"] = res.extreme_grads;
        return d;
      },
      py::arg("sft"), py::arg("local"), py::arg("extreme"), py::arg("weights") = EapoWeights{},
      py::arg("loss") = "focal", py::arg("focal") = FocalParams{});

  m.def("roc_auc", [](const std::vector<double>& s, const std::vector<int>& y) { return roc_auc(s, y); },
        py::arg("scores"), py::arg("labels"));
  m.def("select_threshold_pr",
        [](const std::vector<double>& s, const std::vector<int>& y) { return select_threshold_pr(s, y); },
        py::arg("scores"), py::arg("labels"));
  m.def("metrics_at_threshold",
        [](const std::vector<double>& s, const std::vector<int>& y, double t) {
          return report_dict(metrics_at_threshold(s, y, t));
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold"));

  m.def(
      "neighborhood",
      [](const std::vector<double>& q, const Array& x, std::size_t k) {
        const auto rows = rows_of(x);
        Labels zeros(static_cast<py::ssize_t>(rows.size()));
        std::fill(zeros.mutable_data(), zeros.mutable_data() + rows.size(), 0);
        return neighborhood(q, make_dataset(x, zeros, std::nullopt), k);
      },
      py::arg("query"), py::arg("train_features"), py::arg("k"),
      "Indices of the k nearest training rows, nearest first, ties to the lower index.");
  m.def(
      "build_local_manifold",
      [](const Array& queries, const Array& x, const Labels& y, std::size_t k) {
        const auto m = build_local_manifold(rows_of(queries), make_dataset(x, y, std::nullopt), k);
        return m.source_indices;
      },
      py::arg("queries"), py::arg("train_features"), py::arg("train_labels"), py::arg("k"),
      "Sorted, deduplicated training indices retrieved for the queries.");

  m.def(
      "generate_synthetic",
      [](std::size_t dim, std::size_t n_train, std::size_t n_test, double positive_rate,
         double shift_magnitude, double class_separation, double coupling, std::uint64_t seed) {
        SyntheticConfig c;
        c.dim = dim;
        c.n_train = n_train;
        c.n_test = n_test;
        c.positive_rate = positive_rate;
        c.shift_magnitude = shift_magnitude;
        c.class_separation = class_separation;
        c.intensity_margin_coupling = coupling;
        c.seed = seed;
        auto [train, test] = generate_synthetic(c);
        return py::make_tuple(dataset_dict(train), dataset_dict(test));
      },
      py::arg("dim") = 12, py::arg("n_train") = 20000, py::arg("n_test") = 5000,
      py::arg("positive_rate") = 0.05, py::arg("shift_magnitude") = 2.0,
      py::arg("class_separation") = 2.0, py::arg("intensity_margin_coupling") = 0.0,
      py::arg("seed") = 0);

  py::class_<Classifier>(m, "Classifier")
      .def_static(
          "init",
          [](const std::string& kind, std::size_t dim, std::vector<std::size_t> hidden,
             std::uint64_t seed) { return Classifier::init(parse_model_kind(kind), dim, hidden, seed); },
          py::arg("kind"), py::arg("dim"), py::arg("hidden") = std::vector<std::size_t>{},
          py::arg("seed") = 0)
      .def_static("from_checkpoint", [](const std::string& text) { return from_checkpoint(text); })
      .def("to_checkpoint", [](const Classifier& c) { return to_checkpoint(c); })
      .def_property_readonly("kind", [](const Classifier& c) { return std::string(to_string(c.kind())); })
      .def_property_readonly("dim", &Classifier::dim)
      .def_property_readonly("hidden", &Classifier::hidden)
      .def_property_readonly("parameters", &Classifier::parameters)
      .def("forward", [](const Classifier& c, const std::vector<double>& x) { return c.forward(x); })
      .def("backward",
           [](const Classifier& c, const std::vector<double>& x, double up) { return c.backward(x, up); },
           py::arg("x"), py::arg("upstream") = 1.0)
      .def("predict_logits", [](const Classifier& c, const Array& x) {
        const auto rows = rows_of(x);
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(c.forward(r));
        return out;
      });

  m.def(
      "pretrain",
      [](const Classifier& model, const Array& x, const Labels& y, const std::string& loss,
         std::size_t epochs, double lr, std::size_t batch_size, std::uint64_t seed) {
        PretrainConfig cfg;
        cfg.loss = parse_loss_kind(loss);
        cfg.epochs = epochs;
        cfg.learning_rate = lr;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        const auto ds = make_dataset(x, y, std::nullopt);
        py::gil_scoped_release release;
        return pretrain(model, ds, cfg).model;
      },
      py::arg("model"), py::arg("features"), py::arg("labels"), py::arg("loss") = "focal",
      py::arg("epochs") = 50, py::arg("learning_rate") = 0.005, py::arg("batch_size") = 256,
      py::arg("seed") = 0);

  m.def(
      "finetune",
      [](const Classifier& model, const Array& train_x, const Labels& train_y, const Array& queries,
         std::size_t k, const EapoWeights& w, const std::string& mode, const std::string& sft_loss,
         std::size_t epochs, double lr, std::size_t batch_size, std::uint64_t seed) {
        FinetuneConfig cfg;
        cfg.k = k;
        cfg.weights = w;
        cfg.mode = parse_finetune_mode(mode);
        cfg.sft_loss = parse_loss_kind(sft_loss);
        cfg.epochs = epochs;
        cfg.learning_rate = lr;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        const auto train = make_dataset(train_x, train_y, std::nullopt);
        const auto manifold = build_local_manifold(rows_of(queries), train, k);
        const auto extreme = extract_extreme(manifold);
        py::gil_scoped_release release;
        return finetune(model, freeze_reference(model), manifold, extreme, cfg).model;
      },
      py::arg("model"), py::arg("train_features"), py::arg("train_labels"), py::arg("queries"),
      py::arg("k") = 5, py::arg("weights") = EapoWeights{}, py::arg("mode") = "eapo",
      py::arg("sft_loss") = "focal", py::arg("epochs") = 100, py::arg("learning_rate") = 1e-4,
      py::arg("batch_size") = 256, py::arg("seed") = 0);

  m.def(
      "run_all",
      [](const std::string& config_json, const std::string& output_dir) {
        auto cfg = ExperimentConfig::from_json(nlohmann::json::parse(config_json));
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        py::gil_scoped_release release;
        return cmd_run_all(cfg).dump();
      },
      py::arg("config_json") = "{}", py::arg("output_dir") = "",
      "Runs every stage and returns the manifest as a JSON string.");
  m.def(
      "verify_manifest", [](const std::string& path) { return verify_manifest(path); },
      py::arg("path"));
}
