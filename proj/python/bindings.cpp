#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedeeg/artifacts.hpp"
#include "fedeeg/eeg_pipeline.hpp"
#include "fedeeg/error.hpp"
#include "fedeeg/evaluation.hpp"
#include "fedeeg/experiment.hpp"
#include "fedeeg/secure_norm.hpp"

namespace py = pybind11;
using namespace fedeeg;

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

namespace {

ExperimentConfig config_from(const py::object& cfg) {
  if (cfg.is_none()) return ExperimentConfig{};
  const std::string text = py::isinstance<py::str>(cfg)
                               ? cfg.cast<std::string>()
                               : py::module_::import("json").attr("dumps")(cfg).cast<std::string>();
  return ExperimentConfig::from_json(nlohmann::json::parse(text));
}

py::object to_python(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Array to_array(std::span<const double> v) { return Array(static_cast<py::ssize_t>(v.size()), v.data()); }

ClientDataset dataset_from(const Array& x, const Labels& y, const std::string& id) {
  if (x.ndim() != 2) throw DimensionError("x must be 2-D (rows, d)");
  if (y.ndim() != 1 || y.shape(0) != x.shape(0)) throw DimensionError("y must have one label per row");
  ClientDataset d;
  d.client_id = id;
  d.dim = static_cast<std::size_t>(x.shape(1));
  d.samples.assign(x.data(), x.data() + x.size());
  d.labels.assign(y.data(), y.data() + y.size());
  return d;
}

py::dict dataset_dict(const ClientDataset& d) {
  Array x({static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.dim)});
  std::copy(d.samples.begin(), d.samples.end(), x.mutable_data());
  Labels y(static_cast<py::ssize_t>(d.size()), d.labels.data());
  py::dict out;
  out["client"] = d.client_id;
  out["x"] = x;
  out["y"] = y;
  return out;
}

std::vector<SeizureAnnotation> annotations_from(
    const std::vector<std::pair<double, double>>& seizures) {
  std::vector<SeizureAnnotation> ann;
  for (const auto& [on, end] : seizures) ann.push_back({on, end});
  return ann;
}

}  // namespace

PYBIND11_MODULE(fedeeg, m) {
  m.doc() = "Federated EEG seizure-prediction simulation";

  static py::exception<Error> base(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());

  m.def("default_config", [] { return to_python(ExperimentConfig{}.to_json()); },
        "The full defaults dump.");
  m.def("resolve_config", [](const py::object& cfg) { return to_python(config_from(cfg).to_json()); },
        py::arg("config"), "Validates a config (dict or JSON text) and fills in defaults.");

  m.def(
      "generate_federation",
      [](const py::object& cfg, std::size_t repeat) {
        const auto c = config_from(cfg);
        FederationSpec spec = c.federation;
        spec.seed = RunSeeds::derive(repeat_seed(c, repeat)).federation;
        py::list out;
        for (const auto& s : generate_federation(spec)) {
          py::dict client;
          client["train"] = dataset_dict(s.train);
          client["val"] = dataset_dict(s.val);
          client["test"] = dataset_dict(s.test);
          out.append(client);
        }
        return out;
      },
      py::arg("config") = py::none(), py::arg("repeat") = 0);

  m.def(
      "secure_global_stats",
      [](const std::vector<Array>& clients, std::uint64_t seed) {
        std::vector<ClientDataset> ds;
        for (const auto& x : clients) {
          Labels y(x.shape(0));
          std::fill_n(y.mutable_data(), y.size(), std::uint8_t{0});
          ds.push_back(dataset_from(x, y, "c" + std::to_string(ds.size())));
        }
        TrustedDealer dealer(seed);
        LoopbackTransport t;
        const auto out = run_normalization(ds, NormalizationMode::SecureGlobal, dealer,
                                           FixedPointCodec{}, t);
        return py::make_tuple(out.stats->mu, out.stats->sigma, out.centering_only);
      },
      py::arg("clients"), py::arg("seed") = 0,
      "Pooled (mu, sigma, centering_only) from the masked protocol; clients are 2-D arrays.");

  m.def(
      "mask_sum",
      [](std::size_t clients, std::uint64_t seed, std::uint64_t session) {
        const auto seeds = deal_pairwise_seeds(clients, seed);
        std::uint64_t sum = 0;
        for (std::size_t c = 0; c < clients; ++c) {
          sum += expand_mask(seeds, static_cast<PartyId>(c), {MaskFamily::Sum, session});
        }
        return sum;
      },
      py::arg("clients"), py::arg("seed"), py::arg("session") = 0,
      "Modular sum of every client's mask for one stream (always 0).");

  py::class_<Mlp>(m, "Mlp")
      .def(py::init([](std::size_t input_dim, std::vector<std::size_t> hidden, std::uint64_t seed) {
             return Mlp(ModelConfig{input_dim, std::move(hidden), seed, std::nullopt});
           }),
           py::arg("input_dim"), py::arg("hidden_dims"), py::arg("seed") = 0)
      .def_property_readonly("param_count", &Mlp::param_count)
      .def("init_params",
           [](const Mlp& self) {
             const auto p = self.init_params();
             return to_array(p.values());
           })
      .def("forward",
           [](const Mlp& self, const Array& params, const Array& x) {
             if (x.ndim() != 2) throw DimensionError("x must be 2-D (rows, d)");
             const ParamVector p(std::vector<double>(params.data(), params.data() + params.size()));
             const MatrixView view(std::span<const double>(x.data(), x.size()),
                                   static_cast<std::size_t>(x.shape(0)),
                                   static_cast<std::size_t>(x.shape(1)));
             return to_array(self.forward(p, view));
           },
           "Predicted probabilities, one per row.")
      .def("loss_and_grad", [](const Mlp& self, const Array& params, const Array& x, const Labels& y) {
        const ParamVector p(std::vector<double>(params.data(), params.data() + params.size()));
        const auto d = dataset_from(x, y, "batch");
        const auto lg = self.loss_and_grad(p, d.as_batch());
        return py::make_tuple(lg.loss, to_array(lg.grad.values()));
      });

  m.def(
      "auroc",
      [](const Array& scores, const Labels& labels) {
        return auroc(std::span(scores.data(), scores.size()), std::span(labels.data(), labels.size()));
      },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "evaluate_set",
      [](const Array& probs, const Labels& labels) {
        const auto t = evaluate_set(std::span(probs.data(), probs.size()),
                                    std::span(labels.data(), labels.size()));
        py::dict out;
        out["accuracy"] = t.accuracy;
        out["f1"] = t.f1;
        out["auroc"] = t.auroc;
        return out;
      },
      py::arg("probs"), py::arg("labels"), "Accuracy and F1 at threshold 0.5, plus AUROC.");

  m.def(
      "label_timeline",
      [](double duration_s, const std::vector<std::pair<double, double>>& seizures) {
        py::list out;
        for (const auto& iv : label_timeline(duration_s, annotations_from(seizures), StagePolicy{})) {
          py::dict d;
          d["start"] = iv.start;
          d["end"] = iv.end;
          d["closed_start"] = iv.closed_start;
          d["closed_end"] = iv.closed_end;
          d["stage"] = to_string(iv.stage);
          d["truncated"] = iv.truncated;
          out.append(d);
        }
        return out;
      },
      py::arg("duration_s"), py::arg("seizures"),
      "Stage intervals with the default 1 h preictal / 10 min postictal policy.");
  m.def(
      "lowpass_and_resample",
      [](const Array& x, double rate_hz) {
        RawRecording rec{"x", rate_hz, {}};
        rec.channels.emplace("x", std::vector<double>(x.data(), x.data() + x.size()));
        return to_array(lowpass_and_resample(rec, StagePolicy{}).channels.at("x"));
      },
      py::arg("x"), py::arg("rate_hz"), "64 Hz low-pass then resampling to 128 Hz.");

  m.def(
      "train_and_evaluate",
      [](const py::object& cfg, const std::string& strategy, std::size_t m_size, std::size_t repeat) {
        const auto c = config_from(cfg);
        const auto seed = repeat_seed(c, repeat);
        py::gil_scoped_release release;
        LoopbackTransport t;
        const auto fed = prepare_federation(c, seed, t);
        const auto run = run_strategy(fed, c, Strategy::parse(strategy, m_size), seed, t, {false, {}});
        py::gil_scoped_acquire acquire;
        return to_python(report_json(run.report));
      },
      py::arg("config") = py::none(), py::arg("strategy") = "weighted", py::arg("m") = 0,
      py::arg("repeat") = 0, "Normalize, train and evaluate one repeat; returns the metrics report.");

  m.def(
      "run_sweep",
      [](const py::object& cfg) {
        const auto c = config_from(cfg);
        SweepResult res;
        {
          py::gil_scoped_release release;
          res = run_sweep(c);
        }
        std::vector<MetricRow> rows;
        for (const auto& row : res.rows) {
          for (std::size_t r = 0; r < row.runs.size(); ++r) {
            const auto more = metric_rows(std::to_string(r), row.strategy, row.runs[r]);
            rows.insert(rows.end(), more.begin(), more.end());
          }
        }
        py::list out;
        for (const auto& r : rows) {
          out.append(py::make_tuple(r.run_id, r.strategy, r.m, r.client, r.metric, r.value));
        }
        return out;
      },
      py::arg("config"),
      "Flat (run_id, strategy, M, client, metric, value) rows for every baseline and M.");
}
