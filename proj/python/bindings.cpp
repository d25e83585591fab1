#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tetradat/attack.hpp"
#include "tetradat/attribution.hpp"
#include "tetradat/bridge.hpp"
#include "tetradat/desk.hpp"
#include "tetradat/harness.hpp"
#include "tetradat/hsv.hpp"
#include "tetradat/protes.hpp"
#include "tetradat/tt.hpp"

namespace py = pybind11;
using namespace tetradat;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const DoubleArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3)
    throw py::value_error("expected an array of shape (height, width, 3)");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  return Image(h, w, std::vector<double>(a.data(), a.data() + a.size()));
}

DoubleArray to_array(const Image& img) {
  DoubleArray out({img.height(), img.width(), std::size_t{3}});
  std::copy(img.values().begin(), img.values().end(), out.mutable_data());
  return out;
}

DoubleArray map_array(const AttributionMap& m) {
  DoubleArray out({m.height, m.width});
  std::copy(m.scores.begin(), m.scores.end(), out.mutable_data());
  return out;
}

ProtesConfig protes_config(std::size_t K, std::size_t k, std::size_t k_gd, double lr,
                           std::size_t rank, std::uint64_t seed) {
  ProtesConfig c;
  c.K = K;
  c.k = k;
  c.k_gd = k_gd;
  c.lr = lr;
  c.rank = rank;
  c.seed = seed;
  return c;
}

py::dict summary_dict(const CampaignSummary& s) {
  return py::module_::import("json").attr("loads")(to_json(s).dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Tensor-train optimizer and attribution-guided black-box attack";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CampaignError>(m, "CampaignError", PyExc_RuntimeError);
  py::register_exception<TransportError>(m, "TransportError", PyExc_RuntimeError);
  py::register_exception<ModelError>(m, "ModelError", PyExc_RuntimeError);

  py::class_<TTTensor>(m, "TTTensor")
      .def_static("random", [](std::vector<std::size_t> modes, std::size_t rank,
                               std::uint64_t seed) { return tt_random_nonneg(modes, rank, seed); },
                  py::arg("mode_sizes"), py::arg("rank"), py::arg("seed") = 0)
      .def_property_readonly("dim", &TTTensor::dim)
      .def_property_readonly("mode_sizes", &TTTensor::mode_sizes)
      .def_property_readonly("ranks", &TTTensor::ranks)
      .def("get", [](const TTTensor& t, const MultiIndex& n) { return tt_get(t, n); })
      .def("log_value", [](const TTTensor& t, const MultiIndex& n) { return tt_log_value(t, n); })
      .def("log_likelihood", [](const TTTensor& t, const std::vector<MultiIndex>& batch) {
        return tt_log_likelihood(t, batch);
      })
      .def("sample", [](const TTTensor& t, std::size_t count, std::uint64_t seed) {
        Rng rng(seed);
        return tt_sample(t, count, rng);
      }, py::arg("count"), py::arg("seed") = 0)
      .def("full", [](const TTTensor& t) {
        const auto v = tt_full(t);
        const auto modes = t.mode_sizes();
        DoubleArray out(std::vector<py::ssize_t>(modes.begin(), modes.end()));
        std::copy(v.begin(), v.end(), out.mutable_data());
        return out;
      })
      .def("to_bytes", [](const TTTensor& t) { return py::bytes(tt_serialize(t)); })
      .def_static("from_bytes", [](const py::bytes& b) { return tt_deserialize(std::string(b)); })
      .def("__eq__", [](const TTTensor& a, const TTTensor& b) { return a == b; });

  m.def("protes_minimize",
        [](std::vector<std::size_t> modes,
           std::function<std::vector<double>(std::vector<MultiIndex>)> objective,
           std::size_t budget, std::size_t K, std::size_t k, std::size_t k_gd, double lr,
           std::size_t rank, std::uint64_t seed) {
          const Objective f = [&](std::span<const MultiIndex> batch) {
            return objective(std::vector<MultiIndex>(batch.begin(), batch.end()));
          };
          auto r = protes_minimize(modes, f, budget, protes_config(K, k, k_gd, lr, rank, seed));
          py::dict out;
          out["best_index"] = r.state.best_index;
          out["best_value"] = r.state.best_value;
          out["queries"] = r.state.queries_used;
          out["iterations"] = r.iterations;
          out["distribution"] = std::move(r.state.distribution);
          return out;
        },
        py::arg("mode_sizes"), py::arg("objective"), py::arg("budget"), py::arg("K") = 100,
        py::arg("k") = 10, py::arg("k_gd") = 100, py::arg("lr") = 0.01, py::arg("rank") = 5,
        py::arg("seed") = 0,
        "Minimizes a batch objective over a discrete grid. The objective gets a\n"
        "list of multi-indices and returns one value per index.");

  m.def("rgb_to_hsv", [](const Rgb& c) {
    const auto h = rgb_to_hsv(c);
    return std::array<double, 3>{h.h, h.s, h.v};
  });
  m.def("hsv_to_rgb", [](const std::array<double, 3>& c) { return hsv_to_rgb({c[0], c[1], c[2]}); });

  py::class_<Classifier>(m, "Classifier")
      .def_property_readonly("name", &Classifier::name)
      .def_property_readonly("num_classes", &Classifier::num_classes)
      .def("predict", [](const Classifier& c, const DoubleArray& img) {
        return c.predict(to_image(img)).probs;
      })
      .def("top_class", [](const Classifier& c, const DoubleArray& img) {
        return c.predict(to_image(img)).top_class;
      })
      .def("input_gradient", [](const Classifier& c, const DoubleArray& img, int cls) {
        const auto image = to_image(img);
        const auto g = c.input_gradient(image, cls);
        DoubleArray out({image.height(), image.width(), std::size_t{3}});
        std::copy(g.begin(), g.end(), out.mutable_data());
        return out;
      });
  py::class_<DenseClassifier, Classifier>(m, "DenseClassifier")
      .def_property_readonly("input_height", &DenseClassifier::input_height)
      .def_property_readonly("input_width", &DenseClassifier::input_width)
      .def("save", [](const DenseClassifier& c, const std::filesystem::path& p) {
        save_weights(p, c);
      });
  py::class_<BridgeClassifier, Classifier>(m, "BridgeClassifier")
      .def(py::init<std::string>(), py::arg("command"));

  m.def("load_weights", &load_weights, py::arg("path"));
  m.def("train_desk_model", [](std::uint64_t seed, std::size_t samples, std::size_t epochs) {
    desk::TrainOptions o;
    o.samples = samples;
    o.epochs = epochs;
    return desk::train_desk_model(seed, o);
  }, py::arg("seed"), py::arg("samples") = 10000, py::arg("epochs") = 20);
  m.def("desk_image", [](std::uint64_t seed, std::size_t index) {
    const auto s = desk::synthetic_image(seed, index);
    return py::make_tuple(to_array(s.image), s.label);
  }, py::arg("seed"), py::arg("index"));

  m.def("integrated_gradients",
        [](const Classifier& c, const DoubleArray& img, int cls, std::size_t steps,
           const std::string& baseline) {
          return map_array(integrated_gradients(c, to_image(img), cls, steps,
                                                baseline_from_string(baseline)));
        },
        py::arg("model"), py::arg("image"), py::arg("class_index"), py::arg("steps") = 15,
        py::arg("baseline") = "black");
  m.def("saliency", [](const Classifier& c, const DoubleArray& img, int cls) {
    return map_array(saliency(c, to_image(img), cls));
  }, py::arg("model"), py::arg("image"), py::arg("class_index"));

  m.def("attack",
        [](const Classifier& attacked, const Classifier& auxiliary, const DoubleArray& img,
           std::size_t d_hat, double epsilon0, std::size_t budget, std::uint64_t seed) {
          AttackConfig c;
          c.d_hat = d_hat;
          c.epsilon0 = epsilon0;
          c.budget = budget;
          c.protes.seed = seed;
          QueryEndpoint endpoint(attacked);
          const auto r = tetradat::tetradat(endpoint, auxiliary, to_image(img), c);
          py::dict out;
          out["success"] = r.success;
          out["adversarial"] = to_array(r.adversarial);
          out["original_class"] = r.original_class;
          out["adversarial_class"] = r.adversarial_class;
          out["final_epsilon"] = r.final_epsilon;
          out["queries"] = r.queries;
          out["endpoint_queries"] = endpoint.queries();
          out["l1"] = r.l1;
          out["l2"] = r.l2;
          out["linf"] = r.linf;
          out["epsilons"] = r.epsilons;
          std::vector<std::pair<std::size_t, std::size_t>> pixels;
          for (const auto& p : r.selection.positions) pixels.emplace_back(p.row, p.col);
          out["pixels"] = pixels;
          return out;
        },
        py::arg("attacked"), py::arg("auxiliary"), py::arg("image"), py::arg("d_hat") = 0,
        py::arg("epsilon0") = 1.0, py::arg("budget") = 10000, py::arg("seed") = 0);

  m.def("run_campaign", [](const std::filesystem::path& config) {
    return summary_dict(run_campaign(load_campaign_config(config)));
  }, py::arg("config"));
  m.def("emit_report", [](const std::filesystem::path& results) {
    const auto o = emit_report(results);
    return py::make_tuple(o.panels, o.omitted);
  }, py::arg("results"));
}
