#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "cumix/config.hpp"
#include "cumix/data.hpp"
#include "cumix/error.hpp"
#include "cumix/mixing.hpp"
#include "cumix/model.hpp"
#include "cumix/synthetic.hpp"
#include "cumix/train.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const cumix::Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

cumix::Matrix from_numpy(const Array& a) {
  if (a.ndim() != 2) throw cumix::DimensionError("expected a 2-d array");
  return cumix::Matrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

std::vector<double> vec(const Array& a) {
  if (a.ndim() != 1) throw cumix::DimensionError("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

// Round-trip through JSON text; keeps the binding free of a JSON caster.
json from_py(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}
py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json split_json(const cumix::SplitSpec& s) {
  return {{"seen_classes", s.seen_classes},
          {"unseen_classes", s.unseen_classes},
          {"train_domains", s.train_domains},
          {"test_domains", s.test_domains}};
}

cumix::RunConfig run_config(const py::object& overrides) {
  json doc = cumix::default_run_config_json();
  if (!overrides.is_none()) cumix::merge_strict(doc, from_py(overrides));
  return cumix::run_config_from_json(doc);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Curriculum domain/class mixing for zero-shot domain generalization";

  auto base = py::register_exception<cumix::Error>(m, "Error");
  py::register_exception<cumix::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<cumix::ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<cumix::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<cumix::IoError>(m, "IoError", base.ptr());
  py::register_exception<cumix::ConfigError>(m, "ConfigError", base.ptr());

  m.def("schedule_coeffs",
        [](std::size_t epoch, std::size_t warmup_epochs, double beta_max) {
          const auto c = cumix::schedule_coeffs(epoch, {warmup_epochs, beta_max});
          return py::make_tuple(c.alpha, c.beta);
        },
        py::arg("epoch"), py::arg("warmup_epochs") = 10, py::arg("beta_max") = 0.6,
        "(alpha, beta) for a 0-based epoch.");

  m.def("sample_lambda",
        [](double beta, std::size_t n, std::uint64_t seed) {
          cumix::RngStream rng(seed, "py.lambda");
          py::array_t<double> out(n);
          for (std::size_t i = 0; i < n; ++i) out.mutable_at(i) = cumix::sample_lambda(beta, rng);
          return out;
        },
        py::arg("beta"), py::arg("n"), py::arg("seed") = 0, "n draws of Beta(beta, beta).");

  m.def("mix2",
        [](const Array& a, const Array& b, double lam) {
          const auto x = vec(a), y = vec(b);
          return cumix::mix2(x, y, lam);
        },
        py::arg("a"), py::arg("b"), py::arg("lam"));
  m.def("mix3",
        [](const Array& a, const Array& b, const Array& c, double lam, int gamma) {
          const auto x = vec(a), y = vec(b), z = vec(c);
          return cumix::mix3(x, y, z, {lam, gamma});
        },
        py::arg("a_i"), py::arg("a_j"), py::arg("a_k"), py::arg("lam"), py::arg("gamma"),
        "lam*a_i + (1-lam)*(gamma*a_j + (1-gamma)*a_k)");

  py::class_<cumix::LoadedBundle>(m, "Bundle")
      .def_property_readonly("name", [](const cumix::LoadedBundle& b) { return b.bundle.name; })
      .def_property_readonly("features", [](const cumix::LoadedBundle& b) { return to_numpy(b.bundle.features); })
      .def_property_readonly("embeddings", [](const cumix::LoadedBundle& b) { return to_numpy(b.bundle.embeddings); })
      .def_property_readonly("labels", [](const cumix::LoadedBundle& b) { return b.bundle.labels; })
      .def_property_readonly("domains", [](const cumix::LoadedBundle& b) { return b.bundle.domains; })
      .def_property_readonly("class_names", [](const cumix::LoadedBundle& b) { return b.bundle.class_names; })
      .def_property_readonly("domain_names", [](const cumix::LoadedBundle& b) { return b.bundle.domain_names; })
      .def_property_readonly("split", [](const cumix::LoadedBundle& b) { return to_py(split_json(b.split)); })
      .def_property_readonly("setting",
                             [](const cumix::LoadedBundle& b) {
                               return std::string(cumix::setting_name(cumix::infer_setting(b.split)));
                             })
      .def("__len__", [](const cumix::LoadedBundle& b) { return b.bundle.num_samples(); })
      .def("save",
           [](const cumix::LoadedBundle& b, const std::filesystem::path& dir, bool force) {
             cumix::write_bundle(b.bundle, b.split, dir, force);
           },
           py::arg("dir"), py::arg("force") = false);

  m.def("generate_synthetic",
        [](const py::object& overrides) {
          json doc = cumix::default_synth_config_json();
          if (!overrides.is_none()) cumix::merge_strict(doc, from_py(overrides));
          return cumix::generate_synthetic(cumix::synth_config_from_json(doc));
        },
        py::arg("config") = py::none(),
        "Synthetic ZSL+DG bundle; `config` overrides the generator defaults.");
  m.def("load_bundle", &cumix::load_bundle, py::arg("dir"));

  py::class_<cumix::Model>(m, "Model")
      .def_property_readonly("input_dim", [](const cumix::Model& md) { return md.config.input_dim; })
      .def_property_readonly("embed_dim", [](const cumix::Model& md) { return md.config.embed_dim; })
      .def("predict",
           [](const cumix::Model& md, const Array& x, const Array& class_embeddings) {
             return cumix::predict(md, from_numpy(x), from_numpy(class_embeddings));
           },
           py::arg("x"), py::arg("class_embeddings"),
           "Index of the highest-scoring row of `class_embeddings` per sample.")
      .def("save", [](const cumix::Model& md, const std::filesystem::path& p) { cumix::save_checkpoint(md, p); },
           py::arg("path"));
  m.def("load_checkpoint", &cumix::load_checkpoint, py::arg("path"));

  m.def("default_run_config", [] { return to_py(cumix::default_run_config_json()); });
  m.def("preset", [](const std::string& name) { return to_py(cumix::preset_json(name)); }, py::arg("name"));

  m.def("train",
        [](const cumix::LoadedBundle& data, const py::object& config) {
          const auto cfg = run_config(config);
          auto result = [&] {
            py::gil_scoped_release release;
            return cumix::train_run(data.bundle, data.split, cfg);
          }();
          return py::make_tuple(std::move(result.model), to_py(cumix::to_json(result.report, true)));
        },
        py::arg("bundle"), py::arg("config") = py::none(),
        "Trains with the default run config overlaid by `config`; returns (model, report).");

  m.def("evaluate",
        [](const cumix::Model& md, const cumix::LoadedBundle& data, const std::string& classes,
           const std::string& domains) {
          return to_py(cumix::to_json(
              cumix::evaluate(md, data.bundle, data.split, cumix::parse_eval_spec(classes, domains))));
        },
        py::arg("model"), py::arg("bundle"), py::arg("classes") = "unseen", py::arg("domains") = "test");
}
