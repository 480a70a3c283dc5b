#include <filesystem>
#include <optional>
#include <string>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "affreal/error.hpp"
#include "affreal/operators.hpp"
#include "affreal/qexp.hpp"
#include "affreal/scenario.hpp"

namespace py = pybind11;
using namespace affreal;

namespace {

RunOptions options(const std::filesystem::path& out, std::optional<std::uint64_t> seed, std::optional<int> paths,
                   int jobs, int refine) {
  RunOptions o;
  o.out_dir = out;
  o.seed = seed;
  o.paths = paths;
  o.jobs = jobs;
  o.refine = refine;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Affine realizations of Levy-driven SPDEs";

  // Messages start with the error kind, e.g. "ConfigError: field 'grid.n_x': ...".
  py::register_exception<Error>(m, "AffrealError", PyExc_RuntimeError);

  py::class_<QExpFunction>(m, "QExp")
      .def(py::init([](const std::string& text) { return parse_qexp(text); }), py::arg("text") = "0")
      .def("__call__", &QExpFunction::operator(), py::arg("x"))
      .def("__str__", [](const QExpFunction& f) { return to_string(f); })
      .def("__repr__", [](const QExpFunction& f) { return "QExp('" + to_string(f) + "')"; })
      .def("__add__", [](const QExpFunction& f, const QExpFunction& g) { return f + g; })
      .def("__sub__", [](const QExpFunction& f, const QExpFunction& g) { return f - g; })
      .def("__mul__", [](const QExpFunction& f, const QExpFunction& g) { return multiply(f, g); })
      .def("__mul__", [](const QExpFunction& f, double s) { return s * f; })
      .def("__rmul__", [](const QExpFunction& f, double s) { return s * f; })
      .def("__neg__", [](const QExpFunction& f) { return -f; })
      .def("__eq__", [](const QExpFunction& f, const QExpFunction& g) { return (f - g).is_zero(); })
      .def_property_readonly("is_zero", &QExpFunction::is_zero)
      .def_property_readonly("terms", [](const QExpFunction& f) {
        py::list out;
        for (const auto& t : f.terms()) {
          out.append(py::make_tuple(t.coef, t.power, t.rate, t.freq, t.kind == Trig::Sin ? "sin" : "cos"));
        }
        return out;
      });

  m.def("parse_qexp", [](const std::string& text) { return parse_qexp(text); });
  m.def("differentiate", &differentiate);
  m.def("integrate_T", &integrate_T);
  m.def("multiply", &multiply);
  m.def("shift", &shift);
  m.def("gaussian_taylor", &gaussian_taylor, py::arg("degree"));

  m.def(
      "eigenpairs",
      [](const std::string& operator_json, int count) {
        py::list out;
        for (const auto& e : eigenpairs(parse_operator_json(operator_json), count)) {
          py::dict d;
          d["index"] = std::vector<int>(e.index.begin(), e.index.end());
          d["label"] = mode_text(e.index);
          d["eigenvalue"] = e.eigenvalue;
          d["generator_eigenvalue"] = e.generator_eigenvalue;
          out.append(d);
        }
        return out;
      },
      py::arg("operator_json"), py::arg("count") = 5);

  py::class_<ScenarioConfig>(m, "Scenario")
      .def_static("load", &ScenarioConfig::load, py::arg("path"))
      .def_static(
          "parse", [](const std::string& text, const std::filesystem::path& base) { return ScenarioConfig::parse(text, base); },
          py::arg("text"), py::arg("base_dir") = std::filesystem::path{})
      .def_property_readonly("name", &ScenarioConfig::name)
      .def_property_readonly("operator", [](const ScenarioConfig& c) { return operator_name(c.op()); })
      .def(
          "analyze",
          [](const ScenarioConfig& c, const std::filesystem::path& out) {
            py::gil_scoped_release release;
            return run_analyze(c, options(out, {}, {}, 1, 1));
          },
          py::arg("out_dir"))
      .def(
          "simulate",
          [](const ScenarioConfig& c, const std::filesystem::path& out, std::optional<std::uint64_t> seed,
             std::optional<int> paths, int jobs) {
            py::gil_scoped_release release;
            return run_simulate(c, options(out, seed, paths, jobs, 1));
          },
          py::arg("out_dir"), py::arg("seed") = py::none(), py::arg("paths") = py::none(), py::arg("jobs") = 1)
      .def(
          "verify",
          [](const ScenarioConfig& c, const std::filesystem::path& out, std::optional<std::uint64_t> seed, int refine) {
            py::gil_scoped_release release;
            return run_verify(c, options(out, seed, {}, 1, refine));
          },
          py::arg("out_dir"), py::arg("seed") = py::none(), py::arg("refine") = 1);

  py::class_<Outcome>(m, "Outcome")
      .def_readonly("exit_code", &Outcome::exit_code)
      .def_readonly("summary", &Outcome::summary)
      .def("__iter__", [](const Outcome& o) { return py::iter(py::make_tuple(o.exit_code, o.summary)); });
}
