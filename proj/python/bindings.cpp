#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "seqdenoise/denoiser.hpp"
#include "seqdenoise/error.hpp"
#include "seqdenoise/pipeline.hpp"
#include "seqdenoise/prompt.hpp"
#include "seqdenoise/stub_backend.hpp"

namespace py = pybind11;
using namespace seqdenoise;

namespace {

// Configs and results cross the boundary as JSON text; the Python package
// wraps them in dicts.
pipeline::PipelineConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return pipeline::PipelineConfig::from_json(j);
}

std::string denoise_stage(const std::string& config, const std::string& variant, const std::string& targets,
                    std::optional<std::string> output) {
  pipeline::DenoiseRequest request;
  request.variant = variant;
  request.targets = denoise::parse_targets(targets);
  request.output = std::move(output);
  return pipeline::cmd_denoise(parse_config(config), request).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the seqdenoise pipeline.";

  // Error instances carry the library's kind tag as `.kind`.
  m.attr("Error") = py::reinterpret_steal<py::object>(
      PyErr_NewException("seqdenoise._core.Error", PyExc_RuntimeError, nullptr));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object cls = py::module_::import("seqdenoise._core").attr("Error");
      py::object err = cls(e.kind() + ": " + e.what());
      err.attr("kind") = e.kind();
      PyErr_SetObject(cls.ptr(), err.ptr());
    }
  });

  m.attr("SCHEMA_VERSION") = pipeline::kSchemaVersion;

  m.def("default_config", [] { return pipeline::PipelineConfig{}.to_json().dump(); });
  m.def("validate_config", [](const std::string& c) { return parse_config(c).to_json().dump(); });

  m.def("synth", [](const std::string& c) { return pipeline::cmd_synth(parse_config(c)).dump(); });
  m.def("ingest", [](const std::string& c) { return pipeline::cmd_ingest(parse_config(c)).dump(); });
  m.def("inject", [](const std::string& c) { return pipeline::cmd_inject(parse_config(c)).dump(); });
  m.def("corpus", [](const std::string& c) { return pipeline::cmd_corpus(parse_config(c)).dump(); });
  m.def("denoise", &denoise_stage, py::arg("config"), py::arg("variant"), py::arg("targets") = "both",
        py::arg("output") = py::none());
  m.def(
      "evaluate",
      [](const std::string& c, const std::string& variant, bool ranks) {
        return pipeline::cmd_eval(parse_config(c), variant, ranks).dump();
      },
      py::arg("config"), py::arg("variant"), py::arg("ranks") = false);
  m.def("report", [](const std::string& c) { return pipeline::cmd_report(parse_config(c)).dump(); });

  m.def("noisy_variant", &pipeline::noisy_variant);
  m.def("select_eta", [](const std::vector<double>& s, double q) { return denoise::select_eta(s, q); });
  m.def("flag", [](const std::vector<double>& p, double eta, int b) {
    std::vector<denoise::PositionScore> scores;
    for (std::size_t k = 0; k < p.size(); ++k) scores.push_back({k, p[k]});
    return denoise::flag(scores, eta, b);
  });
  m.def("render_output", &prompt::render_output);
  m.def("parse_output", [](const std::string& text) -> std::optional<std::pair<std::string, std::string>> {
    auto pair = prompt::parse_output(text);
    if (!pair) return std::nullopt;
    return std::make_pair(pair->noise, pair->suggestion);
  });
  m.def("tokenize", &lm::StubModel::tokenize);
}
