#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "assoclab/icl.hpp"
#include "assoclab/interference.hpp"
#include "assoclab/phases.hpp"
#include "assoclab/pipeline.hpp"
#include "assoclab/search.hpp"
#include "assoclab/stats.hpp"

namespace py = pybind11;
using namespace assoclab;

PYBIND11_MODULE(_assoclab, m) {
  m.doc() = "in-context associative-learning toolkit";

  py::register_exception<Error>(m, "AssoclabError");

  py::class_<BackendDescriptor>(m, "BackendDescriptor")
      .def_readonly("model_id", &BackendDescriptor::model_id)
      .def_readonly("vocab_size", &BackendDescriptor::vocab_size)
      .def_readonly("layer_count", &BackendDescriptor::layer_count)
      .def_readonly("max_context", &BackendDescriptor::max_context)
      .def_readonly("hidden_dim", &BackendDescriptor::hidden_dim)
      .def_readonly("has_bos", &BackendDescriptor::has_bos);

  py::class_<Backend, std::shared_ptr<Backend>>(m, "Backend")
      .def_property_readonly("descriptor", &Backend::descriptor)
      .def("bos_id", &Backend::bos_id)
      .def("token_text", &Backend::token_text)
      .def("supports_gradients", &Backend::supports_gradients)
      .def("effective_context", &Backend::effective_context)
      .def("set_memory_cap", &Backend::set_memory_cap);

  m.def("make_backend", &make_backend, py::arg("uri"));

  py::class_<SimilarityGroup>(m, "SimilarityGroup")
      .def(py::init<int, double, double>(), py::arg("index"), py::arg("theta_min"),
           py::arg("theta_max"))
      .def_readonly("index", &SimilarityGroup::index)
      .def_readonly("theta_min", &SimilarityGroup::theta_min)
      .def_readonly("theta_max", &SimilarityGroup::theta_max)
      .def("contains", &SimilarityGroup::contains)
      .def("midpoint", &SimilarityGroup::midpoint);

  m.def("default_similarity_groups", &default_similarity_groups);
  m.def(
      "pair_similarity_before_learning",
      [](const std::shared_ptr<Backend>& b, TokenId x, TokenId y, int layer) {
        return pair_similarity_before_learning(*b, x, y, layer);
      },
      py::arg("backend"), py::arg("x"), py::arg("y"), py::arg("layer"));

  py::class_<AccuracyPoint>(m, "AccuracyPoint")
      .def(py::init([](int r, double acc, int n) {
             return AccuracyPoint{r, acc, n};
           }),
           py::arg("r"), py::arg("mean_accuracy"), py::arg("n"))
      .def_readonly("r", &AccuracyPoint::r)
      .def_readonly("mean_accuracy", &AccuracyPoint::mean_accuracy)
      .def_readonly("n", &AccuracyPoint::n);

  py::enum_<Phase>(m, "Phase")
      .value("Encoding", Phase::Encoding)
      .value("Consolidation", Phase::Consolidation)
      .value("Forgetting", Phase::Forgetting);

  py::class_<RepRange>(m, "RepRange")
      .def_readonly("first_r", &RepRange::first_r)
      .def_readonly("last_r", &RepRange::last_r);

  py::class_<PhaseThresholds>(m, "PhaseThresholds")
      .def(py::init<>())
      .def_readwrite("rise", &PhaseThresholds::rise)
      .def_readwrite("peak_fraction", &PhaseThresholds::peak_fraction)
      .def_readwrite("band", &PhaseThresholds::band)
      .def_readwrite("drop", &PhaseThresholds::drop);

  py::class_<PhaseSegmentation>(m, "PhaseSegmentation")
      .def_readonly("schedule", &PhaseSegmentation::schedule)
      .def_readonly("encoding", &PhaseSegmentation::encoding)
      .def_readonly("consolidation", &PhaseSegmentation::consolidation)
      .def_readonly("forgetting", &PhaseSegmentation::forgetting)
      .def_readonly("peak_accuracy", &PhaseSegmentation::peak_accuracy)
      .def("phase_of", &PhaseSegmentation::phase_of);

  m.def("segment_phases", &segment_phases, py::arg("curve"),
        py::arg("thresholds") = PhaseThresholds{});
  m.def("normalize_repetitions", &normalize_repetitions, py::arg("segmentation"),
        py::arg("r"));

  py::class_<InterferenceLevels>(m, "InterferenceLevels")
      .def_readonly("q1", &InterferenceLevels::q1)
      .def_readonly("q2", &InterferenceLevels::q2)
      .def_readonly("degenerate", &InterferenceLevels::degenerate)
      .def_property_readonly("labels", [](const InterferenceLevels& lv) {
        std::vector<std::string> names;
        for (auto l : lv.labels) names.push_back(interference_level_name(l));
        return names;
      });
  m.def("interference_levels", &interference_levels, py::arg("scores"));

  py::class_<PairedTResult>(m, "PairedTResult")
      .def_readonly("t", &PairedTResult::t)
      .def_readonly("p", &PairedTResult::p)
      .def_readonly("df", &PairedTResult::df)
      .def_readonly("degenerate", &PairedTResult::degenerate);
  m.def("paired_t_one_sided", &paired_t_one_sided, py::arg("before"),
        py::arg("after"));
  m.def("student_t_cdf", &student_t_cdf, py::arg("t"), py::arg("df"));
  m.def("by_correction", &by_correction, py::arg("p_values"), py::arg("q") = 0.05);

  py::enum_<Stage>(m, "Stage")
      .value("Stimuli", Stage::Stimuli)
      .value("Interference", Stage::Interference)
      .value("Grid", Stage::Grid)
      .value("Trials", Stage::Trials)
      .value("Segment", Stage::Segment)
      .value("Analyze", Stage::Analyze)
      .value("Plots", Stage::Plots);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("backend_uri", &ExperimentConfig::backend_uri)
      .def_readwrite("output_dir", &ExperimentConfig::output_dir)
      .def_readwrite("master_seed", &ExperimentConfig::master_seed)
      .def_readwrite("schedule", &ExperimentConfig::schedule)
      .def("snapshot_json", &ExperimentConfig::snapshot_json);
  m.def("load_config", &load_config, py::arg("path"));

  py::class_<RunManifest>(m, "RunManifest")
      .def_readonly("path", &RunManifest::path)
      .def_readonly("json_text", &RunManifest::json_text);
  m.def("run_experiment", &run_experiment, py::arg("config"),
        py::arg("up_to") = Stage::Plots);

  py::class_<VerifyReport>(m, "VerifyReport")
      .def_readonly("checks", &VerifyReport::checks)
      .def_readonly("discrepancies", &VerifyReport::discrepancies)
      .def_readonly("messages", &VerifyReport::messages);
  m.def("verify_run", &verify_run, py::arg("config"));

  m.def("file_hash", &file_hash, py::arg("path"));
}
