#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "roadtopics/eval.hpp"
#include "roadtopics/hdp.hpp"
#include "roadtopics/hmm.hpp"
#include "roadtopics/pipeline.hpp"
#include "roadtopics/predict.hpp"
#include "roadtopics/quantize.hpp"

namespace py = pybind11;
using namespace roadtopics;

namespace {

Corpus corpus_from_lists(const std::vector<std::vector<WordIndex>>& docs, std::size_t vocab_size) {
  Corpus c;
  c.vocab_size = vocab_size;
  for (std::size_t d = 0; d < docs.size(); ++d) c.docs.push_back({static_cast<std::int64_t>(d), docs[d]});
  c.check();
  return c;
}

}  // namespace

PYBIND11_MODULE(_roadtopics, m) {
  m.doc() = "Personal road network HMM and road-signal HDP";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", PyExc_RuntimeError);

  py::class_<Observation>(m, "Observation")
      .def(py::init<>())
      .def_readwrite("t", &Observation::t)
      .def_readwrite("r", &Observation::r)
      .def_readwrite("h", &Observation::h)
      .def_readwrite("q", &Observation::q)
      .def_readwrite("k_on", &Observation::k_on)
      .def_readwrite("k_off", &Observation::k_off);

  py::class_<CarSignal>(m, "CarSignal")
      .def(py::init<>())
      .def_readwrite("velocity", &CarSignal::velocity)
      .def_readwrite("hour", &CarSignal::hour);

  py::class_<Trip>(m, "Trip")
      .def(py::init<>())
      .def_readwrite("id", &Trip::id)
      .def_readwrite("obs", &Trip::obs)
      .def_readwrite("signals", &Trip::signals)
      .def("__len__", [](const Trip& t) { return t.obs.size(); });

  m.def("parse_trips", [](const std::filesystem::path& p) {
    auto log = parse_trips(p);
    std::vector<py::tuple> rejected;
    for (const auto& r : log.rejected) rejected.push_back(py::make_tuple(r.line, r.trip_id, r.reason));
    return py::make_tuple(log.trips, rejected);
  }, "Returns (trips, [(line, trip_id, reason), ...]).");

  py::class_<WorldConfig>(m, "WorldConfig")
      .def(py::init<>())
      .def_readwrite("grid_w", &WorldConfig::grid_w)
      .def_readwrite("grid_h", &WorldConfig::grid_h)
      .def_readwrite("spacing", &WorldConfig::spacing)
      .def_readwrite("n_sources", &WorldConfig::n_sources)
      .def_readwrite("n_destinations", &WorldConfig::n_destinations)
      .def_readwrite("favorite_prob", &WorldConfig::favorite_prob)
      .def_readwrite("obs_per_node", &WorldConfig::obs_per_node)
      .def_readwrite("position_noise", &WorldConfig::position_noise)
      .def_readwrite("p_dead_reckoning", &WorldConfig::p_dead_reckoning);

  m.def("synthetic_trips", [](const WorldConfig& c, std::size_t n, std::uint64_t seed) {
    const auto world = generate_world(c, seed);
    return sample_trips(world, n, mix_keys(seed, 1, 0, 0)).trips;
  }, py::arg("config"), py::arg("n"), py::arg("seed"));

  py::class_<HmmConfig>(m, "HmmConfig")
      .def(py::init<>())
      .def_readwrite("lambda_pos", &HmmConfig::lambda_pos)
      .def_readwrite("proximity_scale", &HmmConfig::proximity_scale)
      .def_readwrite("alpha", &HmmConfig::alpha)
      .def_readwrite("c", &HmmConfig::c)
      .def_readwrite("max_iter", &HmmConfig::max_iter)
      .def_readwrite("tol", &HmmConfig::tol)
      .def_readwrite("threads", &HmmConfig::threads);

  py::class_<HmmModel>(m, "HmmModel")
      .def_readonly("augmented", &HmmModel::augmented)
      .def_property_readonly("num_states", &HmmModel::size)
      .def_property_readonly("labels", [](const HmmModel& h) {
        std::vector<std::string> out;
        for (const auto& s : h.states) out.push_back(to_string(s));
        return out;
      })
      .def("transition", &HmmModel::transition)
      .def("source_states", &HmmModel::source_states)
      .def("destination_states", &HmmModel::destination_states)
      .def("save", [](const HmmModel& h, const std::filesystem::path& p) { save_model(p, h); });
  m.def("load_model", &load_model);

  m.def("fit_hmm", [](const std::vector<Trip>& trips, const HmmConfig& c, bool augmented) {
    auto fit = em_fit(init_model(trips, c, false), trips, c);
    HmmModel model = augmented ? augment_with_source(fit.model, trips, c) : std::move(fit.model);
    return py::make_tuple(model, fit.objective);
  }, py::arg("trips"), py::arg("config") = HmmConfig{}, py::arg("augmented") = false,
        "Hard-EM fit; returns (model, objective trace).");

  m.def("viterbi", [](const HmmModel& h, const Trip& t) {
    auto d = viterbi(h, t);
    return py::make_tuple(d.path, d.log_likelihood);
  });

  m.def("most_likely_route", [](const HmmModel& h, std::size_t a, std::size_t b) {
    auto r = most_likely_route(h, a, b);
    return py::make_tuple(r.path, r.log_prob);
  });

  m.def("absorption", [](const HmmModel& h, unsigned threads) {
    auto t = absorption_table(h, threads);
    return py::make_tuple(t.destinations, t.a, t.residual);
  }, py::arg("model"), py::arg("threads") = 1, "Returns (destination states, a, residual).");

  m.def("dp_means", [](const Eigen::MatrixXd& x, double lambda, std::vector<std::size_t> circular, double period) {
    Metric metric{std::move(circular), period};
    auto fit = dp_means_fit(x, lambda, 100, metric);
    return py::make_tuple(fit.codebook.centers, fit.assignment);
  }, py::arg("points"), py::arg("lambda_"), py::arg("circular_dims") = std::vector<std::size_t>{},
        py::arg("period") = 24.0);

  py::class_<HdpHyper>(m, "HdpHyper")
      .def(py::init<>())
      .def(py::init([](double g, double a, double l) { return HdpHyper{g, a, l}; }), py::arg("gamma"),
           py::arg("alpha"), py::arg("lambda_"))
      .def_readwrite("gamma", &HdpHyper::gamma)
      .def_readwrite("alpha", &HdpHyper::alpha)
      .def_readwrite("lambda_", &HdpHyper::lambda);

  m.def("run_hdp", [](const std::vector<std::vector<WordIndex>>& docs, std::size_t vocab_size, const HdpHyper& h,
                      std::size_t iterations, std::size_t K0, std::uint64_t seed, bool split_merge) {
    SamplerOptions o;
    o.iterations = iterations;
    o.K0 = K0;
    o.seed = seed;
    o.split_merge = split_merge;
    auto run = run_sampler(corpus_from_lists(docs, vocab_size), h, o);
    std::vector<std::size_t> ks;
    for (const auto& d : run.diagnostics) ks.push_back(d.K);
    return py::make_tuple(run.state.z, run.state.beta, ks);
  }, py::arg("docs"), py::arg("vocab_size"), py::arg("hyper") = HdpHyper{}, py::arg("iterations") = 100,
        py::arg("K0") = 1, py::arg("seed") = 1, py::arg("split_merge") = true,
        "Returns (z per document, beta, K per iteration).");

  m.def("run_stage", [](const std::string& stage, std::optional<std::filesystem::path> config,
                        std::optional<std::filesystem::path> out) {
    PipelineConfig c = config ? load_config(*config) : PipelineConfig{};
    if (out) c.out = *out;
    auto r = run_stage(stage, c);
    std::vector<std::string> arts;
    for (const auto& a : r.artifacts) arts.push_back(a.string());
    return py::make_tuple(arts, r.messages);
  }, py::arg("stage"), py::arg("config") = py::none(), py::arg("out") = py::none());

  m.def("stage_names", &stage_names);
}
