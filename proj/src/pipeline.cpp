#include "roadtopics/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"
#include "roadtopics/corpus.hpp"
#include "roadtopics/eval.hpp"
#include "roadtopics/predict.hpp"
#include "roadtopics/quantize.hpp"

namespace roadtopics {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.3.0";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& field, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError(field + ": '" + text + "' is not a number");
  return v;
}

std::uint64_t parse_uint(const std::string& field, const std::string& text) {
  const double v = parse_double(field, text);
  if (v < 0 || v != std::floor(v) || v > 9.0e15) throw ConfigError(field + ": '" + text + "' is not a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& field, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(field + ": '" + text + "' is not a boolean");
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
  return s;
}

struct Field {
  std::function<void(PipelineConfig&, const std::string& name, const std::string& text)> set;
  std::function<json(const PipelineConfig&)> get;
};

template <class T>
Field dbl(T PipelineConfig::*member) {
  return {[member](PipelineConfig& c, const std::string& n, const std::string& t) { c.*member = parse_double(n, t); },
          [member](const PipelineConfig& c) { return json(c.*member); }};
}

template <class Get>
Field real(Get get) {
  return {[get](PipelineConfig& c, const std::string& n, const std::string& t) { get(c) = parse_double(n, t); },
          [get](const PipelineConfig& c) { return json(get(const_cast<PipelineConfig&>(c))); }};
}

template <class Get>
Field integer(Get get) {
  return {[get](PipelineConfig& c, const std::string& n, const std::string& t) {
            using V = std::remove_reference_t<decltype(get(c))>;
            get(c) = static_cast<V>(parse_uint(n, t));
          },
          [get](const PipelineConfig& c) { return json(get(const_cast<PipelineConfig&>(c))); }};
}

template <class Get>
Field boolean(Get get) {
  return {[get](PipelineConfig& c, const std::string& n, const std::string& t) { get(c) = parse_bool(n, t); },
          [get](const PipelineConfig& c) { return json(get(const_cast<PipelineConfig&>(c))); }};
}

template <class Get>
Field text(Get get) {
  return {[get](PipelineConfig& c, const std::string&, const std::string& t) { get(c) = t; },
          [get](const PipelineConfig& c) { return json(std::string(get(const_cast<PipelineConfig&>(c)))); }};
}

const std::map<std::string, Field>& fields() {
  using C = PipelineConfig;
  static const std::map<std::string, Field> table = {
      {"paths.trips", text([](C& c) -> std::string { return c.trips.string(); })},
      {"run.seed", integer([](C& c) -> std::uint64_t& { return c.seed; })},
      {"run.threads", integer([](C& c) -> unsigned& { return c.threads; })},
      {"synth.grid_w", integer([](C& c) -> int& { return c.world.grid_w; })},
      {"synth.grid_h", integer([](C& c) -> int& { return c.world.grid_h; })},
      {"synth.spacing", real([](C& c) -> double& { return c.world.spacing; })},
      {"synth.n_sources", integer([](C& c) -> int& { return c.world.n_sources; })},
      {"synth.n_destinations", integer([](C& c) -> int& { return c.world.n_destinations; })},
      {"synth.sources_are_destinations", boolean([](C& c) -> bool& { return c.world.sources_are_destinations; })},
      {"synth.favorite_prob", real([](C& c) -> double& { return c.world.favorite_prob; })},
      {"synth.obs_per_node", integer([](C& c) -> int& { return c.world.obs_per_node; })},
      {"synth.position_noise", real([](C& c) -> double& { return c.world.position_noise; })},
      {"synth.heading_noise", real([](C& c) -> double& { return c.world.heading_noise; })},
      {"synth.p_dead_reckoning", real([](C& c) -> double& { return c.world.p_dead_reckoning; })},
      {"synth.dr_inflation", real([](C& c) -> double& { return c.world.dr_inflation; })},
      {"synth.speed_noise", real([](C& c) -> double& { return c.world.speed_noise; })},
      {"synth.train_trips", integer([](C& c) -> std::size_t& { return c.train_trips; })},
      {"synth.test_trips", integer([](C& c) -> std::size_t& { return c.held_out_trips; })},
      {"hmm.lambda_pos", real([](C& c) -> double& { return c.hmm.lambda_pos; })},
      {"hmm.heading_scale", real([](C& c) -> double& { return c.hmm.heading_scale; })},
      {"hmm.proximity_scale", real([](C& c) -> double& { return c.hmm.proximity_scale; })},
      {"hmm.alpha", real([](C& c) -> double& { return c.hmm.alpha; })},
      {"hmm.c", real([](C& c) -> double& { return c.hmm.c; })},
      {"hmm.colocation_radius", real([](C& c) -> double& { return c.hmm.colocation_radius; })},
      {"hmm.max_iter", integer([](C& c) -> std::size_t& { return c.hmm.max_iter; })},
      {"hmm.tol", real([](C& c) -> double& { return c.hmm.tol; })},
      {"hmm.augmented", boolean([](C& c) -> bool& { return c.augmented; })},
      {"predict.from", text([](C& c) -> std::string& { return c.route_from; })},
      {"predict.to", text([](C& c) -> std::string& { return c.route_to; })},
      {"predict.fraction", real([](C& c) -> double& { return c.fraction; })},
      {"predict.radius", real([](C& c) -> double& { return c.radius; })},
      {"quantize.lambda_v", real([](C& c) -> double& { return c.lambda_v; })},
      {"quantize.lambda_t", real([](C& c) -> double& { return c.lambda_t; })},
      {"hdp.gamma", real([](C& c) -> double& { return c.hdp.gamma; })},
      {"hdp.alpha", real([](C& c) -> double& { return c.hdp.alpha; })},
      {"hdp.lambda", real([](C& c) -> double& { return c.hdp.lambda; })},
      {"hdp.iters", integer([](C& c) -> std::size_t& { return c.hdp_iters; })},
      {"hdp.K0", integer([](C& c) -> std::size_t& { return c.K0; })},
      {"eval.ratio", real([](C& c) -> double& { return c.ratio; })},
      {"eval.snapshots", integer([](C& c) -> std::size_t& { return c.snapshots; })},
      {"eval.stride", integer([](C& c) -> std::size_t& { return c.stride; })},
      {"eval.heldout_every", integer([](C& c) -> std::size_t& { return c.heldout_every; })},
      {"eval.baseline_prior", real([](C& c) -> double& { return c.baseline_prior; })},
      {"eval.burn_in", integer([](C& c) -> std::size_t& { return c.burn_in; })},
      {"eval.samples", integer([](C& c) -> std::size_t& { return c.samples; })},
  };
  return table;
}

// Path-valued keys need their own setter because fs::path is not a string.
void set_path_field(PipelineConfig& c, const std::string& key, const std::string& value) {
  if (key == "paths.trips") c.trips = value;
  else if (key == "paths.test_trips") c.test_trips = value;
  else if (key == "paths.out") c.out = value;
}

// ---------------------------------------------------------------------------
// Artifact helpers.

fs::path artifact(const PipelineConfig& c, const std::string& name) { return c.out / name; }

fs::path require(const PipelineConfig& c, const std::string& name, const std::string& producer) {
  const auto p = artifact(c, name);
  if (!fs::exists(p))
    throw MissingArtifactError("missing artifact '" + p.string() + "': run the '" + producer + "' subcommand first");
  return p;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << j.dump(1) << '\n';
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return json::parse(in);
}

std::vector<Trip> load_trips(const fs::path& p, StageResult& r) {
  auto log = parse_trips(p);
  for (const auto& rej : log.rejected)
    r.messages.push_back("rejected trip '" + rej.trip_id + "' at line " + std::to_string(rej.line) + ": " + rej.reason);
  if (log.trips.empty()) throw std::runtime_error("no valid trips in " + p.string());
  return std::move(log.trips);
}

fs::path train_trips_path(const PipelineConfig& c) {
  return c.trips.empty() ? require(c, "trips_train.jsonl", "synth") : c.trips;
}

fs::path test_trips_path(const PipelineConfig& c) {
  return c.test_trips.empty() ? require(c, "trips_test.jsonl", "synth") : c.test_trips;
}

HmmModel primary_model(const PipelineConfig& c) {
  return load_model(require(c, c.augmented ? "model_aug.json" : "model_plain.json", "train-hmm"));
}

Vocabulary load_vocab(const PipelineConfig& c) {
  Vocabulary v;
  v.velocity = load_codebook(require(c, "codebook_velocity.json", "quantize"));
  v.time = load_codebook(require(c, "codebook_time.json", "quantize"));
  return v;
}

std::size_t parse_state(const HmmModel& m, const std::string& label, const char* field) {
  for (std::size_t s = 0; s < m.size(); ++s)
    if (to_string(m.states[s]) == label) return s;
  throw ConfigError(std::string(field) + ": no state labelled '" + label + "'");
}

void update_manifest(const PipelineConfig& c, const StageResult& r) {
  const auto path = artifact(c, "manifest.json");
  json m = fs::exists(path) ? read_json(path) : json::object();
  m["format_version"] = 1;
  m["tool"] = std::string("roadtopics ") + kVersion;
  json arts = json::object();
  for (const auto& a : r.artifacts) arts[a.filename().string()] = file_hash(a);
  m["stages"][r.stage] = {{"config_hash", c.hash()},
                          {"config", json::parse(c.canonical())},
                          {"seed", c.seed},
                          {"stage_seed", stage_seed(c.seed, r.stage)},
                          {"artifacts", std::move(arts)}};
  write_json(path, m);
}

// ---------------------------------------------------------------------------
// Stages.

json truth_json(const SampledTrips& s) {
  json arr = json::array();
  for (const auto& t : s.truth)
    arr.push_back({{"trip_id", t.trip_id}, {"source", t.source}, {"destination", t.destination}, {"nodes", t.node_per_obs}});
  return arr;
}

void stage_synth(const PipelineConfig& c, StageResult& r) {
  const auto seed = stage_seed(c.seed, "synth");
  const auto world = generate_world(c.world, seed);
  auto train = sample_trips(world, c.train_trips, mix_keys(seed, 1, 0, 0));
  auto test = sample_trips(world, c.held_out_trips, mix_keys(seed, 2, 0, 0));
  for (auto& t : test.trips) t.id = "test-" + t.id;
  for (auto& t : test.truth) t.trip_id = "test-" + t.trip_id;
  write_trips(artifact(c, "trips_train.jsonl"), train.trips);
  write_trips(artifact(c, "trips_test.jsonl"), test.trips);

  json nodes = json::array();
  for (std::size_t i = 0; i < world.nodes.size(); ++i)
    nodes.push_back({{"id", i}, {"x", world.nodes[i].x()}, {"y", world.nodes[i].y()},
                     {"present", static_cast<bool>(world.present[i])}, {"speed", world.node_speed[i]}});
  json policy = json::array();
  for (std::size_t s = 0; s < world.sources.size(); ++s) {
    json rows = json::array();
    for (const auto& ch : world.route_policy[s])
      rows.push_back({{"nodes", ch.nodes}, {"destination", ch.destination}, {"prob", ch.prob}});
    policy.push_back({{"source", world.sources[s]}, {"start_hour", world.source_hour[s]}, {"routes", rows}});
  }
  write_json(artifact(c, "truth.json"), {{"nodes", nodes},
                                         {"sources", world.sources},
                                         {"destinations", world.destinations},
                                         {"route_policy", policy},
                                         {"train", truth_json(train)},
                                         {"test", truth_json(test)}});
  r.artifacts = {artifact(c, "trips_train.jsonl"), artifact(c, "trips_test.jsonl"), artifact(c, "truth.json")};
  r.messages.push_back("sampled " + std::to_string(train.trips.size()) + " training and " +
                       std::to_string(test.trips.size()) + " test trips");
}

void stage_train_hmm(const PipelineConfig& c, StageResult& r) {
  const auto trips = load_trips(train_trips_path(c), r);
  HmmConfig hc = c.hmm;
  hc.threads = c.threads;
  const auto fit = em_fit(init_model(trips, hc, false), trips, hc);
  for (const auto& w : fit.warnings) r.messages.push_back("warning: " + w);
  save_model(artifact(c, "model_plain.json"), fit.model);
  {
    std::ofstream out(artifact(c, "em_trace.csv"));
    out << "iteration,objective\n";
    for (std::size_t i = 0; i < fit.objective.size(); ++i) out << i << ',' << num(fit.objective[i]) << '\n';
  }
  r.artifacts = {artifact(c, "model_plain.json"), artifact(c, "em_trace.csv")};
  r.messages.push_back("plain model: " + std::to_string(fit.model.size()) + " states, " +
                       std::to_string(fit.iterations) + " EM iterations" + (fit.converged ? "" : " (not converged)"));
  if (c.augmented) {
    const auto aug = augment_with_source(fit.model, trips, hc);
    save_model(artifact(c, "model_aug.json"), aug);
    r.artifacts.push_back(artifact(c, "model_aug.json"));
    r.messages.push_back("augmented model: " + std::to_string(aug.size()) + " states");
  }
}

void stage_predict_route(const PipelineConfig& c, StageResult& r) {
  const auto model = primary_model(c);
  const auto sources = model.source_states();
  const std::size_t from = c.route_from.empty() ? sources.at(0) : parse_state(model, c.route_from, "predict.from");
  std::size_t to = 0;
  if (c.route_to.empty()) {
    const auto table = absorption_table(model, c.threads);
    Eigen::Index best = 0;
    table.a.row(from).maxCoeff(&best);
    to = table.destinations[best];
  } else {
    to = parse_state(model, c.route_to, "predict.to");
  }
  const auto route = most_likely_route(model, from, to);
  json coords = json::array(), labels = json::array();
  for (auto s : route.path) {
    coords.push_back({model.emission(s).mu_r.x(), model.emission(s).mu_r.y()});
    labels.push_back(to_string(model.states[s]));
  }
  const json feature = {{"type", "Feature"},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                        {"properties", {{"from", to_string(model.states[from])},
                                        {"to", to_string(model.states[to])},
                                        {"log_prob", route.log_prob},
                                        {"states", labels}}}};
  write_json(artifact(c, "route.geojson"), {{"type", "FeatureCollection"}, {"features", json::array({feature})}});
  write_json(artifact(c, "route.json"), {{"states", labels}, {"log_prob", route.log_prob}});
  r.artifacts = {artifact(c, "route.geojson"), artifact(c, "route.json")};
  r.messages.push_back("route " + to_string(model.states[from]) + " -> " + to_string(model.states[to]) + ": " +
                       std::to_string(route.path.size()) + " states, log_prob " + num(route.log_prob));
}

void stage_predict_dest(const PipelineConfig& c, StageResult& r) {
  const auto trips = load_trips(test_trips_path(c), r);
  const auto plain = load_model(require(c, "model_plain.json", "train-hmm"));
  const auto plain_table = absorption_table(plain, c.threads);
  std::optional<HmmModel> aug;
  std::optional<AbsorptionTable> aug_table;
  if (c.augmented) {
    aug = load_model(require(c, "model_aug.json", "train-hmm"));
    aug_table = absorption_table(*aug, c.threads);
  }
  const HmmModel& model = aug ? *aug : plain;
  const AbsorptionTable& table = aug_table ? *aug_table : plain_table;

  std::ofstream curves(artifact(c, "destinations.csv"));
  curves << "trip_id,timestep,destination_id,probability\n";
  std::ofstream early(artifact(c, "early_prediction.csv"));
  early << "trip_id,prefix,plain_correct,plain_true_prob" << (aug ? ",aug_correct,aug_true_prob" : "") << '\n';
  std::size_t plain_ok = 0, aug_ok = 0, scored = 0;
  for (const auto& trip : trips) {
    std::vector<DestinationEstimate> track;
    try {
      track = track_destinations(model, table, trip);
    } catch (const std::runtime_error& e) {
      r.messages.push_back("skipped trip '" + trip.id + "': " + e.what());
      continue;
    }
    for (const auto& e : track)
      for (std::size_t j = 0; j < e.probs.size(); ++j)
        curves << trip.id << ',' << e.step << ',' << to_string(model.states[table.destinations[j]]) << ','
               << num(e.probs[j]) << '\n';
    const Vec2 truth = trip.obs.back().r;
    const auto p = predict_after_fraction(plain, plain_table, trip, truth, c.fraction, c.radius);
    early << trip.id << ',' << p.prefix << ',' << p.correct << ',' << num(p.true_probability);
    plain_ok += p.correct;
    if (aug) {
      const auto a = predict_after_fraction(*aug, *aug_table, trip, truth, c.fraction, c.radius);
      early << ',' << a.correct << ',' << num(a.true_probability);
      aug_ok += a.correct;
    }
    early << '\n';
    ++scored;
  }
  r.artifacts = {artifact(c, "destinations.csv"), artifact(c, "early_prediction.csv")};
  r.messages.push_back("correct after " + num(c.fraction * 100) + "% of the trip: plain " + std::to_string(plain_ok) +
                       "/" + std::to_string(scored) +
                       (aug ? ", augmented " + std::to_string(aug_ok) + "/" + std::to_string(scored) : ""));
}

void stage_quantize(const PipelineConfig& c, StageResult& r) {
  const auto trips = load_trips(train_trips_path(c), r);
  std::vector<double> v, t;
  for (const auto& trip : trips)
    for (const auto& s : trip.signals) {
      v.push_back(s.velocity);
      t.push_back(s.hour);
    }
  if (v.empty()) throw std::runtime_error("quantize: trips carry no signal streams ('v' and 'tod')");
  const auto vocab = build_vocab(v, t, c.lambda_v, c.lambda_t);
  save_codebook(artifact(c, "codebook_velocity.json"), vocab.velocity);
  save_codebook(artifact(c, "codebook_time.json"), vocab.time);
  r.artifacts = {artifact(c, "codebook_velocity.json"), artifact(c, "codebook_time.json")};
  r.messages.push_back("vocabulary: " + std::to_string(vocab.v_count()) + " velocity x " +
                       std::to_string(vocab.t_count()) + " time bins = " + std::to_string(vocab.size()) + " words");
}

void stage_corpus(const PipelineConfig& c, StageResult& r) {
  const auto model = load_model(require(c, "model_plain.json", "train-hmm"));
  const auto vocab = load_vocab(c);
  const auto trips = load_trips(train_trips_path(c), r);
  const auto corpus = extract_corpus(model, trips, vocab, c.threads);
  save_corpus(artifact(c, "corpus.json"), corpus);
  r.artifacts = {artifact(c, "corpus.json")};
  r.messages.push_back("corpus: " + std::to_string(corpus.docs.size()) + " road documents, " +
                       std::to_string(corpus.total_words()) + " words");
}

PredictiveOptions predictive_options(const PipelineConfig& c, std::uint64_t seed) {
  return {c.burn_in, c.samples, seed, c.threads};
}

void stage_train_hdp(const PipelineConfig& c, StageResult& r) {
  const auto corpus = load_corpus(require(c, "corpus.json", "corpus"));
  const auto split = heldout_split(corpus, c.ratio, stage_seed(c.seed, "split"));
  SamplerOptions o;
  o.iterations = c.hdp_iters;
  o.K0 = c.K0;
  o.seed = stage_seed(c.seed, "train-hdp");
  o.threads = c.threads;
  std::vector<HdpSnapshot> snaps;
  const auto eval_seed = stage_seed(c.seed, "heldout");
  auto hook = [&](const HdpState& s, IterationDiagnostics& d) {
    const std::size_t from_end = c.hdp_iters - 1 - d.iteration;
    if (from_end % c.stride == 0 && from_end / c.stride < c.snapshots) snaps.push_back(take_snapshot(s, d.iteration));
    if (c.heldout_every > 0 && (d.iteration % c.heldout_every == 0 || from_end == 0)) {
      const auto snap = take_snapshot(s, d.iteration);
      d.heldout_ll = hdp_predictive(std::span(&snap, 1), c.hdp, split, predictive_options(c, eval_seed)).avg_log_pred;
      d.has_heldout = true;
    }
  };
  const auto run = run_sampler(split.obs, c.hdp, o, hook);
  save_checkpoint(artifact(c, "hdp_checkpoint"), run.state, c.hdp, c.hdp_iters);
  save_snapshots(artifact(c, "hdp_snapshots.json"), c.hdp, snaps);
  write_diagnostics_csv(artifact(c, "hdp_diagnostics.csv"), run.diagnostics);

  std::size_t t_count = 1;
  if (fs::exists(artifact(c, "codebook_time.json"))) t_count = load_codebook(artifact(c, "codebook_time.json")).size();
  std::ofstream topics(artifact(c, "topics.csv"));
  topics << "topic,weight,rank,word,v_bin,t_bin,prob\n";
  for (const auto& t : topic_report(run.state, t_count))
    for (std::size_t i = 0; i < t.top.size(); ++i)
      topics << t.topic << ',' << num(t.weight) << ',' << i << ',' << t.top[i].flat << ',' << t.top[i].v_bin << ','
             << t.top[i].t_bin << ',' << num(t.top[i].prob) << '\n';
  r.artifacts = {artifact(c, "hdp_checkpoint.json"), artifact(c, "hdp_checkpoint.bin"),
                 artifact(c, "hdp_snapshots.json"), artifact(c, "hdp_diagnostics.csv"), artifact(c, "topics.csv")};
  r.messages.push_back("HDP: " + std::to_string(run.state.num_topics()) + " topics after " +
                       std::to_string(c.hdp_iters) + " iterations");
}

void stage_eval(const PipelineConfig& c, StageResult& r) {
  const auto corpus = load_corpus(require(c, "corpus.json", "corpus"));
  HdpHyper hyper;
  const auto snaps = load_snapshots(require(c, "hdp_snapshots.json", "train-hdp"), &hyper);
  const auto split = heldout_split(corpus, c.ratio, stage_seed(c.seed, "split"));
  const auto hdp = hdp_predictive(snaps, hyper, split, predictive_options(c, stage_seed(c.seed, "eval")));
  const auto base = baseline_predictive(split, c.baseline_prior);
  std::ofstream out(artifact(c, "scores.csv"));
  out << "doc_id,n_obs,n_ho,avg_log_pred_hdp,avg_log_pred_baseline\n";
  for (std::size_t j = 0; j < hdp.per_doc.size(); ++j) {
    const auto& d = hdp.per_doc[j];
    if (d.n_ho == 0) continue;
    out << corpus.docs[j].road << ',' << d.n_obs << ',' << d.n_ho << ',' << num(d.avg()) << ','
        << num(base.per_doc[j].avg()) << '\n';
  }
  write_json(artifact(c, "eval_summary.json"), {{"heldout_words", hdp.n_words},
                                                {"avg_log_pred_hdp", hdp.avg_log_pred},
                                                {"avg_log_pred_baseline", base.avg_log_pred},
                                                {"snapshots", snaps.size()},
                                                {"ratio", c.ratio}});
  r.artifacts = {artifact(c, "scores.csv"), artifact(c, "eval_summary.json")};
  r.messages.push_back("held-out avg log predictive: HDP " + num(hdp.avg_log_pred) + ", baseline " +
                       num(base.avg_log_pred));
}

void stage_export(const PipelineConfig& c, StageResult& r) {
  const auto model = primary_model(c);
  const auto plain = load_model(require(c, "model_plain.json", "train-hmm"));
  const auto vocab = load_vocab(c);
  const auto corpus = load_corpus(require(c, "corpus.json", "corpus"));
  const auto ckpt = load_checkpoint(artifact(c, "hdp_checkpoint").string().size() && fs::exists(artifact(c, "hdp_checkpoint.json"))
                                        ? artifact(c, "hdp_checkpoint")
                                        : require(c, "hdp_checkpoint.json", "train-hdp"));
  const auto table = absorption_table(model, c.threads);
  const auto best = most_likely_destination_per_state(table);

  {
    std::ofstream out(artifact(c, "absorption.csv"));
    out << "state,destination,probability\n";
    for (std::size_t s = 0; s < model.size(); ++s)
      for (std::size_t j = 0; j < table.destinations.size(); ++j)
        if (table.a(s, j) > 0.0)
          out << to_string(model.states[s]) << ',' << to_string(model.states[table.destinations[j]]) << ','
              << num(table.a(s, j)) << '\n';
  }

  json dest_features = json::array();
  for (std::size_t s = 0; s < model.size(); ++s) {
    if (!model.is_road(s)) continue;
    const auto& mu = model.emission(s).mu_r;
    json props = {{"state", to_string(model.states[s])}, {"road", model.road_of(s)}};
    if (model.states[s].kind == StateKind::RoadAug) props["source"] = model.states[s].source;
    if (best[s]) {
      props["destination"] = to_string(model.states[*best[s]]);
      props["probability"] = table.a(s, *table.column_of(*best[s]));
    } else {
      props["destination"] = nullptr;
    }
    dest_features.push_back({{"type", "Feature"},
                             {"geometry", {{"type", "Point"}, {"coordinates", {mu.x(), mu.y()}}}},
                             {"properties", props}});
  }
  write_json(artifact(c, "roads_destination.geojson"), {{"type", "FeatureCollection"}, {"features", dest_features}});

  json signal_features = json::array();
  const auto& state = ckpt.state;
  for (std::size_t s = 0; s < plain.size(); ++s) {
    if (!plain.is_road(s)) continue;
    const int road = plain.road_of(s);
    if (static_cast<std::size_t>(road) >= state.num_docs() || corpus.docs[road].words.empty()) continue;
    const auto ml = ml_marginals(state, road, vocab.v_count(), vocab.t_count());
    const auto emp = empirical_marginals(corpus, road, vocab.v_count(), vocab.t_count());
    const auto& mu = plain.emission(s).mu_r;
    signal_features.push_back(
        {{"type", "Feature"},
         {"geometry", {{"type", "Point"}, {"coordinates", {mu.x(), mu.y()}}}},
         {"properties",
          {{"road", road},
           {"words", corpus.docs[road].words.size()},
           {"ml_velocity_bin", ml.velocity_ml},
           {"ml_velocity_mps", vocab.velocity.centers(ml.velocity_ml, 0)},
           {"ml_time_bin", ml.time_ml},
           {"ml_time_hour", vocab.time.centers(ml.time_ml, 0)},
           {"empirical_velocity_bin", emp.velocity_ml},
           {"empirical_time_bin", emp.time_ml}}}});
  }
  write_json(artifact(c, "roads_signals.geojson"), {{"type", "FeatureCollection"}, {"features", signal_features}});
  r.artifacts = {artifact(c, "absorption.csv"), artifact(c, "roads_destination.geojson"),
                 artifact(c, "roads_signals.geojson")};
  r.messages.push_back("exported " + std::to_string(dest_features.size()) + " road states and " +
                       std::to_string(signal_features.size()) + " road signal summaries");
}

}  // namespace

void PipelineConfig::validate() const {
  try {
    hmm.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  try {
    hdp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  auto fail = [](const std::string& f, const std::string& why) { throw ConfigError(f + ": " + why); };
  if (threads < 1) fail("run.threads", "must be >= 1");
  if (train_trips < 1) fail("synth.train_trips", "must be >= 1");
  if (!(fraction > 0 && fraction <= 1)) fail("predict.fraction", "must be in (0, 1]");
  if (!(radius >= 0)) fail("predict.radius", "must be >= 0");
  if (!(lambda_v > 0)) fail("quantize.lambda_v", "must be > 0");
  if (!(lambda_t > 0)) fail("quantize.lambda_t", "must be > 0");
  if (hdp_iters < 1) fail("hdp.iters", "must be >= 1");
  if (K0 < 1) fail("hdp.K0", "must be >= 1");
  if (!(ratio > 0 && ratio < 1)) fail("eval.ratio", "must be in (0, 1)");
  if (snapshots < 1) fail("eval.snapshots", "must be >= 1");
  if (stride < 1) fail("eval.stride", "must be >= 1");
  if (!(baseline_prior > 0)) fail("eval.baseline_prior", "must be > 0");
  if (samples < 1) fail("eval.samples", "must be >= 1");
}

std::string PipelineConfig::canonical() const {
  json j = json::object();
  for (const auto& [key, field] : fields()) j[key] = field.get(*this);
  j["paths.test_trips"] = test_trips.string();
  return j.dump();
}

std::string PipelineConfig::hash() const { return hex64(fnv1a(canonical())); }

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file '" + path.string() + "' does not exist");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section + ": top-level keys must belong to a [section]");
    for (const auto& [key, node] : body) {
      const std::string name = section + "." + key;
      const std::string value = unquote(node.get_value<std::string>());
      if (name == "paths.trips" || name == "paths.test_trips" || name == "paths.out") {
        set_path_field(c, name, value);
        continue;
      }
      const auto it = fields().find(name);
      if (it == fields().end()) throw ConfigError(name + ": unknown setting");
      it->second.set(c, name, value);
    }
  }
  c.validate();
  return c;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a(ss.str()));
}

std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) { return mix_keys(seed, fnv1a(stage), 0, 0); }

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth", "train-hmm", "predict-route", "predict-dest", "quantize",
                                                 "corpus", "train-hdp", "eval", "export"};
  return names;
}

StageResult run_stage(const std::string& stage, const PipelineConfig& config) {
  config.validate();
  static const std::map<std::string, void (*)(const PipelineConfig&, StageResult&)> table = {
      {"synth", stage_synth},     {"train-hmm", stage_train_hmm}, {"predict-route", stage_predict_route},
      {"predict-dest", stage_predict_dest}, {"quantize", stage_quantize}, {"corpus", stage_corpus},
      {"train-hdp", stage_train_hdp}, {"eval", stage_eval},       {"export", stage_export}};
  const auto it = table.find(stage);
  if (it == table.end()) throw std::invalid_argument("unknown subcommand '" + stage + "'");
  fs::create_directories(config.out);
  StageResult r;
  r.stage = stage;
  it->second(config, r);
  update_manifest(config, r);
  return r;
}

}  // namespace roadtopics
