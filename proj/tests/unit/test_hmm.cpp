#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/LU>

#include "oracles.hpp"
#include "roadtopics/hmm.hpp"

using namespace roadtopics;

namespace {

Observation obs_at(double x, double y, double h, bool on = false, bool off = false, double t = 0) {
  Observation o;
  o.t = t;
  o.r = {x, y};
  o.h = h;
  o.k_on = on;
  o.k_off = off;
  return o;
}

// S0 -> R0 -> D0 with probability one.
HmmModel chain_model() {
  HmmModel m;
  m.num_sources = m.num_destinations = m.num_roads = 1;
  m.states = {{StateKind::Source, 0, -1}, {StateKind::Destination, 0, -1}, {StateKind::Road, 0, -1}};
  m.emission_of = {1, 2, 0};
  m.emissions.resize(3);
  m.emissions[0].mu_r = {50, 0};
  m.emissions[1].mu_r = {0, 0};
  m.emissions[2].mu_r = {100, 0};
  m.theta0 = {1, 0, 0};
  m.trans = {{{2, 1.0}}, {{1, 1.0}}, {{1, 0.5}, {2, 0.5}}};
  m.check();
  return m;
}

Trip straight_trip(double from, double to, double step, double t0 = 0) {
  Trip t;
  t.id = "line";
  const double dir = to > from ? 0.0 : std::numbers::pi;
  const int n = static_cast<int>(std::round(std::abs(to - from) / step));
  for (int i = 0; i <= n; ++i) {
    const double x = from + (to > from ? 1 : -1) * step * i;
    t.obs.push_back(obs_at(x, 0, dir, i == 0, i == n, t0 + i));
  }
  return t;
}

HmmConfig quiet_config() {
  HmmConfig c;
  c.max_iter = 30;
  return c;
}

}  // namespace

TEST(ObsLoglik, DensityAtTheMean) {
  auto m = chain_model();
  auto& e = m.emissions[0];
  e.sigma_r << 4, 1, 1, 9;
  e.sigma_h = 0.2;
  e.p_q = 0.1;
  const auto o = obs_at(50, 0, 0);
  const double expect = -std::log(2 * std::numbers::pi) - 0.5 * std::log(35.0) -
                        0.5 * std::log(2 * std::numbers::pi * 0.2) + std::log(0.9);
  EXPECT_NEAR(obs_loglik(m, 2, o), expect, 1e-12);
}

TEST(ObsLoglik, KeyIndicatorsAreDegenerate) {
  const auto m = chain_model();
  EXPECT_EQ(obs_loglik(m, 2, obs_at(50, 0, 0, true)), -INFINITY);
  EXPECT_EQ(obs_loglik(m, 0, obs_at(0, 0, 0)), -INFINITY);
  EXPECT_EQ(obs_loglik(m, 1, obs_at(0, 0, 0, true)), -INFINITY);
  EXPECT_TRUE(std::isfinite(obs_loglik(m, 0, obs_at(0, 0, 0, true))));
  EXPECT_TRUE(std::isfinite(obs_loglik(m, 1, obs_at(0, 0, 0, false, true))));
}

TEST(ObsLoglik, DeadReckoningRatio) {
  auto m = chain_model();
  auto& e = m.emissions[0];
  e.sigma_r << 30, 5, 5, 20;
  e.p_q = 0.2;
  e.c = 10;
  auto o = obs_at(57, -3, 0.1);
  const double l0 = obs_loglik(m, 2, o);
  o.q = true;
  const double l1 = obs_loglik(m, 2, o);
  const Eigen::Vector2d r(7, -3);
  const Eigen::Matrix2d S = e.sigma_r;
  const double expect = 0.5 * r.dot((S.inverse() - Eigen::Matrix2d(e.c * S).inverse()) * r) - std::log(e.c) +
                        std::log(e.p_q / (1 - e.p_q));
  EXPECT_NEAR(l1 - l0, expect, 1e-10);
}

TEST(Viterbi, SingleFeasibleChain) {
  const auto m = chain_model();
  Trip t;
  t.obs = {obs_at(0, 0, 0, true, false, 0), obs_at(50, 0, 0, false, false, 1), obs_at(100, 0, 0, false, true, 2)};
  const auto d = viterbi(m, t);
  EXPECT_EQ(d.path, (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_NEAR(d.log_likelihood, path_loglik(m, t, d.path), 1e-12);
}

TEST(Viterbi, InfeasibleTripThrows) {
  const auto m = chain_model();
  Trip t;
  t.obs = {obs_at(0, 0, 0, true, false, 0), obs_at(100, 0, 0, false, true, 1)};
  EXPECT_THROW(viterbi(m, t), std::runtime_error);
}

TEST(Viterbi, MatchesBruteForceOnRandomModels) {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = oracle::random_model(rng, 1, 1, 3, 0.6);
    const bool keys = trial % 2 == 0;
    const auto t = oracle::random_trip(rng, 4, keys);
    const auto best = oracle::brute_force_viterbi(m, t);
    if (best.loglik == -INFINITY) {
      EXPECT_THROW(viterbi(m, t), std::runtime_error);
      continue;
    }
    const auto d = viterbi(m, t);
    EXPECT_EQ(d.path, best.path) << "trial " << trial;
    EXPECT_NEAR(d.log_likelihood, best.loglik, 1e-9 * std::abs(best.loglik));
  }
}

TEST(Viterbi, PrefixStatesEndTheBestPrefixPath) {
  Rng rng(23);
  const auto m = oracle::random_model(rng, 1, 1, 3, 0.8);
  auto t = oracle::random_trip(rng, 5, false);
  const auto ends = viterbi_prefix_states(m, t, 5);
  for (std::size_t n = 1; n <= 5; ++n) {
    Trip prefix = t;
    prefix.obs.resize(n);
    EXPECT_EQ(ends[n - 1], oracle::brute_force_viterbi(m, prefix).path.back());
  }
}

TEST(InitModel, StraightRoadGivesSeveralRoadStates) {
  const std::vector<Trip> trips{straight_trip(0, 500, 10)};
  const auto m = init_model(trips, quiet_config(), false);
  EXPECT_GE(m.num_roads, 5);
  EXPECT_EQ(m.num_sources, 1);
  EXPECT_EQ(m.num_destinations, 1);
  m.check();
}

TEST(InitModel, ColocatedEndpointsShareARecord) {
  const std::vector<Trip> trips{straight_trip(0, 500, 10, 0), straight_trip(500, 0, 10, 1000)};
  const auto m = init_model(trips, quiet_config(), false);
  ASSERT_EQ(m.num_sources, 2);
  ASSERT_EQ(m.num_destinations, 2);
  // Each source pairs with the destination at the same end of the road.
  for (auto s : m.source_states()) {
    bool shared = false;
    for (auto d : m.destination_states()) shared |= m.emission_of[s] == m.emission_of[d];
    EXPECT_TRUE(shared);
  }
  EXPECT_EQ(m.emissions.size(), static_cast<std::size_t>(m.num_roads) + 2);
}

TEST(InitModel, AugmentedCardinality) {
  const std::vector<Trip> trips{straight_trip(0, 500, 10, 0), straight_trip(500, 0, 10, 1000)};
  const auto plain = init_model(trips, quiet_config(), false);
  const auto aug = init_model(trips, quiet_config(), true);
  EXPECT_EQ(aug.size(), 2u + aug.num_destinations + 2u * plain.num_roads);
  aug.check();
}

TEST(EmFit, ObjectiveNeverDecreases) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    WorldConfig wc;
    wc.grid_w = wc.grid_h = 5;
    wc.position_noise = 15.0;
    wc.heading_noise = 0.3;
    const auto trips = sample_trips(generate_world(wc, seed), 40, seed + 100).trips;
    auto cfg = quiet_config();
    cfg.proximity_scale = 300;
    const auto fit = em_fit(init_model(trips, cfg, false), trips, cfg);
    for (std::size_t i = 1; i < fit.objective.size(); ++i)
      EXPECT_GE(fit.objective[i], fit.objective[i - 1] - 1e-9 * std::abs(fit.objective[i - 1])) << "seed " << seed;
    fit.model.check();
    EXPECT_NEAR(em_objective(fit.model, trips, fit.paths), fit.objective.back(),
                1e-9 * std::abs(fit.objective.back()));
  }
}

TEST(EmFit, ConvergedModelIsAFixedPoint) {
  const auto trips = sample_trips(generate_world({}, 4), 30, 5).trips;
  auto cfg = quiet_config();
  const auto fit = em_fit(init_model(trips, cfg, false), trips, cfg);
  ASSERT_TRUE(fit.converged);
  cfg.max_iter = 1;
  const auto again = em_fit(fit.model, trips, cfg);
  ASSERT_EQ(again.model.size(), fit.model.size());
  for (std::size_t r = 0; r < fit.model.emissions.size(); ++r) {
    EXPECT_LT((again.model.emissions[r].mu_r - fit.model.emissions[r].mu_r).norm(), 1e-9);
    EXPECT_LT((again.model.emissions[r].sigma_r - fit.model.emissions[r].sigma_r).norm(), 1e-6);
  }
  for (std::size_t s = 0; s < fit.model.size(); ++s)
    for (const auto& t : fit.model.trans[s]) EXPECT_NEAR(again.model.transition(s, t.target), t.prob, 1e-12);
}

TEST(EmFit, NoiselessWorldRecoversNodePositions) {
  WorldConfig wc;
  wc.position_noise = 0.0;
  wc.heading_noise = 0.0;
  wc.p_dead_reckoning = 0.0;
  const auto world = generate_world(wc, 8);
  const auto sampled = sample_trips(world, 60, 9);
  const auto fit = em_fit(init_model(sampled.trips, quiet_config(), false), sampled.trips, quiet_config());
  for (std::size_t s = 0; s < fit.model.size(); ++s) {
    double nearest = INFINITY;
    for (const auto& p : world.nodes) nearest = std::min(nearest, (p - fit.model.emission(s).mu_r).norm());
    EXPECT_LT(nearest, 1.0) << to_string(fit.model.states[s]);
  }
  // Re-decoding a training trip lands every observation on its true node.
  for (std::size_t i = 0; i < 5; ++i) {
    const auto d = viterbi(fit.model, sampled.trips[i]);
    for (std::size_t t = 0; t < d.path.size(); ++t)
      EXPECT_LT((fit.model.emission(d.path[t]).mu_r - world.nodes[sampled.truth[i].node_per_obs[t]]).norm(), 1.0);
  }
}

TEST(Augment, SingleSourceMatchesPlainStructure) {
  WorldConfig wc;
  wc.n_sources = 1;
  wc.sources_are_destinations = false;
  const auto trips = sample_trips(generate_world(wc, 3), 40, 4).trips;
  const auto fit = em_fit(init_model(trips, quiet_config(), false), trips, quiet_config());
  const auto aug = augment_with_source(fit.model, trips, quiet_config());
  aug.check();
  EXPECT_EQ(aug.emissions.size(), fit.model.emissions.size());
  EXPECT_EQ(aug.size(), fit.model.size());
  // Same number of used transitions per state once relabelled through the road index.
  EXPECT_EQ(aug.nonzero_transitions(), fit.model.nonzero_transitions());
}

TEST(Augment, SourceDependentRowsDiffer) {
  const auto sampled = sample_trips(generate_world({}, 5), 300, 6);
  const auto fit = em_fit(init_model(sampled.trips, quiet_config(), false), sampled.trips, quiet_config());
  const auto aug = augment_with_source(fit.model, sampled.trips, quiet_config());
  EXPECT_EQ(aug.emissions.size(), fit.model.emissions.size());
  // Transition rows expressed over (kind, road or destination index), ignoring the source tag.
  auto row = [&](std::size_t s) {
    std::map<std::pair<int, int>, double> r;
    for (const auto& t : aug.trans[s]) {
      const auto& id = aug.states[t.target];
      const int kind = id.kind == StateKind::RoadAug ? static_cast<int>(StateKind::Road) : static_cast<int>(id.kind);
      r[{kind, id.index}] += t.prob;
    }
    return r;
  };
  bool any_differs = false;
  for (std::size_t a = 0; a < aug.size(); ++a)
    for (std::size_t b = a + 1; b < aug.size(); ++b) {
      if (aug.states[a].kind != StateKind::RoadAug || aug.states[b].kind != StateKind::RoadAug) continue;
      if (aug.states[a].index != aug.states[b].index) continue;
      const auto ra = row(a), rb = row(b);
      if (ra.size() != rb.size()) {
        any_differs = true;
        continue;
      }
      for (const auto& [k, p] : ra) {
        const auto it = rb.find(k);
        any_differs |= it == rb.end() || std::abs(it->second - p) > 1e-6;
      }
    }
  EXPECT_TRUE(any_differs);
}

TEST(ExtractCorpus, WordsAreConserved) {
  const auto trips = sample_trips(generate_world({}, 3), 40, 4).trips;
  const auto fit = em_fit(init_model(trips, quiet_config(), false), trips, quiet_config());
  std::vector<double> v, h;
  for (const auto& t : trips)
    for (const auto& s : t.signals) v.push_back(s.velocity), h.push_back(s.hour);
  const auto vocab = build_vocab(v, h);
  const auto corpus = extract_corpus(fit.model, trips, vocab);
  EXPECT_EQ(corpus.docs.size(), static_cast<std::size_t>(fit.model.num_roads));
  std::size_t road_obs = 0;
  for (const auto& t : trips)
    for (auto s : viterbi(fit.model, t).path) road_obs += fit.model.is_road(s);
  EXPECT_EQ(corpus.total_words(), road_obs);
  corpus.check();
}

TEST(ExtractCorpus, OneRoadGivesOneDocument) {
  auto m = chain_model();
  Trip t;
  t.obs = {obs_at(0, 0, 0, true, false, 0), obs_at(50, 0, 0, false, false, 1), obs_at(52, 0, 0, false, false, 2),
           obs_at(100, 0, 0, false, true, 3)};
  t.signals = {{1, 1}, {2, 2}, {3, 3}, {4, 4}};
  const std::vector<double> v{1, 2, 3, 4}, h{1, 2, 3, 4};
  const auto corpus = extract_corpus(m, std::vector<Trip>{t}, build_vocab(v, h));
  std::size_t nonempty = 0;
  for (const auto& d : corpus.docs) nonempty += !d.words.empty();
  EXPECT_EQ(nonempty, 1u);
  EXPECT_EQ(corpus.total_words(), 2u);
  t.signals.pop_back();
  EXPECT_THROW(extract_corpus(m, std::vector<Trip>{t}, build_vocab(v, h)), std::invalid_argument);
}

TEST(ModelIo, RoundTrip) {
  const auto sampled = sample_trips(generate_world({}, 5), 50, 6);
  const auto fit = em_fit(init_model(sampled.trips, quiet_config(), false), sampled.trips, quiet_config());
  const auto aug = augment_with_source(fit.model, sampled.trips, quiet_config());
  const auto p = std::filesystem::temp_directory_path() / "roadtopics_model_rt.json";
  save_model(p, aug);
  const auto back = load_model(p);
  ASSERT_EQ(back.size(), aug.size());
  EXPECT_TRUE(back.augmented);
  for (std::size_t s = 0; s < aug.size(); ++s) {
    EXPECT_EQ(back.states[s], aug.states[s]);
    EXPECT_EQ(back.emission_of[s], aug.emission_of[s]);
    EXPECT_EQ(back.theta0[s], aug.theta0[s]);
    ASSERT_EQ(back.trans[s].size(), aug.trans[s].size());
    for (std::size_t i = 0; i < aug.trans[s].size(); ++i) EXPECT_EQ(back.trans[s][i].prob, aug.trans[s][i].prob);
  }
  for (std::size_t r = 0; r < aug.emissions.size(); ++r) EXPECT_EQ(back.emissions[r].sigma_r, aug.emissions[r].sigma_r);
}

TEST(HmmConfig, RejectsBadFields) {
  HmmConfig c;
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.c = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
