// Acceptance report: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "roadtopics/eval.hpp"
#include "roadtopics/pipeline.hpp"
#include "roadtopics/predict.hpp"

using namespace roadtopics;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Hard-EM objective never decreases.
Outcome em_monotonicity() {
  std::size_t worst_iters = 0, violations = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    WorldConfig wc;
    wc.grid_w = 4 + static_cast<int>(seed % 3);
    wc.grid_h = 5;
    wc.position_noise = 10.0 + 2.0 * seed;
    wc.heading_noise = 0.3;
    wc.p_dead_reckoning = 0.1;
    const auto trips = sample_trips(generate_world(wc, seed), 60, seed + 1000).trips;
    HmmConfig cfg;
    cfg.max_iter = 50;
    cfg.proximity_scale = 300.0;
    const auto fit = em_fit(init_model(trips, cfg, false), trips, cfg);
    worst_iters = std::max(worst_iters, fit.objective.size());
    for (std::size_t i = 1; i < fit.objective.size(); ++i) {
      const double drop = (fit.objective[i - 1] - fit.objective[i]) / std::abs(fit.objective[i - 1]);
      worst = std::max(worst, drop);
      violations += drop > 1e-9;
    }
  }
  return {violations == 0, fmt("10 worlds, up to %zu objective entries, largest relative drop %.3g", worst_iters, worst)};
}

// 2. Viterbi equals exhaustive search.
Outcome viterbi_exactness() {
  Rng rng(2024);
  int mismatches = 0, infeasible = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const bool keys = trial % 2 == 0;
    const auto m = keys ? oracle::random_model(rng, 1, 1, 1 + static_cast<int>(rng.below(3)), 0.6)
                        : oracle::random_model(rng, 0, 0, 2 + static_cast<int>(rng.below(4)), 0.6);
    const auto t = oracle::random_trip(rng, (keys ? 2 : 1) + rng.below(keys ? 5 : 6), keys);
    const auto best = oracle::brute_force_viterbi(m, t);
    if (best.loglik == -INFINITY) {
      ++infeasible;
      try {
        viterbi(m, t);
        ++mismatches;
      } catch (const std::runtime_error&) {
      }
      continue;
    }
    const auto d = viterbi(m, t);
    mismatches += d.path != best.path || std::abs(d.log_likelihood - best.loglik) > 1e-9 * std::abs(best.loglik);
  }
  return {mismatches == 0, fmt("200 models, %d mismatches (%d infeasible trips agreed)", mismatches, infeasible)};
}

// 3. Absorption probabilities against rollouts.
Outcome absorption_correctness() {
  Rng rng(77);
  const auto m = oracle::random_model(rng, 3, 4, 23, 0.15);
  const auto t = absorption_table(m);
  double worst_mc = 0.0, worst_row = 0.0, residual_mass = 0.0;
  for (std::size_t s = 0; s < m.size(); ++s) {
    const auto f = oracle::rollout_absorption(m, s, 100000, 100000, rng);
    for (std::size_t j = 0; j < t.destinations.size(); ++j) worst_mc = std::max(worst_mc, std::abs(t.a(s, j) - f[j]));
    worst_row = std::max(worst_row, std::abs(t.a.row(s).sum() + t.residual(s) - 1.0));
    residual_mass += t.residual(s);
  }
  return {worst_mc < 0.02 && worst_row <= 1e-8,
          fmt("30 states, max |a - rollout| %.4f, max row error %.2g, total residual %.3f", worst_mc, worst_row,
              residual_mass)};
}

// 4. Dijkstra route equals the best simple path.
Outcome route_optimality() {
  Rng rng(99);
  int pairs = 0, mismatches = 0;
  for (int g = 0; g < 100; ++g) {
    const auto m = oracle::random_model(rng, 1, 1, 2 + static_cast<int>(rng.below(5)), 0.3);
    for (std::size_t a = 0; a < m.size(); ++a)
      for (std::size_t b = 0; b < m.size(); ++b) {
        if (a == b) continue;
        const auto best = oracle::best_simple_path(m, a, b);
        ++pairs;
        if (best.loglik == -INFINITY) {
          try {
            most_likely_route(m, a, b);
            ++mismatches;
          } catch (const std::runtime_error&) {
          }
          continue;
        }
        const auto r = most_likely_route(m, a, b);
        mismatches += r.path != best.path || std::abs(r.log_prob - best.loglik) > 1e-9;
      }
  }
  return {mismatches == 0, fmt("100 graphs, %d ordered pairs, %d mismatches", pairs, mismatches)};
}

// 5. Augmented model predicts destinations earlier than the plain model.
Outcome augmented_advantage() {
  bool all = true;
  std::string detail;
  for (std::uint64_t seed : {101, 202, 303}) {
    const auto world = generate_world({}, seed);
    const auto train = sample_trips(world, 300, seed + 1).trips;
    const auto test = sample_trips(world, 40, seed + 2).trips;
    HmmConfig cfg;
    const auto fit = em_fit(init_model(train, cfg, false), train, cfg);
    const auto aug = augment_with_source(fit.model, train, cfg);
    const auto tp = absorption_table(fit.model), ta = absorption_table(aug);
    int plain_ok = 0, aug_ok = 0;
    for (const auto& trip : test) {
      const Vec2 truth = trip.obs.back().r;
      plain_ok += predict_after_fraction(fit.model, tp, trip, truth).correct;
      aug_ok += predict_after_fraction(aug, ta, trip, truth).correct;
    }
    all &= aug_ok > plain_ok;
    detail += fmt("%sseed %llu: plain %d/40 aug %d/40", detail.empty() ? "" : ", ",
                  static_cast<unsigned long long>(seed), plain_ok, aug_ok);
  }
  return {all, detail};
}

// 6. Fixed-K Gibbs sampler against the enumerated posterior.
Outcome restricted_gibbs() {
  Corpus c;
  c.vocab_size = 3;
  c.docs = {{0, {0, 0, 1}}, {1, {2, 2, 1}}};
  const HdpHyper h;
  std::map<std::vector<std::uint32_t>, double> exact, emp;
  for (const auto& l : oracle::enumerate_posterior(c, h, 2)) exact[oracle::canonical_labels(l.z)] += l.prob;
  SamplerOptions o;
  o.K0 = 2;
  o.seed = 6;
  o.split_merge = false;
  o.fixed_k = true;
  auto s = init_state(c, h, 2, o.seed);
  const int burn = 1000, sweeps = 50000;
  for (int it = 0; it < burn + sweeps; ++it) {
    sampler_iteration(s, h, o, it);
    if (it >= burn) emp[oracle::canonical_labels(s.z)] += 1.0 / sweeps;
  }
  double tv = 0.0;
  for (const auto& [k, p] : exact) tv += std::abs(p - emp[k]);
  for (const auto& [k, p] : emp)
    if (!exact.count(k)) tv += p;
  tv /= 2;
  return {tv < 0.05, fmt("gamma=%.3g alpha=%.3g, %zu partitions, TV %.4f over %d sweeps", h.gamma, h.alpha,
                         exact.size(), tv, sweeps)};
}

// 7. Table-count sampler against the Stirling-number distribution.
Outcome table_counts() {
  Rng rng(7);
  double worst_p = 0.0, worst_mean = 0.0;
  const int draws = 200000;
  for (double a : {0.1, 1.0, 10.0})
    for (int n = 1; n <= 6; ++n) {
      const auto p = oracle::table_count_pmf(a, n);
      std::vector<double> hist(n + 1, 0.0);
      for (int i = 0; i < draws; ++i) hist[crp_table_count(a, n, rng)] += 1.0 / draws;
      double mean_exact = 0.0, mean_emp = 0.0;
      for (int m = 0; m <= n; ++m) {
        worst_p = std::max(worst_p, std::abs(hist[m] - p[m]));
        mean_exact += m * p[m];
        mean_emp += m * hist[m];
      }
      worst_mean = std::max(worst_mean, std::abs(mean_emp - mean_exact) / mean_exact);
    }
  return {worst_p < 0.01 && worst_mean < 0.01,
          fmt("max |p_emp - p_exact| %.4f, max relative mean error %.4f", worst_p, worst_mean)};
}

HdpRun fit_planted(const Corpus& obs, std::size_t K0, std::uint64_t seed, std::size_t iters,
                   std::vector<HdpSnapshot>& snaps) {
  SamplerOptions o;
  o.iterations = iters;
  o.K0 = K0;
  o.seed = seed;
  return run_sampler(obs, {}, o, [&](const HdpState& s, IterationDiagnostics& d) {
    if (d.iteration + 100 >= iters && (iters - 1 - d.iteration) % 10 == 0) snaps.push_back(take_snapshot(s, d.iteration));
  });
}

// 8. Split-merge recovers the planted topic count from a single topic.
Outcome split_merge_recovery() {
  int good = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto truth = make_planted_truth({}, 800 + seed);
    const auto corpus = sample_corpus(truth, 900 + seed);
    const auto split = heldout_split(corpus, 0.2, seed);
    std::vector<HdpSnapshot> s1, s10;
    const auto run1 = fit_planted(split.obs, 1, seed, 500, s1);
    const auto run10 = fit_planted(split.obs, truth.k_true, seed, 500, s10);
    const PredictiveOptions po{50, 20, seed, 1};
    const double ll1 = hdp_predictive(s1, {}, split, po).avg_log_pred;
    const double ll10 = hdp_predictive(s10, {}, split, po).avg_log_pred;
    const std::size_t K = run1.state.num_topics();
    const double rel = std::abs(ll1 - ll10) / std::abs(ll10);
    const bool ok = K >= 8 && K <= 13 && rel <= 0.05;
    good += ok;
    detail += fmt("%s[K=%zu ll=%.3f vs %.3f]", detail.empty() ? "" : " ", K, ll1, ll10);
  }
  return {good >= 4, fmt("%d/5 seeds ok ", good) + detail};
}

// 9. The hierarchy beats independent per-document Dirichlet-Categoricals.
Outcome hierarchy_advantage() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PlantedCorpusConfig pc;
    pc.min_size = 2;
    pc.size_exponent = 1.2;
    const auto truth = make_planted_truth(pc, 1800 + seed);
    const auto corpus = sample_corpus(truth, 1900 + seed);
    std::size_t small = 0;
    for (const auto& d : corpus.docs) small += d.words.size() < 5;
    const auto split = heldout_split(corpus, 0.5, seed);
    std::vector<HdpSnapshot> snaps;
    fit_planted(split.obs, 1, seed, 300, snaps);
    const double hdp = hdp_predictive(snaps, {}, split, {50, 20, seed, 1}).avg_log_pred;
    const double base = baseline_predictive(split, HdpHyper{}.lambda).avg_log_pred;
    wins += hdp > base;
    detail += fmt("%s[%zu/200 short docs: hdp %.3f base %.3f]", detail.empty() ? "" : " ", small, hdp, base);
  }
  return {wins == 5, fmt("%d/5 seeds ", wins) + detail};
}

// 10. Every pipeline stage is byte-for-byte reproducible.
Outcome determinism() {
  const auto root = fs::temp_directory_path() / "roadtopics_acceptance_determinism";
  fs::remove_all(root);
  std::vector<fs::path> dirs{root / "a", root / "b"};
  for (const auto& dir : dirs) {
    PipelineConfig c;
    c.out = dir;
    c.train_trips = 150;
    c.held_out_trips = 20;
    c.hdp_iters = 100;
    for (const auto& stage : stage_names()) run_stage(stage, c);
  }
  std::size_t files = 0, differ = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    ++files;
    const auto other = dirs[1] / entry.path().filename();
    differ += !fs::exists(other) || file_hash(entry.path()) != file_hash(other);
  }
  return {differ == 0 && files > 20, fmt("%zu artifacts compared, %zu differ", files, differ)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "EM monotonicity", 60, em_monotonicity},
      {2, "Viterbi exactness", 30, viterbi_exactness},
      {3, "Absorption correctness", 60, absorption_correctness},
      {4, "Route optimality", 30, route_optimality},
      {5, "Augmented-model advantage", 180, augmented_advantage},
      {6, "Restricted-Gibbs correctness", 120, restricted_gibbs},
      {7, "Table-count sampler", 60, table_counts},
      {8, "Split-merge recovery", 600, split_merge_recovery},
      {9, "Hierarchy advantage", 600, hierarchy_advantage},
      {10, "Determinism", 300, determinism},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s criterion %d (%s): %s; %.1f s of %.0f s budget%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, c.budget_s, in_time ? "" : " (over budget)");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
