#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "oracles.hpp"
#include "roadtopics/hdp.hpp"

using namespace roadtopics;

namespace {

Corpus tiny_corpus() {
  Corpus c;
  c.vocab_size = 3;
  c.docs = {{0, {0, 0, 1}}, {1, {2, 2, 1}}};
  return c;
}

Corpus two_topic_corpus(std::size_t docs, std::size_t words, std::uint64_t seed) {
  SyntheticCorpusTruth t;
  t.k_true = 2;
  t.topics = {{0.25, 0.25, 0.25, 0.25, 0, 0, 0, 0}, {0, 0, 0, 0, 0.25, 0.25, 0.25, 0.25}};
  for (std::size_t d = 0; d < docs; ++d) {
    t.doc_mixtures.push_back(d % 2 ? std::vector<double>{0, 1} : std::vector<double>{1, 0});
    t.doc_sizes.push_back(words);
  }
  return sample_corpus(t, seed);
}

void expect_same_state(const HdpState& a, const HdpState& b) {
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.zbar, b.zbar);
  EXPECT_EQ(a.beta, b.beta);
  EXPECT_EQ(a.pi, b.pi);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.m, b.m);
  EXPECT_EQ(a.beta_bar, b.beta_bar);
  EXPECT_EQ(a.sub_age, b.sub_age);
  EXPECT_EQ(a.m_bar, b.m_bar);
}

}  // namespace

TEST(TableCount, SingleCustomerOneTable) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(crp_table_count(0.3, 1, rng), 1);
  EXPECT_EQ(crp_table_count(0.3, 0, rng), 0);
}

TEST(TableCount, TwoCustomersUnitConcentration) {
  const auto p = oracle::table_count_pmf(1.0, 2);
  EXPECT_NEAR(p[1], 0.5, 1e-12);
  EXPECT_NEAR(p[2], 0.5, 1e-12);
  Rng rng(2);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += crp_table_count(1.0, 2, rng) == 1;
  EXPECT_NEAR(ones / double(n), 0.5, 0.01);
}

TEST(TableCount, MeanMatchesStirlingPmf) {
  Rng rng(3);
  for (double a : {0.1, 1.0, 10.0})
    for (int n = 1; n <= 6; ++n) {
      const auto p = oracle::table_count_pmf(a, n);
      EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
      double exact = 0.0;
      for (int m = 0; m <= n; ++m) exact += m * p[m];
      double emp = 0.0;
      const int draws = 100000;
      for (int i = 0; i < draws; ++i) emp += static_cast<double>(crp_table_count(a, n, rng));
      EXPECT_NEAR(emp / draws, exact, 0.01 * exact) << "a=" << a << " n=" << n;
    }
}

TEST(InitState, SingleTopic) {
  const auto c = tiny_corpus();
  const auto s = init_state(c, {}, 1, 5);
  ASSERT_EQ(s.num_topics(), 1u);
  for (std::size_t j = 0; j < c.docs.size(); ++j) {
    for (auto z : s.z[j]) EXPECT_EQ(z, 0u);
    EXPECT_EQ(s.n[j][0], static_cast<std::int64_t>(c.docs[j].words.size()));
  }
  s.audit();
}

TEST(InitState, SeedsDifferButAuditPasses) {
  const auto c = two_topic_corpus(10, 20, 1);
  const auto a = init_state(c, {}, 4, 1), b = init_state(c, {}, 4, 2);
  EXPECT_NE(a.z, b.z);
  a.audit();
  b.audit();
  HdpState copy = a;
  copy.recount();
  EXPECT_EQ(copy.n, a.n);
  EXPECT_EQ(copy.topic_words, a.topic_words);
  EXPECT_THROW(init_state(Corpus{3, {}}, {}, 1, 1), std::invalid_argument);
}

TEST(SampleBeta, DirichletMoment) {
  Corpus c;
  c.vocab_size = 2;
  c.docs = {{0, {0, 1, 0, 1, 0, 1}}};
  auto s = init_state(c, {}, 1, 1);
  s.m[0][0] = 5;
  HdpHyper h;
  double mean = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    sample_beta(s, h, 7, i);
    EXPECT_NEAR(s.beta[0] + s.beta[1], 1.0, 1e-12);
    mean += s.beta[0] / n;
  }
  EXPECT_NEAR(mean, 1.0 / 3.0, 0.01);
  h.gamma = 1e6;
  s.m[0][0] = 1;
  double rest = 0.0;
  for (int i = 0; i < 1000; ++i) {
    sample_beta(s, h, 8, i);
    rest += s.beta[1] / 1000;
  }
  EXPECT_GT(rest, 0.99);
}

TEST(SamplePi, PriorAndPosteriorMeans) {
  Corpus c;
  c.vocab_size = 2;
  c.docs = {{0, {}}, {1, std::vector<WordIndex>(500, 0)}};
  auto s = init_state(c, {}, 1, 1);
  s.beta = {0.3, 0.7};
  HdpHyper h;
  h.alpha = 1.0;
  std::vector<double> empty_mean(2, 0.0);
  double full_mean = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    sample_pi(s, h, 3, i);
    EXPECT_NEAR(s.pi[0][0] + s.pi[0][1], 1.0, 1e-12);
    empty_mean[0] += s.pi[0][0] / n;
    full_mean += s.pi[1][0] / n;
  }
  EXPECT_NEAR(empty_mean[0], 0.3, 0.01);
  EXPECT_NEAR(full_mean, 500.3 / 501.0, 0.002);
}

TEST(SampleTheta, PosteriorMean) {
  Corpus c;
  c.vocab_size = 4;
  c.docs = {{0, std::vector<WordIndex>(1000, 0)}};
  auto s = init_state(c, {}, 1, 1);
  HdpHyper h;
  h.lambda = 1.0;
  double mean = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    sample_theta(s, h, 4, i);
    EXPECT_NEAR(std::accumulate(s.theta[0].begin(), s.theta[0].end(), 0.0), 1.0, 1e-12);
    mean += s.theta[0][0] / n;
  }
  EXPECT_NEAR(mean, 1001.0 / 1004.0, 1e-4);
}

TEST(SampleZ, SingleTopicIsUnchanged) {
  auto s = init_state(tiny_corpus(), {}, 1, 1);
  const auto before = s.z;
  sample_z(s, 1, 1);
  EXPECT_EQ(s.z, before);
}

TEST(SampleZ, DegenerateWeightsPickTopicZero) {
  auto s = init_state(two_topic_corpus(4, 10, 2), {}, 2, 1);
  for (auto& p : s.pi) p = {1.0, 0.0, 0.0};
  for (auto& t : s.theta) std::fill(t.begin(), t.end(), 1.0 / 8);
  sample_z(s, 2, 1);
  for (const auto& doc : s.z)
    for (auto z : doc) EXPECT_EQ(z, 0u);
  EXPECT_EQ(remove_empty_topics(s), 1u);
  EXPECT_EQ(s.num_topics(), 1u);
  s.audit();
}

TEST(SampleZ, FixedKNeverEmptiesATopic) {
  auto s = init_state(tiny_corpus(), {}, 2, 1);
  for (auto& p : s.pi) p = {1.0, 1e-300, 0.0};
  sample_z(s, 2, 1, 1, true);
  EXPECT_EQ(s.num_topics(), 2u);
  EXPECT_GT(s.topic_size(1), 0);
}

TEST(SplitRatio, HandComputedValue) {
  HdpHyper h{2.0, 0.5, 0.5};
  const std::vector<std::int64_t> nl{2, 0}, nr{1, 1}, cl{2, 0}, cr{0, 2};
  const double bk = 0.4, u = 0.3;
  auto lg = [](double x) { return std::lgamma(x); };
  const double a = h.alpha * bk;
  double expect = std::log(2.0) - std::log(u) - std::log(1 - u);
  expect += lg(a * u + 2) - lg(a * u) + lg(a * (1 - u) + 1) - lg(a * (1 - u)) - lg(a + 3) + lg(a);
  expect += lg(a * u + 0) - lg(a * u) + lg(a * (1 - u) + 1) - lg(a * (1 - u)) - lg(a + 1) + lg(a);
  auto dm = [&](std::vector<double> c) {
    double r = lg(2 * h.lambda) - lg(2 * h.lambda + c[0] + c[1]);
    for (double x : c) r += lg(h.lambda + x) - lg(h.lambda);
    return r;
  };
  expect += dm({2, 0}) + dm({0, 2}) - dm({2, 2});
  EXPECT_NEAR(split_log_ratio(h, bk, u, nl, nr, cl, cr), expect, 1e-12);
}

TEST(SplitMerge, DisjointTopicsRarelyMerge) {
  const auto c = two_topic_corpus(20, 30, 3);
  SamplerOptions o;
  o.iterations = 30;
  o.K0 = 2;
  o.seed = 4;
  o.split_merge = false;
  o.fixed_k = true;
  auto run = run_sampler(c, {}, o);
  ASSERT_EQ(run.state.num_topics(), 2u);
  int accepted = 0;
  for (int i = 0; i < 500; ++i) {
    HdpState copy = run.state;
    Rng rng(1000 + i);
    accepted += propose_merge(copy, 0, 1, {}, rng);
  }
  EXPECT_LT(accepted, 25);
}

TEST(SplitMerge, RecoversTwoTopicsFromOne) {
  const auto c = two_topic_corpus(30, 30, 5);
  SamplerOptions o;
  o.iterations = 100;
  o.K0 = 1;
  o.seed = 6;
  const auto run = run_sampler(c, {}, o);
  EXPECT_EQ(run.state.num_topics(), 2u);
  run.state.audit();
  std::size_t splits = 0;
  for (const auto& d : run.diagnostics) splits += d.accepted_splits;
  EXPECT_GE(splits, 1u);
}

TEST(SplitMerge, AcceptedMovesKeepStateConsistent) {
  const auto c = two_topic_corpus(20, 15, 7);
  auto s = init_state(c, {}, 1, 8);
  HdpHyper h;
  for (int it = 0; it < 20; ++it) {
    SamplerOptions o;
    o.seed = 9;
    sampler_iteration(s, h, o, it);
    s.audit();
  }
}

TEST(RestrictedGibbs, MatchesEnumeration) {
  const auto c = tiny_corpus();
  const HdpHyper h{1.0, 1.0, 0.5};
  const auto post = oracle::enumerate_posterior(c, h, 2);
  std::map<std::vector<std::uint32_t>, double> exact, emp;
  for (const auto& l : post) exact[oracle::canonical_labels(l.z)] += l.prob;
  SamplerOptions o;
  o.K0 = 2;
  o.seed = 11;
  o.split_merge = false;
  o.fixed_k = true;
  auto s = init_state(c, h, 2, o.seed);
  const int burn = 500, sweeps = 20000;
  for (int it = 0; it < burn + sweeps; ++it) {
    sampler_iteration(s, h, o, it);
    if (it >= burn) emp[oracle::canonical_labels(s.z)] += 1.0 / sweeps;
  }
  double tv = 0.0;
  for (const auto& [k, p] : exact) tv += std::abs(p - emp[k]);
  for (const auto& [k, p] : emp)
    if (!exact.count(k)) tv += p;
  EXPECT_LT(tv / 2, 0.05);
}

TEST(Sampler, ThreadCountDoesNotChangeResults) {
  const auto c = two_topic_corpus(12, 20, 12);
  SamplerOptions o;
  o.iterations = 15;
  o.seed = 13;
  const auto a = run_sampler(c, {}, o);
  o.threads = 3;
  const auto b = run_sampler(c, {}, o);
  expect_same_state(a.state, b.state);
}

TEST(Sampler, CheckpointResumeIsExact) {
  const auto c = two_topic_corpus(12, 20, 14);
  SamplerOptions o;
  o.iterations = 20;
  o.seed = 15;
  const auto full = run_sampler(c, {}, o);
  o.iterations = 10;
  const auto half = run_sampler(c, {}, o);
  const auto stem = std::filesystem::temp_directory_path() / "roadtopics_ckpt";
  save_checkpoint(stem, half.state, {}, 10);
  auto ck = load_checkpoint(stem);
  EXPECT_EQ(ck.next_iteration, 10u);
  o.iterations = 20;
  const auto resumed = resume_sampler(std::move(ck.state), ck.hyper, o, ck.next_iteration);
  expect_same_state(full.state, resumed.state);
}

TEST(Snapshots, RoundTrip) {
  auto s = init_state(tiny_corpus(), {}, 2, 1);
  std::vector<HdpSnapshot> snaps{take_snapshot(s, 3), take_snapshot(s, 4)};
  const auto p = std::filesystem::temp_directory_path() / "roadtopics_snaps.json";
  save_snapshots(p, HdpHyper{3.0, 0.2, 0.7}, snaps);
  HdpHyper h;
  const auto back = load_snapshots(p, &h);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].iteration, 4u);
  EXPECT_EQ(back[0].theta, snaps[0].theta);
  EXPECT_EQ(h.gamma, 3.0);
}

TEST(HdpHyper, Validation) {
  EXPECT_THROW((HdpHyper{0.0, 0.1, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((HdpHyper{1.0, -1, 0.5}.validate()), std::invalid_argument);
}
