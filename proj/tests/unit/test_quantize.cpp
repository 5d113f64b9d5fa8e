#include <gtest/gtest.h>

#include <cmath>

#include "roadtopics/quantize.hpp"
#include "roadtopics/random.hpp"

using namespace roadtopics;

namespace {
Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}
}  // namespace

TEST(DpMeans, TwoSeparatedPoints) {
  const auto cb = dp_means(column({0.0, 10.0}), 3.0);
  ASSERT_EQ(cb.size(), 2u);
  std::vector<double> c{cb.centers(0, 0), cb.centers(1, 0)};
  std::sort(c.begin(), c.end());
  EXPECT_DOUBLE_EQ(c[0], 0.0);
  EXPECT_DOUBLE_EQ(c[1], 10.0);
}

TEST(DpMeans, HugePenaltyGivesMean) {
  const auto cb = dp_means(column({1.0, 2.0, 6.0}), 1e9);
  ASSERT_EQ(cb.size(), 1u);
  EXPECT_DOUBLE_EQ(cb.centers(0, 0), 3.0);
}

TEST(DpMeans, SinglePoint) {
  Eigen::MatrixXd p(1, 2);
  p << 4.0, -2.0;
  const auto cb = dp_means(p, 1.0);
  ASSERT_EQ(cb.size(), 1u);
  EXPECT_EQ(cb.centers.row(0), p.row(0));
}

TEST(DpMeans, ObjectiveNeverIncreases) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd p(200, 2);
    for (int i = 0; i < 200; ++i) p.row(i) << rng.normal(0, 5) + 20 * (i % 4), rng.normal(0, 5);
    const auto fit = dp_means_fit(p, 6.0);
    for (std::size_t s = 1; s < fit.objective.size(); ++s)
      EXPECT_LE(fit.objective[s], fit.objective[s - 1] * (1 + 1e-12) + 1e-9) << "sweep " << s;
    EXPECT_TRUE(fit.converged);
  }
}

TEST(DpMeans, CircularWrapJoinsMidnight) {
  Metric m{{0}, 24.0};
  const auto cb = dp_means(column({23.9, 0.1}), 1.0, 100, m);
  ASSERT_EQ(cb.size(), 1u);
  const double c = cb.centers(0, 0);
  EXPECT_LT(std::min(c, 24.0 - c), 1e-9);
}

TEST(Codebook, AssignExactAndTies) {
  Codebook cb;
  cb.centers = column({0.0, 2.0, 5.0});
  EXPECT_EQ(cb.assign(5.0), 2u);
  EXPECT_EQ(cb.assign(1.0), 0u);
  const std::vector<double> wrong{1.0, 2.0};
  EXPECT_THROW(cb.assign(std::span<const double>(wrong)), std::invalid_argument);
}

TEST(Codebook, AssignMatchesLinearScan) {
  Rng rng(5);
  Codebook cb;
  cb.centers = Eigen::MatrixXd(12, 3);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 3; ++j) cb.centers(i, j) = rng.normal();
  for (int t = 0; t < 500; ++t) {
    std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
    std::size_t best = 0;
    double bd = INFINITY;
    for (int i = 0; i < 12; ++i) {
      double d = 0;
      for (int j = 0; j < 3; ++j) d += (x[j] - cb.centers(i, j)) * (x[j] - cb.centers(i, j));
      if (d < bd) bd = d, best = i;
    }
    EXPECT_EQ(cb.assign(std::span<const double>(x)), best);
  }
}

TEST(CircularMean, WrapsAroundPeriod) {
  const std::vector<double> v{23.0, 1.0};
  const double m = circular_mean(v, 24.0);
  EXPECT_LT(std::min(m, 24.0 - m), 1e-9);
  EXPECT_NEAR(circular_diff(0.5, 23.5, 24.0), 1.0, 1e-12);
}

TEST(Vocabulary, ConstantVelocityGivesOneBin) {
  const std::vector<double> v(50, 0.0);
  const auto vocab = build_vocab(v, std::vector<double>(50, 8.0));
  EXPECT_EQ(vocab.v_count(), 1u);
  EXPECT_EQ(vocab.size(), vocab.t_count());
}

TEST(Vocabulary, MidnightTimesShareABin) {
  const std::vector<double> v{1.0, 1.0}, t{23.9, 0.1};
  EXPECT_EQ(build_vocab(v, t, 2.0, 1.0).t_count(), 1u);
}

TEST(Vocabulary, FlatIndexArithmetic) {
  Vocabulary vocab;
  vocab.velocity.centers = column({1.0, 5.0, 10.0});
  vocab.time.centers = column({2.0, 8.0, 14.0, 20.0});
  vocab.time.metric = {{0}, 24.0};
  EXPECT_EQ(vocab.size(), 12u);
  EXPECT_EQ(vocab.from_bins(0, 0).flat, 0u);
  EXPECT_EQ(vocab.from_bins(2, 1).flat, 9u);
  for (WordIndex w = 0; w < vocab.size(); ++w) {
    const auto id = vocab.decode(w);
    EXPECT_EQ(vocab.from_bins(id.v_bin, id.t_bin).flat, w);
  }
  EXPECT_EQ(vocab.encode(9.0, 21.5).flat, 2u * 4 + 3);
  EXPECT_EQ(vocab.encode(9.0, 23.5).flat, 2u * 4 + 0);  // 2.5 h across midnight vs 3.5 h
}

TEST(Vocabulary, BinsIncreaseWithCenter) {
  Rng rng(2);
  std::vector<double> v, t;
  for (int i = 0; i < 300; ++i) {
    v.push_back(std::abs(rng.normal(5.0 * (i % 3), 0.3)));
    t.push_back(std::fmod(24.0 + rng.normal(6.0 * (i % 4), 0.3), 24.0));
  }
  const auto vocab = build_vocab(v, t);
  for (std::size_t k = 1; k < vocab.v_count(); ++k)
    EXPECT_LT(vocab.velocity.centers(k - 1, 0), vocab.velocity.centers(k, 0));
  const auto p = std::filesystem::temp_directory_path() / "roadtopics_cb.json";
  save_codebook(p, vocab.time);
  const auto back = load_codebook(p);
  EXPECT_EQ(back.centers, vocab.time.centers);
  EXPECT_TRUE(back.metric.is_circular(0));
}
