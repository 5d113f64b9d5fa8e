#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "roadtopics/corpus.hpp"
#include "roadtopics/hdp.hpp"

namespace roadtopics {

/// Per-document partition of a corpus into observed and held-out words.
/// Document d of `obs` and of `ho` together hold exactly the words of the
/// original document d.
struct HeldoutSplit {
  Corpus obs;
  Corpus ho;
  double ratio = 0.5;
  std::uint64_t seed = 0;
};

/// Holds out floor(ratio * N) words of each document, drawn uniformly
/// without replacement and clamped to [1, N - 1]; documents with fewer than
/// two words stay entirely observed.
HeldoutSplit heldout_split(const Corpus& corpus, double ratio, std::uint64_t seed);

struct DocScore {
  std::size_t doc = 0;
  std::size_t n_obs = 0;
  std::size_t n_ho = 0;
  double sum_log_pred = 0.0;

  double avg() const { return n_ho ? sum_log_pred / static_cast<double>(n_ho) : 0.0; }
};

struct PredictiveScore {
  double avg_log_pred = 0.0;  // mean over all held-out words
  std::size_t n_words = 0;
  std::vector<DocScore> per_doc;
};

struct PredictiveOptions {
  std::size_t burn_in = 50;
  std::size_t samples = 20;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

/// For each snapshot, freezes beta and theta, samples the document's (z, pi)
/// given its observed words and averages the Rao-Blackwellised predictive
///   p(w) = sum_k (alpha beta_k + n_k) / (alpha + N) theta_k(w)
///          + alpha beta_rest / (alpha + N) / V
/// over the post-burn-in sweeps. Probabilities are averaged across
/// snapshots before taking the log.
PredictiveScore hdp_predictive(std::span<const HdpSnapshot> snapshots, const HdpHyper& hyper,
                               const HeldoutSplit& split, const PredictiveOptions& options = {});

/// Independent Dirichlet-Categorical model per document:
/// p(w) = (count_obs(w) + prior) / (N_obs + V prior).
PredictiveScore baseline_predictive(const HeldoutSplit& split, double prior);

struct SignalMarginals {
  std::vector<double> velocity;
  std::vector<double> time;
  std::size_t velocity_ml = 0;  // argmax bin, lowest on ties
  std::size_t time_ml = 0;
};

/// p_j(w) = sum_k pi_jk theta_k(w) + pi_j,rest / V.
std::vector<double> doc_word_distribution(const HdpState& state, std::size_t doc);

/// Sums a distribution over flat words (v_bin * t_count + t_bin) into
/// per-signal marginals.
SignalMarginals marginals_from_distribution(std::span<const double> p, std::size_t v_count, std::size_t t_count);

SignalMarginals ml_marginals(const HdpState& state, std::size_t doc, std::size_t v_count, std::size_t t_count);

/// Normalised per-signal histograms of a non-empty document.
SignalMarginals empirical_marginals(const Corpus& corpus, std::size_t doc, std::size_t v_count,
                                    std::size_t t_count);

struct TopicWord {
  WordIndex flat = 0;
  std::size_t v_bin = 0;
  std::size_t t_bin = 0;
  double prob = 0.0;
};

struct TopicSummary {
  std::size_t topic = 0;
  double weight = 0.0;  // beta_k
  std::vector<TopicWord> top;
};

/// Topics by decreasing global weight, each with its `top` most likely words.
std::vector<TopicSummary> topic_report(const HdpState& state, std::size_t t_count, std::size_t top = 10);

}  // namespace roadtopics
