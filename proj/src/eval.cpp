#include "roadtopics/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "roadtopics/parallel.hpp"

namespace roadtopics {

namespace {

std::size_t argmax_lowest(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

PredictiveScore finish(std::vector<DocScore> docs) {
  PredictiveScore s;
  double total = 0.0;
  for (const auto& d : docs) {
    total += d.sum_log_pred;
    s.n_words += d.n_ho;
  }
  s.avg_log_pred = s.n_words ? total / static_cast<double>(s.n_words) : 0.0;
  s.per_doc = std::move(docs);
  return s;
}

}  // namespace

HeldoutSplit heldout_split(const Corpus& corpus, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("heldout_split: ratio must be in (0, 1)");
  HeldoutSplit split;
  split.ratio = ratio;
  split.seed = seed;
  split.obs.vocab_size = split.ho.vocab_size = corpus.vocab_size;
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    const auto& doc = corpus.docs[d];
    Document obs{doc.road, {}}, ho{doc.road, {}};
    const std::size_t N = doc.words.size();
    if (N < 2) {
      obs.words = doc.words;
    } else {
      auto n_ho = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(N)));
      n_ho = std::clamp<std::size_t>(n_ho, 1, N - 1);
      std::vector<std::size_t> order(N);
      std::iota(order.begin(), order.end(), 0);
      Rng rng = Rng::stream(seed, d);
      for (std::size_t i = N; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      std::vector<bool> held(N, false);
      for (std::size_t i = 0; i < n_ho; ++i) held[order[i]] = true;
      for (std::size_t i = 0; i < N; ++i) (held[i] ? ho : obs).words.push_back(doc.words[i]);
    }
    split.obs.docs.push_back(std::move(obs));
    split.ho.docs.push_back(std::move(ho));
  }
  return split;
}

PredictiveScore hdp_predictive(std::span<const HdpSnapshot> snapshots, const HdpHyper& hyper,
                               const HeldoutSplit& split, const PredictiveOptions& options) {
  if (snapshots.empty()) throw std::invalid_argument("hdp_predictive: no snapshots");
  if (options.samples == 0) throw std::invalid_argument("hdp_predictive: samples must be >= 1");
  const std::size_t V = split.obs.vocab_size;
  for (const auto& s : snapshots) {
    if (s.beta.size() != s.theta.size() + 1) throw std::invalid_argument("hdp_predictive: malformed snapshot");
    for (const auto& t : s.theta)
      if (t.size() != V)
        throw std::invalid_argument("hdp_predictive: snapshot vocabulary " + std::to_string(t.size()) +
                                    " differs from corpus vocabulary " + std::to_string(V));
  }
  const std::size_t D = split.obs.docs.size();
  const double alpha = hyper.alpha;
  std::vector<DocScore> docs(D);
  parallel_for(D, options.threads, [&](std::size_t j) {
    const auto& obs = split.obs.docs[j].words;
    const auto& ho = split.ho.docs[j].words;
    docs[j] = {j, obs.size(), ho.size(), 0.0};
    if (ho.empty()) return;
    std::vector<double> prob(ho.size(), 0.0);
    for (std::size_t si = 0; si < snapshots.size(); ++si) {
      const auto& snap = snapshots[si];
      const std::size_t K = snap.theta.size();
      Rng rng = Rng::stream(options.seed, si, j);
      std::vector<double> base(K + 1);
      for (std::size_t k = 0; k <= K; ++k) base[k] = alpha * snap.beta[k];
      std::vector<double> pi = rng.dirichlet(base);
      std::vector<std::uint32_t> z(obs.size(), 0);
      std::vector<double> counts(K, 0.0), w(K), params(K + 1);
      std::vector<double> acc(ho.size(), 0.0);
      const double N = static_cast<double>(obs.size());
      for (std::size_t sweep = 0; sweep < options.burn_in + options.samples; ++sweep) {
        std::fill(counts.begin(), counts.end(), 0.0);
        if (K > 0) {
          for (std::size_t i = 0; i < obs.size(); ++i) {
            double total = 0.0;
            for (std::size_t k = 0; k < K; ++k) total += w[k] = pi[k] * snap.theta[k][obs[i]];
            if (total > 0.0) {
              z[i] = static_cast<std::uint32_t>(rng.categorical(w));
            } else {
              for (std::size_t k = 0; k < K; ++k) w[k] = std::log(pi[k]) + std::log(snap.theta[k][obs[i]]);
              z[i] = static_cast<std::uint32_t>(rng.categorical_log(w));
            }
            counts[z[i]] += 1.0;
          }
        }
        for (std::size_t k = 0; k < K; ++k) params[k] = base[k] + counts[k];
        params[K] = base[K];
        rng.dirichlet(params, pi);
        if (sweep < options.burn_in) continue;
        for (std::size_t i = 0; i < ho.size(); ++i) {
          double p = base[K] / static_cast<double>(V);
          for (std::size_t k = 0; k < K; ++k) p += (base[k] + counts[k]) * snap.theta[k][ho[i]];
          acc[i] += p / (alpha + N);
        }
      }
      for (std::size_t i = 0; i < ho.size(); ++i) prob[i] += acc[i] / static_cast<double>(options.samples);
    }
    for (std::size_t i = 0; i < ho.size(); ++i)
      docs[j].sum_log_pred += std::log(prob[i] / static_cast<double>(snapshots.size()));
  });
  return finish(std::move(docs));
}

PredictiveScore baseline_predictive(const HeldoutSplit& split, double prior) {
  if (!(prior > 0.0)) throw std::invalid_argument("baseline_predictive: prior must be > 0");
  const std::size_t V = split.obs.vocab_size;
  std::vector<DocScore> docs;
  for (std::size_t j = 0; j < split.obs.docs.size(); ++j) {
    const auto counts = split.obs.counts(j);
    const auto& ho = split.ho.docs[j].words;
    DocScore d{j, split.obs.docs[j].words.size(), ho.size(), 0.0};
    const double denom = static_cast<double>(d.n_obs) + static_cast<double>(V) * prior;
    for (auto w : ho) d.sum_log_pred += std::log((static_cast<double>(counts[w]) + prior) / denom);
    docs.push_back(d);
  }
  return finish(std::move(docs));
}

std::vector<double> doc_word_distribution(const HdpState& state, std::size_t doc) {
  if (doc >= state.num_docs()) throw std::out_of_range("document index out of range");
  const std::size_t K = state.num_topics();
  const std::size_t V = state.vocab_size;
  std::vector<double> p(V, state.pi[doc][K] / static_cast<double>(V));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t w = 0; w < V; ++w) p[w] += state.pi[doc][k] * state.theta[k][w];
  return p;
}

SignalMarginals marginals_from_distribution(std::span<const double> p, std::size_t v_count, std::size_t t_count) {
  if (p.size() != v_count * t_count) throw std::invalid_argument("distribution size differs from V_count * T_count");
  SignalMarginals m;
  m.velocity.assign(v_count, 0.0);
  m.time.assign(t_count, 0.0);
  for (std::size_t v = 0; v < v_count; ++v)
    for (std::size_t t = 0; t < t_count; ++t) {
      m.velocity[v] += p[v * t_count + t];
      m.time[t] += p[v * t_count + t];
    }
  m.velocity_ml = argmax_lowest(m.velocity);
  m.time_ml = argmax_lowest(m.time);
  return m;
}

SignalMarginals ml_marginals(const HdpState& state, std::size_t doc, std::size_t v_count, std::size_t t_count) {
  return marginals_from_distribution(doc_word_distribution(state, doc), v_count, t_count);
}

SignalMarginals empirical_marginals(const Corpus& corpus, std::size_t doc, std::size_t v_count,
                                    std::size_t t_count) {
  if (doc >= corpus.docs.size()) throw std::out_of_range("document index out of range");
  const auto& words = corpus.docs[doc].words;
  if (words.empty()) throw std::invalid_argument("empirical_marginals: empty document");
  std::vector<double> p(v_count * t_count, 0.0);
  for (auto w : words) {
    if (w >= p.size()) throw std::invalid_argument("word outside vocabulary");
    p[w] += 1.0 / static_cast<double>(words.size());
  }
  return marginals_from_distribution(p, v_count, t_count);
}

std::vector<TopicSummary> topic_report(const HdpState& state, std::size_t t_count, std::size_t top) {
  std::vector<TopicSummary> out;
  for (std::size_t k = 0; k < state.num_topics(); ++k) {
    TopicSummary s{k, state.beta[k], {}};
    std::vector<WordIndex> order(state.vocab_size);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](WordIndex a, WordIndex b) { return state.theta[k][a] > state.theta[k][b]; });
    for (std::size_t i = 0; i < std::min(top, order.size()); ++i)
      s.top.push_back({order[i], order[i] / t_count, order[i] % t_count, state.theta[k][order[i]]});
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.weight > b.weight; });
  return out;
}

}  // namespace roadtopics
