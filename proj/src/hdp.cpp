#include "roadtopics/hdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "roadtopics/parallel.hpp"

namespace roadtopics {

namespace {

enum Phase : std::uint64_t { kInit = 1, kTheta, kZ, kZbar, kM, kBeta, kPi, kSplit, kMerge, kFresh };

Rng stream(std::uint64_t seed, std::uint64_t tick, Phase phase, std::uint64_t key) {
  return Rng::stream(seed, tick, phase, key);
}

// Deals the words of topic k to sub-clusters at random until both sides
// are occupied (when the topic has at least two words).
void redeal_zbar(HdpState& s, std::size_t k, Rng& rng) {
  const std::int64_t size = s.topic_size(k);
  for (;;) {
    std::int64_t left = 0;
    for (std::size_t j = 0; j < s.num_docs(); ++j)
      for (std::size_t i = 0; i < s.z[j].size(); ++i)
        if (s.z[j][i] == k) {
          s.zbar[j][i] = static_cast<std::uint8_t>(rng.below(2));
          left += s.zbar[j][i] == 0;
        }
    if (size < 2 || (left > 0 && left < size)) break;
  }
  s.sub_age[k] = 0;
}

void erase_topic(HdpState& s, std::size_t k) {
  s.beta.erase(s.beta.begin() + k);
  s.theta.erase(s.theta.begin() + k);
  s.beta_bar.erase(s.beta_bar.begin() + k);
  s.sub_age.erase(s.sub_age.begin() + k);
  s.theta_bar.erase(s.theta_bar.begin() + k);
  s.topic_words.erase(s.topic_words.begin() + k);
  s.sub_topic_words.erase(s.sub_topic_words.begin() + k);
  for (std::size_t j = 0; j < s.num_docs(); ++j) {
    s.pi[j].erase(s.pi[j].begin() + k);
    s.m[j].erase(s.m[j].begin() + k);
    s.pi_bar[j].erase(s.pi_bar[j].begin() + k);
    s.m_bar[j].erase(s.m_bar[j].begin() + k);
    s.n[j].erase(s.n[j].begin() + k);
    s.n_bar[j].erase(s.n_bar[j].begin() + k);
    for (auto& zi : s.z[j])
      if (zi > k) --zi;
  }
}

// Appends an empty topic with placeholder parameters; returns its index.
std::size_t append_topic(HdpState& s) {
  const std::size_t K = s.num_topics();
  const std::size_t V = s.vocab_size;
  const std::vector<double> uniform(V, 1.0 / static_cast<double>(V));
  s.beta.insert(s.beta.end() - 1, 0.0);
  s.theta.push_back(uniform);
  s.beta_bar.push_back({0.5, 0.5});
  s.sub_age.push_back(0);
  s.theta_bar.push_back({uniform, uniform});
  s.topic_words.emplace_back(V, 0);
  s.sub_topic_words.push_back({std::vector<std::int64_t>(V, 0), std::vector<std::int64_t>(V, 0)});
  for (std::size_t j = 0; j < s.num_docs(); ++j) {
    s.pi[j].insert(s.pi[j].end() - 1, 0.0);
    s.m[j].push_back(0);
    s.pi_bar[j].push_back({0.5, 0.5});
    s.m_bar[j].push_back({0, 0});
    s.n[j].push_back(0);
    s.n_bar[j].push_back({0, 0});
  }
  return K;
}

// New sub record for topic k: random bipartition, neutral weights, theta_bar
// from its conjugate posterior. Requires current counts for z.
void fresh_sub(HdpState& s, std::size_t k, const HdpHyper& h, Rng& rng) {
  redeal_zbar(s, k, rng);
  s.recount();
  s.beta_bar[k] = {0.5, 0.5};
  for (std::size_t j = 0; j < s.num_docs(); ++j) {
    s.pi_bar[j][k] = {0.5, 0.5};
    s.m_bar[j][k] = {0, 0};
  }
  std::vector<double> params(s.vocab_size);
  for (int side = 0; side < 2; ++side) {
    for (std::size_t w = 0; w < s.vocab_size; ++w)
      params[w] = h.lambda + static_cast<double>(s.sub_topic_words[k][side][w]);
    rng.dirichlet(params, s.theta_bar[k][side]);
  }
}

double log_dirichlet_multinomial(double lambda, std::span<const std::int64_t> counts) {
  const double V = static_cast<double>(counts.size());
  double total = 0.0, acc = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    total += static_cast<double>(c);
    acc += std::lgamma(lambda + static_cast<double>(c)) - std::lgamma(lambda);
  }
  return acc + std::lgamma(V * lambda) - std::lgamma(V * lambda + total);
}

void check_sum(const std::vector<double>& v, const std::string& what) {
  double s = 0.0;
  for (double x : v) {
    if (!(x >= 0.0)) throw std::logic_error(what + " has a negative or NaN entry");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::logic_error(what + " sums to " + std::to_string(s));
}

}  // namespace

void HdpHyper::validate() const {
  if (!(gamma > 0)) throw std::invalid_argument("hdp.gamma: must be > 0");
  if (!(alpha > 0)) throw std::invalid_argument("hdp.alpha: must be > 0");
  if (!(lambda > 0)) throw std::invalid_argument("hdp.lambda: must be > 0");
}

std::int64_t HdpState::topic_size(std::size_t k) const {
  std::int64_t n_k = 0;
  for (const auto& row : n) n_k += row[k];
  return n_k;
}

void HdpState::recount() {
  const std::size_t K = num_topics();
  for (auto& row : topic_words) std::fill(row.begin(), row.end(), 0);
  for (auto& sub : sub_topic_words)
    for (auto& row : sub) std::fill(row.begin(), row.end(), 0);
  for (std::size_t j = 0; j < num_docs(); ++j) {
    n[j].assign(K, 0);
    n_bar[j].assign(K, {0, 0});
    for (std::size_t i = 0; i < words[j].size(); ++i) {
      const auto k = z[j][i];
      const auto h = zbar[j][i];
      ++n[j][k];
      ++n_bar[j][k][h];
      ++topic_words[k][words[j][i]];
      ++sub_topic_words[k][h][words[j][i]];
    }
  }
}

void HdpState::audit() const {
  const std::size_t K = num_topics();
  const std::size_t D = num_docs();
  if (beta.size() != K + 1) throw std::logic_error("beta must have K + 1 entries");
  if (pi.size() != D || z.size() != D || zbar.size() != D || m.size() != D || n.size() != D ||
      n_bar.size() != D || pi_bar.size() != D || m_bar.size() != D)
    throw std::logic_error("per-document arrays differ in length");
  if (beta_bar.size() != K || sub_age.size() != K || theta_bar.size() != K || topic_words.size() != K || sub_topic_words.size() != K)
    throw std::logic_error("per-topic arrays differ in length");
  check_sum(beta, "beta");
  for (std::size_t k = 0; k < K; ++k) {
    check_sum(theta[k], "theta[" + std::to_string(k) + "]");
    check_sum({beta_bar[k][0], beta_bar[k][1]}, "beta_bar");
    check_sum(theta_bar[k][0], "theta_bar");
    check_sum(theta_bar[k][1], "theta_bar");
  }
  std::vector<std::int64_t> tw(K * vocab_size, 0), stw(2 * K * vocab_size, 0);
  for (std::size_t j = 0; j < D; ++j) {
    check_sum(pi[j], "pi[" + std::to_string(j) + "]");
    if (pi[j].size() != K + 1 || m[j].size() != K || n[j].size() != K) throw std::logic_error("bad doc row length");
    if (z[j].size() != words[j].size() || zbar[j].size() != words[j].size())
      throw std::logic_error("label arrays differ from document length");
    std::vector<std::int64_t> nj(K, 0);
    std::vector<std::array<std::int64_t, 2>> nbj(K, {0, 0});
    for (std::size_t i = 0; i < words[j].size(); ++i) {
      if (z[j][i] >= K) throw std::logic_error("topic label out of range");
      if (zbar[j][i] > 1) throw std::logic_error("sub-cluster label out of range");
      ++nj[z[j][i]];
      ++nbj[z[j][i]][zbar[j][i]];
      ++tw[z[j][i] * vocab_size + words[j][i]];
      ++stw[(2 * z[j][i] + zbar[j][i]) * vocab_size + words[j][i]];
    }
    std::int64_t total = 0;
    for (std::size_t k = 0; k < K; ++k) {
      if (nj[k] != n[j][k] || nbj[k] != n_bar[j][k]) throw std::logic_error("document counts disagree with z");
      if (n_bar[j][k][0] + n_bar[j][k][1] != n[j][k]) throw std::logic_error("sub-counts do not partition");
      check_sum({pi_bar[j][k][0], pi_bar[j][k][1]}, "pi_bar");
      total += n[j][k];
    }
    if (total != static_cast<std::int64_t>(words[j].size())) throw std::logic_error("sum_k n_jk != N_j");
  }
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t w = 0; w < vocab_size; ++w) {
      if (tw[k * vocab_size + w] != topic_words[k][w]) throw std::logic_error("topic word counts disagree");
      for (int h = 0; h < 2; ++h)
        if (stw[(2 * k + h) * vocab_size + w] != sub_topic_words[k][h][w])
          throw std::logic_error("sub-topic word counts disagree");
    }
    if (topic_size(k) == 0) throw std::logic_error("empty topic " + std::to_string(k) + " in active set");
  }
}

std::int64_t crp_table_count(double concentration, std::int64_t n, Rng& rng) {
  std::int64_t tables = 0;
  for (std::int64_t i = 0; i < n; ++i)
    tables += rng.bernoulli(concentration / (concentration + static_cast<double>(i)));
  return tables;
}

HdpState init_state(const Corpus& corpus, const HdpHyper& h, std::size_t K0, std::uint64_t seed) {
  h.validate();
  corpus.check();
  if (K0 == 0) throw std::invalid_argument("init_state: K0 must be >= 1");
  if (corpus.docs.empty() || corpus.total_words() == 0) throw std::invalid_argument("init_state: empty corpus");
  if (corpus.vocab_size < 1) throw std::invalid_argument("init_state: empty vocabulary");
  HdpState s;
  s.vocab_size = corpus.vocab_size;
  const std::size_t D = corpus.docs.size();
  const std::size_t V = s.vocab_size;
  for (const auto& d : corpus.docs) s.words.push_back(d.words);
  s.z.resize(D);
  s.zbar.resize(D);
  std::size_t dealt = 0;
  for (std::size_t j = 0; j < D; ++j) {
    Rng rng = stream(seed, 0, kInit, j);
    for (std::size_t i = 0; i < s.words[j].size(); ++i) {
      const auto k = dealt < K0 ? dealt : static_cast<std::size_t>(rng.below(K0));
      ++dealt;
      s.z[j].push_back(static_cast<std::uint32_t>(k));
      s.zbar[j].push_back(static_cast<std::uint8_t>(rng.below(2)));
    }
  }
  const double u = 1.0 / static_cast<double>(K0 + 1);
  s.beta.assign(K0 + 1, u);
  s.pi.assign(D, std::vector<double>(K0 + 1, u));
  s.theta.assign(K0, std::vector<double>(V, 1.0 / static_cast<double>(V)));
  s.m.assign(D, std::vector<std::int64_t>(K0, 0));
  s.beta_bar.assign(K0, {0.5, 0.5});
  s.sub_age.assign(K0, 0);
  s.pi_bar.assign(D, std::vector<std::array<double, 2>>(K0, {0.5, 0.5}));
  s.theta_bar.assign(K0, {s.theta[0], s.theta[0]});
  s.m_bar.assign(D, std::vector<std::array<std::int64_t, 2>>(K0, {0, 0}));
  s.n.assign(D, {});
  s.n_bar.assign(D, {});
  s.topic_words.assign(K0, std::vector<std::int64_t>(V, 0));
  s.sub_topic_words.assign(K0, {std::vector<std::int64_t>(V, 0), std::vector<std::int64_t>(V, 0)});
  s.recount();
  remove_empty_topics(s);
  for (std::size_t k = 0; k < s.num_topics(); ++k) {
    Rng rng = stream(seed, 0, kFresh, k);
    redeal_zbar(s, k, rng);
  }
  s.recount();
  sample_theta(s, h, seed, 0);
  sample_m(s, h, seed, 0);
  sample_beta(s, h, seed, 0);
  sample_pi(s, h, seed, 0);
  return s;
}

void sample_theta(HdpState& s, const HdpHyper& h, std::uint64_t seed, std::uint64_t tick) {
  std::vector<double> params(s.vocab_size);
  for (std::size_t k = 0; k < s.num_topics(); ++k) {
    Rng rng = stream(seed, tick, kTheta, k);
    for (std::size_t w = 0; w < s.vocab_size; ++w) params[w] = h.lambda + static_cast<double>(s.topic_words[k][w]);
    rng.dirichlet(params, s.theta[k]);
    for (int side = 0; side < 2; ++side) {
      for (std::size_t w = 0; w < s.vocab_size; ++w)
        params[w] = h.lambda + static_cast<double>(s.sub_topic_words[k][side][w]);
      rng.dirichlet(params, s.theta_bar[k][side]);
    }
  }
}

void sample_z(HdpState& s, std::uint64_t seed, std::uint64_t tick, unsigned threads, bool fixed_k) {
  const std::size_t K = s.num_topics();
  if (K > 1) {
    std::vector<std::int64_t> sizes;
    if (fixed_k) {
      // Topic totals are shared across documents, so this mode runs serially.
      threads = 1;
      sizes.resize(K);
      for (std::size_t k = 0; k < K; ++k) sizes[k] = s.topic_size(k);
    }
    parallel_for(s.num_docs(), threads, [&](std::size_t j) {
      Rng rng = stream(seed, tick, kZ, j);
      std::vector<double> w(K), lw(K);
      for (std::size_t i = 0; i < s.words[j].size(); ++i) {
        const auto old = s.z[j][i];
        if (fixed_k && sizes[old] == 1) continue;
        const auto word = s.words[j][i];
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) total += w[k] = s.pi[j][k] * s.theta[k][word];
        std::size_t k;
        if (total > 0.0) {
          k = rng.categorical(w);
        } else {
          for (std::size_t t = 0; t < K; ++t) lw[t] = std::log(s.pi[j][t]) + std::log(s.theta[t][word]);
          k = rng.categorical_log(lw);
        }
        s.z[j][i] = static_cast<std::uint32_t>(k);
        if (fixed_k) {
          --sizes[old];
          ++sizes[k];
        }
      }
    });
  }
  s.recount();
}

void sample_zbar(HdpState& s, std::uint64_t seed, std::uint64_t tick, unsigned threads) {
  parallel_for(s.num_docs(), threads, [&](std::size_t j) {
    Rng rng = stream(seed, tick, kZbar, j);
    for (std::size_t i = 0; i < s.words[j].size(); ++i) {
      const auto k = s.z[j][i];
      const auto word = s.words[j][i];
      const double l = s.pi_bar[j][k][0] * s.theta_bar[k][0][word];
      const double r = s.pi_bar[j][k][1] * s.theta_bar[k][1][word];
      double pl;
      if (l + r > 0.0) {
        pl = l / (l + r);
      } else {
        const double ll = std::log(s.pi_bar[j][k][0]) + std::log(s.theta_bar[k][0][word]);
        const double lr = std::log(s.pi_bar[j][k][1]) + std::log(s.theta_bar[k][1][word]);
        pl = 1.0 / (1.0 + std::exp(lr - ll));
      }
      s.zbar[j][i] = rng.uniform() < pl ? 0 : 1;
    }
  });
  s.recount();
  bool redealt = false;
  for (std::size_t k = 0; k < s.num_topics(); ++k) {
    std::int64_t left = 0, right = 0;
    for (std::size_t j = 0; j < s.num_docs(); ++j) {
      left += s.n_bar[j][k][0];
      right += s.n_bar[j][k][1];
    }
    if (left + right >= 2 && (left == 0 || right == 0)) {
      Rng rng = stream(seed, tick, kZbar, s.num_docs() + k);
      redeal_zbar(s, k, rng);
      redealt = true;
    }
  }
  if (redealt) s.recount();
}

std::size_t remove_empty_topics(HdpState& s) {
  std::size_t removed = 0;
  for (std::size_t k = s.num_topics(); k-- > 0;) {
    if (s.topic_size(k) > 0) continue;
    s.beta.back() += s.beta[k];
    for (auto& p : s.pi) p.back() += p[k];
    erase_topic(s, k);
    ++removed;
  }
  return removed;
}

void sample_m(HdpState& s, const HdpHyper& h, std::uint64_t seed, std::uint64_t tick, unsigned threads) {
  parallel_for(s.num_docs(), threads, [&](std::size_t j) {
    Rng rng = stream(seed, tick, kM, j);
    for (std::size_t k = 0; k < s.num_topics(); ++k) {
      s.m[j][k] = crp_table_count(h.alpha * s.beta[k], s.n[j][k], rng);
      for (int side = 0; side < 2; ++side)
        s.m_bar[j][k][side] = crp_table_count(h.alpha * s.beta_bar[k][side], s.n_bar[j][k][side], rng);
    }
  });
}

void sample_beta(HdpState& s, const HdpHyper& h, std::uint64_t seed, std::uint64_t tick) {
  const std::size_t K = s.num_topics();
  std::vector<double> params(K + 1, 0.0);
  for (std::size_t j = 0; j < s.num_docs(); ++j)
    for (std::size_t k = 0; k < K; ++k) params[k] += static_cast<double>(s.m[j][k]);
  for (std::size_t k = 0; k < K; ++k)
    if (!(params[k] > 0.0)) throw std::logic_error("sample_beta: topic " + std::to_string(k) + " has no tables");
  params[K] = h.gamma;
  Rng rng = stream(seed, tick, kBeta, 0);
  rng.dirichlet(params, s.beta);
  for (std::size_t k = 0; k < K; ++k) {
    double ml = 0.0, mr = 0.0;
    for (std::size_t j = 0; j < s.num_docs(); ++j) {
      ml += static_cast<double>(s.m_bar[j][k][0]);
      mr += static_cast<double>(s.m_bar[j][k][1]);
    }
    Rng sub = stream(seed, tick, kBeta, 1 + k);
    const double b = sub.beta(h.gamma + ml, h.gamma + mr);
    s.beta_bar[k] = {std::max(b, 1e-300), std::max(1.0 - b, 1e-300)};
  }
}

void sample_pi(HdpState& s, const HdpHyper& h, std::uint64_t seed, std::uint64_t tick, unsigned threads) {
  const std::size_t K = s.num_topics();
  parallel_for(s.num_docs(), threads, [&](std::size_t j) {
    Rng rng = stream(seed, tick, kPi, j);
    std::vector<double> params(K + 1);
    for (std::size_t k = 0; k < K; ++k) params[k] = h.alpha * s.beta[k] + static_cast<double>(s.n[j][k]);
    params[K] = h.alpha * s.beta[K];
    rng.dirichlet(params, s.pi[j]);
    for (std::size_t k = 0; k < K; ++k) {
      const double a = h.alpha * s.beta_bar[k][0] + static_cast<double>(s.n_bar[j][k][0]);
      const double b = h.alpha * s.beta_bar[k][1] + static_cast<double>(s.n_bar[j][k][1]);
      const double x = rng.beta(a, b);
      s.pi_bar[j][k] = {std::max(x, 1e-300), std::max(1.0 - x, 1e-300)};
    }
  });
}

double split_log_ratio(const HdpHyper& h, double beta_k, double u, std::span<const std::int64_t> n_l,
                       std::span<const std::int64_t> n_r, std::span<const std::int64_t> c_l,
                       std::span<const std::int64_t> c_r) {
  const double bl = h.alpha * beta_k * u;
  const double br = h.alpha * beta_k * (1.0 - u);
  const double bk = h.alpha * beta_k;
  double r = std::log(h.gamma) - std::log(u) - std::log1p(-u);
  for (std::size_t j = 0; j < n_l.size(); ++j) {
    if (n_l[j] == 0 && n_r[j] == 0) continue;
    const double nl = static_cast<double>(n_l[j]), nr = static_cast<double>(n_r[j]);
    r += std::lgamma(bl + nl) - std::lgamma(bl) + std::lgamma(br + nr) - std::lgamma(br) -
         std::lgamma(bk + nl + nr) + std::lgamma(bk);
  }
  std::vector<std::int64_t> c_k(c_l.size());
  for (std::size_t w = 0; w < c_k.size(); ++w) c_k[w] = c_l[w] + c_r[w];
  r += log_dirichlet_multinomial(h.lambda, c_l) + log_dirichlet_multinomial(h.lambda, c_r) -
       log_dirichlet_multinomial(h.lambda, c_k);
  return r;
}

bool propose_split(HdpState& s, std::size_t k, const HdpHyper& h, Rng& rng) {
  const std::size_t D = s.num_docs();
  std::vector<std::int64_t> n_l(D), n_r(D);
  std::int64_t left = 0, right = 0;
  for (std::size_t j = 0; j < D; ++j) {
    n_l[j] = s.n_bar[j][k][0];
    n_r[j] = s.n_bar[j][k][1];
    left += n_l[j];
    right += n_r[j];
  }
  if (left == 0 || right == 0) return false;
  const double u = s.beta_bar[k][0];
  const double log_h = split_log_ratio(h, s.beta[k], u, n_l, n_r, s.sub_topic_words[k][0], s.sub_topic_words[k][1]);
  if (!(std::log(rng.uniform_open()) < log_h)) return false;

  const std::size_t r = append_topic(s);
  const double b = s.beta[k];
  s.beta[k] = b * u;
  s.beta[r] = b * (1.0 - u);
  s.theta[r] = s.theta_bar[k][1];
  s.theta[k] = s.theta_bar[k][0];
  for (std::size_t j = 0; j < D; ++j) {
    const double p = s.pi[j][k];
    s.pi[j][r] = p * s.pi_bar[j][k][1];
    s.pi[j][k] = p * s.pi_bar[j][k][0];
    s.m[j][r] = s.m_bar[j][k][1];
    s.m[j][k] = s.m_bar[j][k][0];
    for (std::size_t i = 0; i < s.z[j].size(); ++i)
      if (s.z[j][i] == k && s.zbar[j][i] == 1) s.z[j][i] = static_cast<std::uint32_t>(r);
  }
  s.recount();
  fresh_sub(s, k, h, rng);
  fresh_sub(s, r, h, rng);
  return true;
}

bool propose_merge(HdpState& s, std::size_t k1, std::size_t k2, const HdpHyper& h, Rng& rng) {
  if (k1 == k2) throw std::invalid_argument("propose_merge: identical topics");
  if (k1 > k2) std::swap(k1, k2);
  const std::size_t D = s.num_docs();
  std::vector<std::int64_t> n_l(D), n_r(D);
  for (std::size_t j = 0; j < D; ++j) {
    n_l[j] = s.n[j][k1];
    n_r[j] = s.n[j][k2];
  }
  const double b = s.beta[k1] + s.beta[k2];
  const double u = s.beta[k1] / b;
  const double log_h = -split_log_ratio(h, b, u, n_l, n_r, s.topic_words[k1], s.topic_words[k2]);
  if (!(std::log(rng.uniform_open()) < log_h)) return false;

  // The merged topic's sub-clusters are the two former topics.
  s.beta_bar[k1] = {u, 1.0 - u};
  s.sub_age[k1] = std::max(s.sub_age[k1], s.sub_age[k2]);
  s.theta_bar[k1] = {s.theta[k1], s.theta[k2]};
  for (std::size_t j = 0; j < D; ++j) {
    const double p1 = s.pi[j][k1], p2 = s.pi[j][k2];
    s.pi_bar[j][k1] = {p1 / (p1 + p2), p2 / (p1 + p2)};
    s.pi[j][k1] = p1 + p2;
    s.pi[j][k2] = 0.0;
    s.m_bar[j][k1] = {s.m[j][k1], s.m[j][k2]};
    s.m[j][k1] += s.m[j][k2];
    for (std::size_t i = 0; i < s.z[j].size(); ++i) {
      if (s.z[j][i] == k1) s.zbar[j][i] = 0;
      if (s.z[j][i] == k2) {
        s.z[j][i] = static_cast<std::uint32_t>(k1);
        s.zbar[j][i] = 1;
      }
    }
  }
  s.beta[k1] = b;
  s.beta[k2] = 0.0;
  erase_topic(s, k2);
  s.recount();
  std::vector<double> params(s.vocab_size);
  for (std::size_t w = 0; w < s.vocab_size; ++w) params[w] = h.lambda + static_cast<double>(s.topic_words[k1][w]);
  rng.dirichlet(params, s.theta[k1]);
  return true;
}

double data_log_likelihood(const HdpState& s) {
  const std::size_t K = s.num_topics();
  const double uniform = 1.0 / static_cast<double>(s.vocab_size);
  double ll = 0.0;
  for (std::size_t j = 0; j < s.num_docs(); ++j)
    for (auto w : s.words[j]) {
      double p = s.pi[j][K] * uniform;
      for (std::size_t k = 0; k < K; ++k) p += s.pi[j][k] * s.theta[k][w];
      ll += std::log(p);
    }
  return ll;
}

IterationDiagnostics sampler_iteration(HdpState& s, const HdpHyper& h, const SamplerOptions& o,
                                       std::size_t iteration) {
  const std::uint64_t tick = iteration + 1;
  IterationDiagnostics d;
  d.iteration = iteration;
  sample_theta(s, h, o.seed, tick);
  sample_z(s, o.seed, tick, o.threads, o.fixed_k);
  sample_zbar(s, o.seed, tick, o.threads);
  if (!o.fixed_k) remove_empty_topics(s);
  sample_m(s, h, o.seed, tick, o.threads);
  sample_beta(s, h, o.seed, tick);
  sample_pi(s, h, o.seed, tick, o.threads);

  if (o.split_merge && !o.fixed_k) {
    const std::size_t K = s.num_topics();
    for (std::size_t k = 0; k < K; ++k) {
      if (s.sub_age[k] < o.sub_burn_in) continue;
      Rng rng = stream(o.seed, tick, kSplit, k);
      d.accepted_splits += propose_split(s, k, h, rng);
    }
    Rng rng = stream(o.seed, tick, kMerge, 0);
    const std::size_t K2 = s.num_topics();
    std::vector<std::size_t> order(K2);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = K2; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t p = 0; p + 1 < K2; p += 2) {
      const std::size_t a = order[p], b = order[p + 1];
      if (s.sub_age[a] < o.sub_burn_in || s.sub_age[b] < o.sub_burn_in) continue;
      if (propose_merge(s, a, b, h, rng)) {
        ++d.accepted_merges;
        // Topics above the removed index shift down by one.
        const std::size_t gone = std::max(a, b);
        for (auto& x : order)
          if (x > gone) --x;
      }
    }
  }
  for (auto& age : s.sub_age) ++age;
  d.K = s.num_topics();
  d.loglik = data_log_likelihood(s);
  return d;
}

HdpRun resume_sampler(HdpState state, const HdpHyper& h, const SamplerOptions& o, std::size_t start,
                      const IterationHook& hook) {
  h.validate();
  HdpRun run;
  run.state = std::move(state);
  for (std::size_t it = start; it < o.iterations; ++it) {
    auto d = sampler_iteration(run.state, h, o, it);
    if (hook) hook(run.state, d);
    run.diagnostics.push_back(d);
  }
  return run;
}

HdpRun run_sampler(const Corpus& corpus, const HdpHyper& h, const SamplerOptions& o, const IterationHook& hook) {
  if (o.iterations < 1) throw std::invalid_argument("run_sampler: iterations must be >= 1");
  return resume_sampler(init_state(corpus, h, o.K0, o.seed), h, o, 0, hook);
}

HdpSnapshot take_snapshot(const HdpState& s, std::size_t iteration) {
  return {iteration, s.beta, s.theta};
}

}  // namespace roadtopics
