#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "roadtopics/corpus.hpp"
#include "roadtopics/random.hpp"

namespace roadtopics {

struct HdpHyper {
  double gamma = 10.0;  // top-level concentration
  double alpha = 0.1;   // document-level concentration
  double lambda = 0.5;  // symmetric Dirichlet over the vocabulary

  void validate() const;
};

/// Full state of the direct-assignment HDP sampler with sub-cluster
/// augmentation. Topic-indexed arrays have K entries; `beta` and each
/// `pi[j]` carry an extra last entry for the unused remainder mass.
struct HdpState {
  std::size_t vocab_size = 0;
  std::vector<std::vector<WordIndex>> words;  // per document

  std::vector<double> beta;                // K + 1
  std::vector<std::vector<double>> pi;     // D x (K + 1)
  std::vector<std::vector<double>> theta;  // K x V
  std::vector<std::vector<std::uint32_t>> z;
  std::vector<std::vector<std::int64_t>> m;  // D x K table counts

  // Sub-clusters, index 0 = left, 1 = right.
  std::vector<std::array<double, 2>> beta_bar;                  // K
  std::vector<std::vector<std::array<double, 2>>> pi_bar;       // D x K
  std::vector<std::array<std::vector<double>, 2>> theta_bar;    // K x 2 x V
  std::vector<std::vector<std::uint8_t>> zbar;                  // per word
  std::vector<std::vector<std::array<std::int64_t, 2>>> m_bar;  // D x K
  // Iterations since each sub record was last re-dealt at random.
  std::vector<std::uint32_t> sub_age;  // K

  // Counts derived from z and zbar.
  std::vector<std::vector<std::int64_t>> n;                     // D x K
  std::vector<std::vector<std::array<std::int64_t, 2>>> n_bar;  // D x K
  std::vector<std::vector<std::int64_t>> topic_words;           // K x V
  std::vector<std::array<std::vector<std::int64_t>, 2>> sub_topic_words;  // K x 2 x V

  std::size_t num_topics() const { return theta.size(); }
  std::size_t num_docs() const { return words.size(); }
  std::int64_t topic_size(std::size_t k) const;

  /// Rebuilds every count array from z and zbar.
  void recount();
  /// Throws std::logic_error if counts, normalisation or sub records are
  /// inconsistent.
  void audit() const;
};

/// Draws the number of occupied tables when `n` customers sit in a Chinese
/// restaurant with the given concentration: a sum of independent
/// Bernoulli(c / (c + i)) for i = 0..n-1.
std::int64_t crp_table_count(double concentration, std::int64_t n, Rng& rng);

/// z drawn uniformly over K0 topics (the first K0 words of the corpus are
/// dealt to topics 0..K0-1 so no topic starts empty), then every other
/// variable from its conditional.
HdpState init_state(const Corpus& corpus, const HdpHyper& hyper, std::size_t K0, std::uint64_t seed);

// Individual conditional updates. Random draws come from counter streams
// keyed by (seed, tick, phase, document or topic), so results do not depend
// on the thread count.
void sample_theta(HdpState& s, const HdpHyper& h, std::uint64_t seed, std::uint64_t tick);
/// Topic labels restricted to the K existing topics. With `fixed_k` a label
/// that would empty its topic is kept.
void sample_z(HdpState& s, std::uint64_t seed, std::uint64_t tick, unsigned threads = 1,
              bool fixed_k = false);
/// Sub-cluster labels; a topic with at least two words whose words all fall
/// on one side is re-dealt at random.
void sample_zbar(HdpState& s, std::uint64_t seed, std::uint64_t tick, unsigned threads = 1);
/// Deletes topics without words, folding their beta and pi mass into the
/// remainder. Returns the number removed.
std::size_t remove_empty_topics(HdpState& s);
void sample_m(HdpState& s, const HdpHyper& h, std::uint64_t seed, std::uint64_t tick, unsigned threads = 1);
void sample_beta(HdpState& s, const HdpHyper& h, std::uint64_t seed, std::uint64_t tick);
void sample_pi(HdpState& s, const HdpHyper& h, std::uint64_t seed, std::uint64_t tick, unsigned threads = 1);

/// log of the split Hastings ratio for dividing a topic with global weight
/// `beta_k` into sub-clusters with per-document counts n_l, n_r and word
/// counts c_l, c_r, where the left child receives the fraction `u` of
/// beta_k. A merge uses the negated value at the merged state.
double split_log_ratio(const HdpHyper& h, double beta_k, double u, std::span<const std::int64_t> n_l,
                       std::span<const std::int64_t> n_r, std::span<const std::int64_t> c_l,
                       std::span<const std::int64_t> c_r);

/// Splits topic k along its sub-clusters with MH acceptance. Returns true on
/// accept. Topics with fewer than two words or an empty sub-cluster are left
/// alone.
bool propose_split(HdpState& s, std::size_t k, const HdpHyper& h, Rng& rng);
/// Merges topics k1 and k2 (into the lower index) with MH acceptance.
bool propose_merge(HdpState& s, std::size_t k1, std::size_t k2, const HdpHyper& h, Rng& rng);

/// sum over words of log sum_k pi_jk theta_k(w).
double data_log_likelihood(const HdpState& s);

struct SamplerOptions {
  std::size_t iterations = 500;
  std::size_t K0 = 1;
  std::uint64_t seed = 1;
  bool split_merge = true;
  bool fixed_k = false;
  unsigned threads = 1;
  // Split and merge proposals skip topics whose sub record is younger than
  // this, so fresh random sub-clusters get time to settle.
  std::uint32_t sub_burn_in = 10;
};

struct IterationDiagnostics {
  std::size_t iteration = 0;
  std::size_t K = 0;
  double loglik = 0.0;
  std::size_t accepted_splits = 0;
  std::size_t accepted_merges = 0;
  double heldout_ll = 0.0;
  bool has_heldout = false;
};

/// One full iteration: theta, z, empty-topic removal, m, beta, pi (each with
/// its sub-cluster counterpart), then one split proposal per topic and
/// floor(K/2) merge proposals over a random disjoint pairing.
IterationDiagnostics sampler_iteration(HdpState& s, const HdpHyper& h, const SamplerOptions& o,
                                       std::size_t iteration);

/// Called after every iteration; may fill in held-out scores.
using IterationHook = std::function<void(const HdpState&, IterationDiagnostics&)>;

struct HdpRun {
  HdpState state;
  std::vector<IterationDiagnostics> diagnostics;
};

HdpRun run_sampler(const Corpus& corpus, const HdpHyper& h, const SamplerOptions& o,
                   const IterationHook& hook = {});
/// Continues a run from a saved state; iterations [start, o.iterations).
HdpRun resume_sampler(HdpState state, const HdpHyper& h, const SamplerOptions& o, std::size_t start,
                      const IterationHook& hook = {});

/// Frozen global variables used for held-out prediction.
struct HdpSnapshot {
  std::size_t iteration = 0;
  std::vector<double> beta;
  std::vector<std::vector<double>> theta;
};

HdpSnapshot take_snapshot(const HdpState& s, std::size_t iteration);

// Persistence. A checkpoint is `<stem>.json` plus `<stem>.bin` holding the
// z and zbar arrays.
void save_checkpoint(const std::filesystem::path& stem, const HdpState& s, const HdpHyper& h,
                     std::size_t next_iteration);
struct Checkpoint {
  HdpState state;
  HdpHyper hyper;
  std::size_t next_iteration = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& stem);

void save_snapshots(const std::filesystem::path& path, const HdpHyper& h, std::span<const HdpSnapshot> snaps);
std::vector<HdpSnapshot> load_snapshots(const std::filesystem::path& path, HdpHyper* hyper = nullptr);

void write_diagnostics_csv(const std::filesystem::path& path, std::span<const IterationDiagnostics> diag);

}  // namespace roadtopics
