#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "roadtopics/corpus.hpp"
#include "roadtopics/quantize.hpp"
#include "roadtopics/trips.hpp"

namespace roadtopics {

enum class StateKind : std::uint8_t { Source, Destination, Road, RoadAug };

/// Hidden state label. `index` is the source, destination or road-segment
/// id; `source` is only meaningful for RoadAug.
struct StateId {
  StateKind kind = StateKind::Road;
  int index = 0;
  int source = -1;

  friend bool operator==(const StateId&, const StateId&) = default;
};

std::string to_string(const StateId& s);

struct EmissionParams {
  Vec2 mu_r = Vec2::Zero();
  Eigen::Matrix2d sigma_r = Eigen::Matrix2d::Identity();
  double mu_h = 0.0;
  double sigma_h = 1.0;  // variance, rad^2
  double p_q = 0.01;
  double c = 10.0;       // covariance inflation for dead-reckoned positions
};

struct Transition {
  std::uint32_t target = 0;
  double prob = 0.0;
};

struct HmmConfig {
  double lambda_pos = 50.0;       // DP-means penalty for road clustering, m
  double heading_scale = 10.0;    // m per radian in the clustering features
  double proximity_scale = 100.0; // m, initial transition decay
  double alpha = 0.5;             // Dirichlet sparsity parameter, < 1
  double c = 10.0;
  double colocation_radius = 30.0;
  std::size_t max_iter = 50;
  double tol = 1e-6;              // relative objective change
  std::size_t min_record_obs = 2; // warm-up pruning threshold
  double position_floor = 1.0;    // m^2
  double heading_floor = 0.01;    // rad^2
  double p_q_floor = 1e-3;
  std::size_t dp_means_iter = 100;
  unsigned threads = 1;

  void validate() const;
};

/// Trip HMM over X_S u X_D u X_R (plain) or X_S u X_D u (X_R x X_S)
/// (augmented). States are stored sources first, then destinations, then
/// road states; in the augmented model road states are ordered by road and
/// then by source.
///
/// Emission parameters live in `emissions` and are referenced through
/// `emission_of`: every RoadAug(r, .) shares record r, and a co-located
/// source/destination pair shares one location record.
struct HmmModel {
  bool augmented = false;
  double alpha = 0.5;
  double c = 10.0;
  int num_sources = 0;
  int num_destinations = 0;
  int num_roads = 0;

  std::vector<StateId> states;
  std::vector<std::uint32_t> emission_of;
  std::vector<EmissionParams> emissions;
  std::vector<double> theta0;
  std::vector<std::vector<Transition>> trans;  // sorted by target

  std::size_t size() const { return states.size(); }
  bool is_source(std::size_t s) const { return states[s].kind == StateKind::Source; }
  bool is_destination(std::size_t s) const { return states[s].kind == StateKind::Destination; }
  bool is_road(std::size_t s) const {
    return states[s].kind == StateKind::Road || states[s].kind == StateKind::RoadAug;
  }
  /// Road-segment id of a road state, -1 otherwise.
  int road_of(std::size_t s) const { return is_road(s) ? states[s].index : -1; }
  std::optional<std::size_t> find(const StateId& id) const;
  double transition(std::size_t from, std::size_t to) const;
  const EmissionParams& emission(std::size_t s) const { return emissions[emission_of[s]]; }
  std::vector<std::size_t> destination_states() const;
  std::vector<std::size_t> source_states() const;
  std::size_t nonzero_transitions() const;

  /// Throws std::logic_error when a structural invariant is broken.
  void check() const;
};

/// log p(y_t | x_t = state): position Gaussian (covariance x c when q = 1),
/// wrapped-heading Gaussian, Bernoulli(q) and degenerate key indicators.
double obs_loglik(const HmmModel& model, std::size_t state, const Observation& obs);

struct Decoding {
  std::vector<std::size_t> path;
  double log_likelihood = 0.0;
};

/// Most likely state sequence. Ties go to the lowest state index. Throws
/// std::runtime_error when every path has probability zero.
Decoding viterbi(const HmmModel& model, const Trip& trip);

/// Joint log-likelihood of a given path (log theta0 + transitions + emissions).
double path_loglik(const HmmModel& model, const Trip& trip, std::span<const std::size_t> path);

/// For each prefix length t = 1..n, the final state of the Viterbi decoding
/// of observations [0, t). Throws if the prefix cannot be decoded.
std::vector<std::size_t> viterbi_prefix_states(const HmmModel& model, const Trip& trip,
                                               std::size_t n);

HmmModel init_model(std::span<const Trip> trips, const HmmConfig& config, bool augmented);

struct EmFit {
  HmmModel model;
  std::vector<double> objective;  // one entry per completed iteration
  std::vector<Decoding> paths;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Hard (Viterbi) EM. Each iteration decodes every trip, keeps a trip's new
/// path only if it raises the objective, then applies closed-form updates.
/// The objective is the summed joint log-likelihood plus the Dirichlet
/// log-prior term (alpha - 1) log theta over the transitions in use.
EmFit em_fit(const HmmModel& init, std::span<const Trip> trips, const HmmConfig& config);

/// Objective of `em_fit` for the given paths.
double em_objective(const HmmModel& model, std::span<const Trip> trips,
                    std::span<const Decoding> paths);

/// Re-counts transitions under each trip's decoded source and builds the
/// augmented model; emission records are reused unchanged.
HmmModel augment_with_source(const HmmModel& plain, std::span<const Trip> trips,
                             const HmmConfig& config);

/// One document per road segment; words are the quantized (velocity, time)
/// pairs of the observations decoded onto that road.
Corpus extract_corpus(const HmmModel& model, std::span<const Trip> trips, const Vocabulary& vocab,
                      unsigned threads = 1);

void save_model(const std::filesystem::path& path, const HmmModel& model);
HmmModel load_model(const std::filesystem::path& path);

}  // namespace roadtopics
