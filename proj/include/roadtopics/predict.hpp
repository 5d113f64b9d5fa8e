#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "roadtopics/hmm.hpp"

namespace roadtopics {

struct RoutePrediction {
  std::vector<std::size_t> path;  // a ... b
  double log_prob = 0.0;          // sum of log transition probabilities
};

/// Maximum-probability path from state a to state b: Dijkstra over the
/// weights -log theta_ij. Equal-cost labels keep the lower predecessor index.
/// Throws std::invalid_argument for a == b or unknown states and
/// std::runtime_error when b is unreachable.
RoutePrediction most_likely_route(const HmmModel& model, std::size_t a, std::size_t b);

/// Probability of absorption into each destination. Rows for destination
/// states are exact unit vectors. `residual` is the probability of never
/// being absorbed, solved independently of `a`, so that the row identity
/// sum_j a(i, j) + residual(i) = 1 is a genuine check.
struct AbsorptionTable {
  std::vector<std::size_t> destinations;  // column j -> model state
  Eigen::MatrixXd a;                      // states x destinations
  Eigen::VectorXd residual;

  /// Column of destination state `state`, if it is one.
  std::optional<std::size_t> column_of(std::size_t state) const;
};

/// Dense LU below `dense_limit` transient states, Gauss-Seidel (tolerance
/// 1e-10, at most 1e5 sweeps) above it. Columns run on up to `threads`
/// workers.
AbsorptionTable absorption_table(const HmmModel& model, unsigned threads = 1,
                                 std::size_t dense_limit = 2000);

struct DestinationEstimate {
  std::size_t step = 0;   // prefix length
  std::size_t state = 0;  // decoded current state
  std::vector<double> probs;  // aligned with AbsorptionTable::destinations
  double residual = 0.0;
};

/// One estimate per prefix length 1..n (n = 0 means the whole trip).
std::vector<DestinationEstimate> track_destinations(const HmmModel& model, const AbsorptionTable& table,
                                                    const Trip& trip, std::size_t n = 0);

/// For every state, the destination state with the largest absorption
/// probability (lowest column on ties), or nullopt when no destination is
/// reachable.
std::vector<std::optional<std::size_t>> most_likely_destination_per_state(const AbsorptionTable& table);

/// Prefix length used for the early-prediction metric: max(2, ceil(f * n)),
/// capped at n.
std::size_t prefix_length(std::size_t trip_length, double fraction);

struct EarlyPrediction {
  std::size_t prefix = 0;
  std::optional<std::size_t> predicted;  // destination state
  bool correct = false;
  double true_probability = 0.0;  // mass on destinations within the radius
};

/// Predicts the destination after the first `fraction` of the trip. The
/// prediction is correct when the predicted destination's mean position lies
/// within `radius` meters of `true_position`.
EarlyPrediction predict_after_fraction(const HmmModel& model, const AbsorptionTable& table, const Trip& trip,
                                       const Vec2& true_position, double fraction = 0.1,
                                       double radius = 30.0);

}  // namespace roadtopics
