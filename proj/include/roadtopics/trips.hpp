#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace roadtopics {

using Vec2 = Eigen::Vector2d;

/// One timestamped measurement. Position is planar, in meters.
struct Observation {
  double t = 0.0;
  Vec2 r = Vec2::Zero();
  double h = 0.0;  // radians, (-pi, pi]
  bool q = false;  // position inferred by dead reckoning
  bool k_on = false;
  bool k_off = false;
};

/// Car signals recorded alongside an observation.
struct CarSignal {
  double velocity = 0.0;  // m/s
  double hour = 0.0;      // time of day, [0, 24)
};

struct Trip {
  std::string id;
  std::vector<Observation> obs;
  /// Either empty or aligned one-to-one with `obs`.
  std::vector<CarSignal> signals;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Returns a description of the first violated Trip invariant, if any.
std::optional<std::string> validate_trip(const Trip& trip);

struct RejectedRecord {
  std::size_t line = 0;  // 1-based line number in the source file
  std::string trip_id;
  std::string reason;
};

struct TripLog {
  std::vector<Trip> trips;
  std::vector<RejectedRecord> rejected;
};

/// Reads JSON-Lines trip records. Malformed records are skipped and listed in
/// `rejected`; an unreadable file throws std::runtime_error. Records that give
/// lat/lon instead of x/y are projected equirectangularly about the centroid of
/// all lat/lon observations in the file.
TripLog parse_trips(const std::filesystem::path& path);
TripLog parse_trips(std::istream& in);

void write_trips(std::ostream& out, std::span<const Trip> trips);
void write_trips(const std::filesystem::path& path, std::span<const Trip> trips);

/// Equirectangular projection about (lat0, lon0), meters.
Vec2 project_equirectangular(double lat, double lon, double lat0, double lon0);

// ---------------------------------------------------------------------------
// Synthetic worlds with ground truth.

struct WorldConfig {
  int grid_w = 7;
  int grid_h = 7;
  double spacing = 200.0;  // meters between neighbouring grid nodes
  int n_sources = 3;
  int n_destinations = 5;
  /// Explicit node ids; when empty they are drawn from the seed.
  std::vector<int> sources;
  std::vector<int> destinations;
  /// Nodes deleted from the grid together with their edges.
  std::vector<int> removed_nodes;
  /// Every source is also a destination (trips end where later ones start).
  bool sources_are_destinations = true;
  /// Probability mass each source puts on its favourite destination.
  double favorite_prob = 0.8;
  int obs_per_node = 2;
  double position_noise = 5.0;   // meters
  double heading_noise = 0.05;   // radians
  double p_dead_reckoning = 0.05;
  double dr_inflation = 3.0;     // std multiplier for dead-reckoned positions
  double speed_noise = 1.0;      // m/s
};

struct RouteChoice {
  std::vector<int> nodes;  // source ... destination
  int destination = -1;    // node id
  double prob = 0.0;
};

struct SyntheticWorld {
  WorldConfig config;
  std::vector<Vec2> nodes;
  std::vector<std::vector<int>> adjacency;  // directed edges, node -> nodes
  std::vector<bool> present;                // false for removed nodes
  std::vector<int> sources;
  std::vector<int> destinations;
  /// route_policy[i] is the distribution for sources[i].
  std::vector<std::vector<RouteChoice>> route_policy;
  /// Planted mean speed per node, m/s.
  std::vector<double> node_speed;
  /// Mean trip start hour per source.
  std::vector<double> source_hour;
};

/// Throws std::invalid_argument for bad configs and std::runtime_error when a
/// source cannot reach any destination or a named destination is unreachable.
SyntheticWorld generate_world(const WorldConfig& config, std::uint64_t seed);

struct TripTruth {
  std::string trip_id;
  int source = -1;       // node id
  int destination = -1;  // node id
  std::vector<int> node_per_obs;
};

struct SampledTrips {
  std::vector<Trip> trips;
  std::vector<TripTruth> truth;
};

SampledTrips sample_trips(const SyntheticWorld& world, std::size_t n,
                          std::uint64_t seed);

/// Breadth-first hop distances from `from` over present nodes (-1 when
/// unreachable).
std::vector<int> bfs_hops(const SyntheticWorld& world, int from);

}  // namespace roadtopics
