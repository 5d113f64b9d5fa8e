#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <stdexcept>
#include <string>

#include "roadtopics/random.hpp"
#include "roadtopics/trips.hpp"

namespace roadtopics {

namespace {

std::vector<int> draw_distinct(Rng& rng, std::vector<int> pool, std::size_t count) {
  if (count > pool.size()) throw std::invalid_argument("not enough grid nodes for the requested sources/destinations");
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

// Shortest hop path; ties follow the adjacency order.
std::vector<int> bfs_path(const SyntheticWorld& world, int from, int to) {
  std::vector<int> parent(world.nodes.size(), -2);
  std::deque<int> queue{from};
  parent[from] = -1;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    if (u == to) break;
    for (int v : world.adjacency[u])
      if (parent[v] == -2) {
        parent[v] = u;
        queue.push_back(v);
      }
  }
  if (parent[to] == -2) return {};
  std::vector<int> path;
  for (int v = to; v != -1; v = parent[v]) path.push_back(v);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

std::vector<int> bfs_hops(const SyntheticWorld& world, int from) {
  std::vector<int> hops(world.nodes.size(), -1);
  if (from < 0 || from >= static_cast<int>(world.nodes.size()) || !world.present[from]) return hops;
  std::deque<int> queue{from};
  hops[from] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : world.adjacency[u])
      if (hops[v] < 0) {
        hops[v] = hops[u] + 1;
        queue.push_back(v);
      }
  }
  return hops;
}

SyntheticWorld generate_world(const WorldConfig& config, std::uint64_t seed) {
  if (config.grid_w < 2 || config.grid_h < 2) throw std::invalid_argument("grid must be at least 2x2");
  if (config.n_sources < 1 || config.n_destinations < 1)
    throw std::invalid_argument("need at least one source and one destination");
  if (!(config.favorite_prob > 0.0 && config.favorite_prob <= 1.0))
    throw std::invalid_argument("favorite_prob must be in (0, 1]");
  if (config.obs_per_node < 1) throw std::invalid_argument("obs_per_node must be >= 1");
  if (config.dr_inflation < 1.0) throw std::invalid_argument("dr_inflation must be >= 1");

  Rng rng = Rng::stream(seed, 0x5752);
  SyntheticWorld world;
  world.config = config;
  const int n = config.grid_w * config.grid_h;
  world.nodes.resize(n);
  world.present.assign(n, true);
  world.adjacency.resize(n);
  for (int node : config.removed_nodes)
    if (node >= 0 && node < n) world.present[node] = false;
  for (int y = 0; y < config.grid_h; ++y)
    for (int x = 0; x < config.grid_w; ++x)
      world.nodes[y * config.grid_w + x] = {x * config.spacing, y * config.spacing};

  for (int y = 0; y < config.grid_h; ++y)
    for (int x = 0; x < config.grid_w; ++x) {
      const int u = y * config.grid_w + x;
      if (!world.present[u]) continue;
      auto& adj = world.adjacency[u];
      const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= config.grid_w || ny >= config.grid_h) continue;
        const int v = ny * config.grid_w + nx;
        if (world.present[v]) adj.push_back(v);
      }
      for (std::size_t i = adj.size(); i > 1; --i) std::swap(adj[i - 1], adj[rng.below(i)]);
    }

  std::vector<int> pool;
  for (int i = 0; i < n; ++i)
    if (world.present[i]) pool.push_back(i);

  auto check_node = [&](int node, const char* what) {
    if (node < 0 || node >= n || !world.present[node])
      throw std::runtime_error(std::string(what) + " node " + std::to_string(node) +
                               " is not in the road graph (unreachable)");
  };

  if (!config.sources.empty()) {
    for (int s : config.sources) check_node(s, "source");
    world.sources = config.sources;
  } else {
    world.sources = draw_distinct(rng, pool, config.n_sources);
  }

  if (!config.destinations.empty()) {
    for (int d : config.destinations) check_node(d, "destination");
    world.destinations = config.destinations;
  } else {
    std::vector<int> rest;
    for (int p : pool)
      if (std::find(world.sources.begin(), world.sources.end(), p) == world.sources.end())
        rest.push_back(p);
    if (config.sources_are_destinations) {
      world.destinations = world.sources;
      const int extra = std::max(0, config.n_destinations - static_cast<int>(world.sources.size()));
      for (int d : draw_distinct(rng, rest, extra)) world.destinations.push_back(d);
    } else {
      world.destinations = draw_distinct(rng, rest, config.n_destinations);
    }
  }

  std::vector<int> used_favorites;
  world.route_policy.resize(world.sources.size());
  for (std::size_t si = 0; si < world.sources.size(); ++si) {
    const int s = world.sources[si];
    const auto hops = bfs_hops(world, s);
    std::vector<int> candidates;
    for (int d : world.destinations) {
      if (d == s) continue;
      if (hops[d] < 0)
        throw std::runtime_error("destination node " + std::to_string(d) +
                                 " is unreachable from source node " + std::to_string(s));
      candidates.push_back(d);
    }
    if (candidates.empty())
      throw std::runtime_error("source node " + std::to_string(s) + " reaches no destination");

    std::vector<int> fresh;
    for (int c : candidates)
      if (std::find(used_favorites.begin(), used_favorites.end(), c) == used_favorites.end())
        fresh.push_back(c);
    const auto& fav_pool = fresh.empty() ? candidates : fresh;
    const int favorite = fav_pool[rng.below(fav_pool.size())];
    used_favorites.push_back(favorite);

    const double rest_prob =
        candidates.size() > 1 ? (1.0 - config.favorite_prob) / (candidates.size() - 1) : 0.0;
    double total = 0.0;
    for (int d : candidates) {
      RouteChoice choice;
      choice.destination = d;
      choice.nodes = bfs_path(world, s, d);
      choice.prob = candidates.size() == 1 ? 1.0 : (d == favorite ? config.favorite_prob : rest_prob);
      total += choice.prob;
      world.route_policy[si].push_back(std::move(choice));
    }
    for (auto& c : world.route_policy[si]) c.prob /= total;
  }

  world.node_speed.resize(n);
  for (int y = 0; y < config.grid_h; ++y)
    for (int x = 0; x < config.grid_w; ++x) {
      const bool arterial = x == 0 || y == 0 || x == config.grid_w - 1 || y == config.grid_h - 1;
      world.node_speed[y * config.grid_w + x] = (arterial ? 22.0 : 8.0) + 4.0 * rng.uniform();
    }
  world.source_hour.resize(world.sources.size());
  for (auto& h : world.source_hour) h = 6.0 + 14.0 * rng.uniform();
  return world;
}

SampledTrips sample_trips(const SyntheticWorld& world, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_trips: n must be >= 1");
  const auto& cfg = world.config;
  SampledTrips out;
  out.trips.reserve(n);
  out.truth.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, 0x7219, i);
    const std::size_t si = rng.below(world.sources.size());
    std::vector<double> probs;
    for (const auto& c : world.route_policy[si]) probs.push_back(c.prob);
    const auto& route = world.route_policy[si][rng.categorical(probs)];

    // One key-on observation at the source, obs_per_node at each interior
    // node, one key-off observation at the destination.
    std::vector<int> node_seq{route.nodes.front()};
    for (std::size_t k = 1; k + 1 < route.nodes.size(); ++k)
      for (int rep = 0; rep < cfg.obs_per_node; ++rep) node_seq.push_back(route.nodes[k]);
    node_seq.push_back(route.nodes.back());

    auto edge_heading = [&](int from, int to) {
      const Vec2 d = world.nodes[to] - world.nodes[from];
      return std::atan2(d.y(), d.x());
    };
    // Heading at route position k follows the outgoing edge; the last node
    // uses the incoming one.
    std::vector<double> route_heading(route.nodes.size());
    for (std::size_t k = 0; k < route.nodes.size(); ++k)
      route_heading[k] = k + 1 < route.nodes.size() ? edge_heading(route.nodes[k], route.nodes[k + 1])
                                                    : edge_heading(route.nodes[k - 1], route.nodes[k]);
    std::vector<double> heading_seq{route_heading.front()};
    for (std::size_t k = 1; k + 1 < route.nodes.size(); ++k)
      for (int rep = 0; rep < cfg.obs_per_node; ++rep) heading_seq.push_back(route_heading[k]);
    heading_seq.push_back(route_heading.back());

    Trip trip;
    char id[32];
    std::snprintf(id, sizeof id, "trip-%05zu", i);
    trip.id = id;
    double start_hour = std::fmod(world.source_hour[si] + rng.normal(0.0, 0.5) + 24.0, 24.0);
    double t = 0.0;
    for (std::size_t k = 0; k < node_seq.size(); ++k) {
      const int node = node_seq[k];
      const double speed = std::max(0.0, rng.normal(world.node_speed[node], cfg.speed_noise));
      if (k > 0) t += (cfg.spacing / cfg.obs_per_node) / std::max(speed, 1.0);
      Observation o;
      o.t = t;
      o.q = rng.bernoulli(cfg.p_dead_reckoning);
      const double sd = cfg.position_noise * (o.q ? cfg.dr_inflation : 1.0);
      o.r = world.nodes[node];
      if (sd > 0.0) o.r += Vec2(rng.normal(0.0, sd), rng.normal(0.0, sd));
      o.h = wrap_angle(heading_seq[k] + (cfg.heading_noise > 0.0 ? rng.normal(0.0, cfg.heading_noise) : 0.0));
      o.k_on = k == 0;
      o.k_off = k + 1 == node_seq.size();
      trip.obs.push_back(o);
      trip.signals.push_back({speed, std::fmod(start_hour + t / 3600.0, 24.0)});
    }
    out.truth.push_back({trip.id, route.nodes.front(), route.destination, node_seq});
    out.trips.push_back(std::move(trip));
  }
  return out;
}

}  // namespace roadtopics
