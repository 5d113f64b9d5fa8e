#include "roadtopics/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "roadtopics/parallel.hpp"

namespace roadtopics {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double gauss2_logpdf(const Vec2& d, const Eigen::Matrix2d& S) {
  const double det = S(0, 0) * S(1, 1) - S(0, 1) * S(1, 0);
  Eigen::Matrix2d inv;
  inv << S(1, 1), -S(0, 1), -S(1, 0), S(0, 0);
  inv /= det;
  return -std::log(kTwoPi) - 0.5 * std::log(det) - 0.5 * d.dot(inv * d);
}

double gauss1_logpdf(double d, double var) {
  return -0.5 * std::log(kTwoPi * var) - 0.5 * d * d / var;
}

double record_loglik(const EmissionParams& e, const Observation& o) {
  const Eigen::Matrix2d S = o.q ? Eigen::Matrix2d(e.c * e.sigma_r) : e.sigma_r;
  return gauss2_logpdf(o.r - e.mu_r, S) + gauss1_logpdf(wrap_angle(o.h - e.mu_h), e.sigma_h) +
         (o.q ? std::log(e.p_q) : std::log1p(-e.p_q));
}

double key_loglik(StateKind kind, const Observation& o) {
  const bool src = kind == StateKind::Source;
  const bool dst = kind == StateKind::Destination;
  return (o.k_on == src && o.k_off == dst) ? 0.0 : kNegInf;
}

// T x N emission log-likelihoods.
std::vector<std::vector<double>> emission_table(const HmmModel& m, const Trip& trip, std::size_t n) {
  std::vector<std::vector<double>> table(n, std::vector<double>(m.size()));
  std::vector<double> rec(m.emissions.size());
  for (std::size_t t = 0; t < n; ++t) {
    const auto& o = trip.obs[t];
    for (std::size_t r = 0; r < rec.size(); ++r) rec[r] = record_loglik(m.emissions[r], o);
    for (std::size_t s = 0; s < m.size(); ++s) {
      const double key = key_loglik(m.states[s].kind, o);
      table[t][s] = key == 0.0 ? rec[m.emission_of[s]] : kNegInf;
    }
  }
  return table;
}

struct Incoming {
  std::uint32_t from;
  double logp;
};

std::vector<std::vector<Incoming>> incoming_edges(const HmmModel& m) {
  std::vector<std::vector<Incoming>> in(m.size());
  for (std::size_t k = 0; k < m.size(); ++k)
    for (const auto& tr : m.trans[k])
      if (tr.prob > 0.0) in[tr.target].push_back({static_cast<std::uint32_t>(k), std::log(tr.prob)});
  // Rows are visited in increasing k, so each list is already sorted by source.
  return in;
}

struct Forward {
  std::vector<std::vector<double>> delta;
  std::vector<std::vector<std::uint32_t>> back;
};

Forward forward_pass(const HmmModel& m, const Trip& trip, std::size_t n) {
  const auto E = emission_table(m, trip, n);
  const auto in = incoming_edges(m);
  Forward f;
  f.delta.assign(n, std::vector<double>(m.size(), kNegInf));
  f.back.assign(n, std::vector<std::uint32_t>(m.size(), 0));
  for (std::size_t s = 0; s < m.size(); ++s)
    if (m.theta0[s] > 0.0 && E[0][s] > kNegInf) f.delta[0][s] = std::log(m.theta0[s]) + E[0][s];
  for (std::size_t t = 1; t < n; ++t) {
    const auto& prev = f.delta[t - 1];
    for (std::size_t s = 0; s < m.size(); ++s) {
      if (E[t][s] == kNegInf) continue;
      double best = kNegInf;
      std::uint32_t arg = 0;
      for (const auto& e : in[s]) {
        const double v = prev[e.from] + e.logp;
        if (v > best) {
          best = v;
          arg = e.from;
        }
      }
      if (best > kNegInf) {
        f.delta[t][s] = best + E[t][s];
        f.back[t][s] = arg;
      }
    }
  }
  return f;
}

std::size_t argmax_lowest(const std::vector<double>& v) {
  std::size_t arg = 0;
  double best = kNegInf;
  for (std::size_t s = 0; s < v.size(); ++s)
    if (v[s] > best) {
      best = v[s];
      arg = s;
    }
  return arg;
}

EmissionParams estimate_record(const std::vector<const Observation*>& obs, const EmissionParams& previous,
                               const HmmConfig& cfg, double c, std::size_t* clamped) {
  if (obs.empty()) return previous;
  EmissionParams e;
  e.c = c;
  const double n = static_cast<double>(obs.size());
  double wsum = 0.0;
  Vec2 mu = Vec2::Zero();
  for (const auto* o : obs) {
    const double w = o->q ? 1.0 / c : 1.0;
    wsum += w;
    mu += w * o->r;
  }
  mu /= wsum;
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  for (const auto* o : obs) {
    const double w = o->q ? 1.0 / c : 1.0;
    const Vec2 d = o->r - mu;
    S += w * d * d.transpose();
  }
  S /= n;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(S);
  Eigen::Vector2d ev = eig.eigenvalues();
  bool was_clamped = false;
  for (int i = 0; i < 2; ++i)
    if (!(ev(i) >= cfg.position_floor)) {
      ev(i) = cfg.position_floor;
      was_clamped = true;
    }
  if (was_clamped) S = eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
  e.mu_r = mu;
  e.sigma_r = 0.5 * (S + S.transpose());

  std::vector<double> headings;
  headings.reserve(obs.size());
  for (const auto* o : obs) headings.push_back(o->h);
  double mh = circular_mean(headings, kTwoPi);
  mh = wrap_angle(mh);
  double var = 0.0;
  for (double h : headings) {
    const double d = wrap_angle(h - mh);
    var += d * d;
  }
  var /= n;
  if (!(var >= cfg.heading_floor)) {
    var = cfg.heading_floor;
    was_clamped = true;
  }
  e.mu_h = mh;
  e.sigma_h = var;

  double nq = 0.0;
  for (const auto* o : obs) nq += o->q ? 1.0 : 0.0;
  e.p_q = std::clamp(nq / n, cfg.p_q_floor, 1.0 - cfg.p_q_floor);
  if (was_clamped && clamped) ++*clamped;
  return e;
}

std::vector<Transition> map_row(const std::map<std::uint32_t, double>& counts, double alpha,
                                std::uint32_t self) {
  std::vector<Transition> row;
  double total = 0.0;
  for (const auto& [target, n] : counts) {
    const double w = std::max(0.0, n + alpha - 1.0);
    if (w > 0.0) {
      row.push_back({target, w});
      total += w;
    }
  }
  if (total <= 0.0) return {{self, 1.0}};
  for (auto& t : row) t.prob /= total;
  return row;
}

// Closed-form updates from hard assignments.
void m_step(HmmModel& m, std::span<const Trip> trips, std::span<const Decoding> paths,
            const HmmConfig& cfg, std::size_t* clamped) {
  std::vector<std::vector<const Observation*>> members(m.emissions.size());
  std::vector<std::map<std::uint32_t, double>> counts(m.size());
  std::vector<double> first(m.size(), 0.0);
  for (std::size_t i = 0; i < trips.size(); ++i) {
    const auto& path = paths[i].path;
    for (std::size_t t = 0; t < path.size(); ++t) {
      members[m.emission_of[path[t]]].push_back(&trips[i].obs[t]);
      if (t > 0) counts[path[t - 1]][static_cast<std::uint32_t>(path[t])] += 1.0;
    }
    first[path.front()] += 1.0;
  }
  for (std::size_t r = 0; r < m.emissions.size(); ++r)
    m.emissions[r] = estimate_record(members[r], m.emissions[r], cfg, m.c, clamped);
  for (std::size_t s = 0; s < m.size(); ++s) {
    const auto self = static_cast<std::uint32_t>(s);
    m.trans[s] = m.is_destination(s) ? std::vector<Transition>{{self, 1.0}}
                                     : map_row(counts[s], m.alpha, self);
  }
  double n0 = 0.0;
  for (double f : first) n0 += f;
  for (std::size_t s = 0; s < m.size(); ++s) m.theta0[s] = first[s] / n0;
}

// Keeps the states flagged in `keep`, compacts ids and records, renormalises
// rows and theta0, and remaps `paths` (paths through dropped states are
// cleared).
HmmModel prune_states(const HmmModel& m, const std::vector<bool>& keep, std::vector<Decoding>* paths) {
  const std::size_t N = m.size();
  std::vector<std::int64_t> new_index(N, -1);
  std::vector<std::int64_t> record_index(m.emissions.size(), -1);
  std::map<std::pair<StateKind, int>, int> id_map;  // (kind group, old id) -> new id
  auto group = [](StateKind k) { return k == StateKind::RoadAug ? StateKind::Road : k; };

  HmmModel out;
  out.augmented = m.augmented;
  out.alpha = m.alpha;
  out.c = m.c;
  // Sources, destinations and roads keep their relative order.
  std::vector<int> old_sources, old_roads;
  for (std::size_t s = 0; s < N; ++s) {
    if (!keep[s]) continue;
    const auto g = group(m.states[s].kind);
    if (!id_map.contains({g, m.states[s].index})) {
      const int next = static_cast<int>(std::count_if(id_map.begin(), id_map.end(),
                                                      [&](const auto& kv) { return kv.first.first == g; }));
      id_map[{g, m.states[s].index}] = next;
    }
  }
  // Source ids referenced by RoadAug states must survive too.
  for (std::size_t s = 0; s < N; ++s) {
    if (!keep[s]) continue;
    StateId id = m.states[s];
    id.index = id_map.at({group(id.kind), id.index});
    if (id.kind == StateKind::RoadAug) {
      auto it = id_map.find({StateKind::Source, id.source});
      if (it == id_map.end()) continue;  // its source was pruned
      id.source = it->second;
    }
    new_index[s] = static_cast<std::int64_t>(out.states.size());
    out.states.push_back(id);
    const auto rec = m.emission_of[s];
    if (record_index[rec] < 0) {
      record_index[rec] = static_cast<std::int64_t>(out.emissions.size());
      out.emissions.push_back(m.emissions[rec]);
    }
    out.emission_of.push_back(static_cast<std::uint32_t>(record_index[rec]));
  }
  for (const auto& [key, id] : id_map) {
    if (key.first == StateKind::Source) out.num_sources = std::max(out.num_sources, id + 1);
    if (key.first == StateKind::Destination) out.num_destinations = std::max(out.num_destinations, id + 1);
    if (key.first == StateKind::Road) out.num_roads = std::max(out.num_roads, id + 1);
  }
  // Road records must be 0..R-1 in road order for the tying invariant; the
  // state ordering (roads after sources/destinations) gives location records
  // first, so renumber.
  {
    std::vector<std::int64_t> perm(out.emissions.size(), -1);
    std::size_t next = 0;
    for (std::size_t s = 0; s < out.size(); ++s)
      if (out.is_road(s) && perm[out.emission_of[s]] < 0) perm[out.emission_of[s]] = next++;
    for (std::size_t s = 0; s < out.size(); ++s)
      if (!out.is_road(s) && perm[out.emission_of[s]] < 0) perm[out.emission_of[s]] = next++;
    std::vector<EmissionParams> recs(out.emissions.size());
    for (std::size_t r = 0; r < recs.size(); ++r) recs[perm[r]] = out.emissions[r];
    out.emissions = std::move(recs);
    for (auto& e : out.emission_of) e = static_cast<std::uint32_t>(perm[e]);
  }

  out.theta0.assign(out.size(), 0.0);
  out.trans.resize(out.size());
  double t0 = 0.0;
  for (std::size_t s = 0; s < N; ++s) {
    if (new_index[s] < 0) continue;
    const auto ns = static_cast<std::size_t>(new_index[s]);
    out.theta0[ns] = m.theta0[s];
    t0 += m.theta0[s];
    double total = 0.0;
    for (const auto& tr : m.trans[s])
      if (new_index[tr.target] >= 0) {
        out.trans[ns].push_back({static_cast<std::uint32_t>(new_index[tr.target]), tr.prob});
        total += tr.prob;
      }
    if (total > 0.0) {
      for (auto& tr : out.trans[ns]) tr.prob /= total;
    } else {
      out.trans[ns] = {{static_cast<std::uint32_t>(ns), 1.0}};
    }
    std::sort(out.trans[ns].begin(), out.trans[ns].end(),
              [](const Transition& a, const Transition& b) { return a.target < b.target; });
  }
  if (t0 > 0.0) {
    for (auto& p : out.theta0) p /= t0;
  } else {
    const auto src = out.source_states();
    for (auto s : src) out.theta0[s] = 1.0 / static_cast<double>(src.size());
  }

  if (paths) {
    for (auto& d : *paths) {
      bool ok = true;
      for (auto& s : d.path) {
        if (new_index[s] < 0) {
          ok = false;
          break;
        }
        s = static_cast<std::size_t>(new_index[s]);
      }
      if (!ok) d.path.clear();
    }
  }
  return out;
}

std::vector<Decoding> decode_all(const HmmModel& m, std::span<const Trip> trips, unsigned threads) {
  std::vector<Decoding> out(trips.size());
  parallel_for(trips.size(), threads, [&](std::size_t i) { out[i] = viterbi(m, trips[i]); });
  return out;
}

std::uint64_t edge_key(std::size_t a, std::size_t b) {
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

}  // namespace

std::string to_string(const StateId& s) {
  switch (s.kind) {
    case StateKind::Source: return "S" + std::to_string(s.index);
    case StateKind::Destination: return "D" + std::to_string(s.index);
    case StateKind::Road: return "R" + std::to_string(s.index);
    case StateKind::RoadAug: return "R" + std::to_string(s.index) + "|S" + std::to_string(s.source);
  }
  return "?";
}

void HmmConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("hmm." + field + ": " + why);
  };
  if (!(lambda_pos > 0)) fail("lambda_pos", "must be > 0");
  if (!(heading_scale > 0)) fail("heading_scale", "must be > 0");
  if (!(proximity_scale > 0)) fail("proximity_scale", "must be > 0");
  if (!(alpha > 0 && alpha < 1)) fail("alpha", "must be in (0, 1)");
  if (!(c > 1)) fail("c", "must be > 1");
  if (!(colocation_radius >= 0)) fail("colocation_radius", "must be >= 0");
  if (!(tol >= 0)) fail("tol", "must be >= 0");
  if (!(position_floor > 0) || !(heading_floor > 0)) fail("floors", "must be > 0");
  if (!(p_q_floor > 0 && p_q_floor < 0.5)) fail("p_q_floor", "must be in (0, 0.5)");
}

std::optional<std::size_t> HmmModel::find(const StateId& id) const {
  for (std::size_t s = 0; s < states.size(); ++s)
    if (states[s] == id) return s;
  return std::nullopt;
}

double HmmModel::transition(std::size_t from, std::size_t to) const {
  const auto& row = trans.at(from);
  auto it = std::lower_bound(row.begin(), row.end(), to,
                             [](const Transition& t, std::size_t v) { return t.target < v; });
  return (it != row.end() && it->target == to) ? it->prob : 0.0;
}

std::vector<std::size_t> HmmModel::destination_states() const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < size(); ++s)
    if (is_destination(s)) out.push_back(s);
  return out;
}

std::vector<std::size_t> HmmModel::source_states() const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < size(); ++s)
    if (is_source(s)) out.push_back(s);
  return out;
}

std::size_t HmmModel::nonzero_transitions() const {
  std::size_t n = 0;
  for (const auto& row : trans)
    for (const auto& t : row) n += t.prob > 0.0;
  return n;
}

void HmmModel::check() const {
  const std::size_t N = size();
  if (emission_of.size() != N || theta0.size() != N || trans.size() != N)
    throw std::logic_error("model arrays differ in length");
  for (std::size_t s = 0; s < N; ++s) {
    double total = 0.0;
    std::int64_t last = -1;
    for (const auto& t : trans[s]) {
      if (t.target >= N) throw std::logic_error("transition target out of range");
      if (static_cast<std::int64_t>(t.target) <= last) throw std::logic_error("transition row not sorted");
      if (t.prob < 0.0) throw std::logic_error("negative transition probability");
      last = t.target;
      total += t.prob;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::logic_error("row " + std::to_string(s) + " does not sum to 1");
    if (is_destination(s) && transition(s, s) != 1.0) throw std::logic_error("destination row not absorbing");
    if (emission_of[s] >= emissions.size()) throw std::logic_error("emission record out of range");
    if (states[s].kind == StateKind::RoadAug) {
      if (states[s].source < 0 || states[s].source >= num_sources)
        throw std::logic_error("RoadAug state without valid source");
      if (emission_of[s] != static_cast<std::uint32_t>(states[s].index))
        throw std::logic_error("RoadAug state not tied to its road record");
    }
  }
  double t0 = 0.0;
  for (double p : theta0) t0 += p;
  if (std::abs(t0 - 1.0) > 1e-9) throw std::logic_error("theta0 does not sum to 1");
  for (const auto& e : emissions) {
    if (!(e.p_q >= 0.0 && e.p_q <= 1.0) || !(e.c > 1.0) || !(e.sigma_h > 0.0))
      throw std::logic_error("invalid emission record");
    if (!(e.sigma_r.determinant() > 0.0) || !(e.sigma_r(0, 0) > 0.0))
      throw std::logic_error("position covariance not positive definite");
  }
}

double obs_loglik(const HmmModel& model, std::size_t state, const Observation& obs) {
  const double key = key_loglik(model.states.at(state).kind, obs);
  if (key == kNegInf) return kNegInf;
  return record_loglik(model.emission(state), obs);
}

double path_loglik(const HmmModel& model, const Trip& trip, std::span<const std::size_t> path) {
  if (path.size() != trip.obs.size()) throw std::invalid_argument("path length differs from trip length");
  double ll = std::log(model.theta0.at(path[0])) + obs_loglik(model, path[0], trip.obs[0]);
  for (std::size_t t = 1; t < path.size(); ++t)
    ll += std::log(model.transition(path[t - 1], path[t])) + obs_loglik(model, path[t], trip.obs[t]);
  return ll;
}

Decoding viterbi(const HmmModel& model, const Trip& trip) {
  const std::size_t n = trip.obs.size();
  if (n == 0) throw std::invalid_argument("viterbi: empty trip");
  const Forward f = forward_pass(model, trip, n);
  const std::size_t last = argmax_lowest(f.delta[n - 1]);
  if (f.delta[n - 1][last] == kNegInf)
    throw std::runtime_error("viterbi: trip '" + trip.id + "' has no feasible state sequence");
  Decoding d;
  d.log_likelihood = f.delta[n - 1][last];
  d.path.resize(n);
  d.path[n - 1] = last;
  for (std::size_t t = n - 1; t > 0; --t) d.path[t - 1] = f.back[t][d.path[t]];
  return d;
}

std::vector<std::size_t> viterbi_prefix_states(const HmmModel& model, const Trip& trip, std::size_t n) {
  if (n == 0 || n > trip.obs.size()) throw std::invalid_argument("prefix length out of range");
  const Forward f = forward_pass(model, trip, n);
  std::vector<std::size_t> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    out[t] = argmax_lowest(f.delta[t]);
    if (f.delta[t][out[t]] == kNegInf)
      throw std::runtime_error("trip '" + trip.id + "' prefix of length " + std::to_string(t + 1) +
                               " cannot be decoded");
  }
  return out;
}

HmmModel init_model(std::span<const Trip> trips, const HmmConfig& cfg, bool augmented) {
  cfg.validate();
  if (trips.empty()) throw std::invalid_argument("init_model: no trips");

  std::vector<const Observation*> road_obs, on_obs, off_obs;
  for (const auto& trip : trips)
    for (const auto& o : trip.obs) {
      if (o.k_on) on_obs.push_back(&o);
      else if (o.k_off) off_obs.push_back(&o);
      else road_obs.push_back(&o);
    }
  if (on_obs.empty() || off_obs.empty()) throw std::invalid_argument("init_model: trips lack key events");

  auto positions = [](const std::vector<const Observation*>& obs) {
    Eigen::MatrixXd p(obs.size(), 2);
    for (std::size_t i = 0; i < obs.size(); ++i) p.row(i) = obs[i]->r.transpose();
    return p;
  };

  std::vector<std::vector<const Observation*>> road_members;
  if (!road_obs.empty()) {
    Eigen::MatrixXd feat(road_obs.size(), 3);
    for (std::size_t i = 0; i < road_obs.size(); ++i) {
      feat(i, 0) = road_obs[i]->r.x();
      feat(i, 1) = road_obs[i]->r.y();
      feat(i, 2) = cfg.heading_scale * road_obs[i]->h;
    }
    const auto fit = dp_means_fit(feat, cfg.lambda_pos, cfg.dp_means_iter,
                                  Metric{{2}, kTwoPi * cfg.heading_scale});
    road_members.resize(fit.codebook.size());
    for (std::size_t i = 0; i < road_obs.size(); ++i) road_members[fit.assignment[i]].push_back(road_obs[i]);
  }
  const auto on_fit = dp_means_fit(positions(on_obs), cfg.lambda_pos, cfg.dp_means_iter);
  const auto off_fit = dp_means_fit(positions(off_obs), cfg.lambda_pos, cfg.dp_means_iter);
  const int S = static_cast<int>(on_fit.codebook.size());
  const int D = static_cast<int>(off_fit.codebook.size());
  const int R = static_cast<int>(road_members.size());

  std::vector<std::vector<const Observation*>> on_members(S), off_members(D);
  for (std::size_t i = 0; i < on_obs.size(); ++i) on_members[on_fit.assignment[i]].push_back(on_obs[i]);
  for (std::size_t i = 0; i < off_obs.size(); ++i) off_members[off_fit.assignment[i]].push_back(off_obs[i]);

  // Greedy one-to-one pairing of key-off and key-on clusters by distance.
  std::vector<std::tuple<double, int, int>> pairs;
  for (int d = 0; d < D; ++d)
    for (int s = 0; s < S; ++s) {
      const double dist = (off_fit.codebook.centers.row(d) - on_fit.codebook.centers.row(s)).norm();
      if (dist <= cfg.colocation_radius) pairs.emplace_back(dist, d, s);
    }
  std::sort(pairs.begin(), pairs.end());
  std::vector<int> dest_partner(D, -1), source_partner(S, -1);
  for (const auto& [dist, d, s] : pairs)
    if (dest_partner[d] < 0 && source_partner[s] < 0) {
      dest_partner[d] = s;
      source_partner[s] = d;
    }

  HmmModel m;
  m.augmented = augmented;
  m.alpha = cfg.alpha;
  m.c = cfg.c;
  m.num_sources = S;
  m.num_destinations = D;
  m.num_roads = R;

  const EmissionParams blank{.c = cfg.c};
  for (int r = 0; r < R; ++r) m.emissions.push_back(estimate_record(road_members[r], blank, cfg, cfg.c, nullptr));
  std::vector<std::uint32_t> source_record(S), dest_record(D);
  for (int s = 0; s < S; ++s) {
    auto members = on_members[s];
    if (source_partner[s] >= 0)
      members.insert(members.end(), off_members[source_partner[s]].begin(), off_members[source_partner[s]].end());
    source_record[s] = static_cast<std::uint32_t>(m.emissions.size());
    m.emissions.push_back(estimate_record(members, blank, cfg, cfg.c, nullptr));
  }
  for (int d = 0; d < D; ++d) {
    if (dest_partner[d] >= 0) {
      dest_record[d] = source_record[dest_partner[d]];
    } else {
      dest_record[d] = static_cast<std::uint32_t>(m.emissions.size());
      m.emissions.push_back(estimate_record(off_members[d], blank, cfg, cfg.c, nullptr));
    }
  }

  for (int s = 0; s < S; ++s) {
    m.states.push_back({StateKind::Source, s, -1});
    m.emission_of.push_back(source_record[s]);
  }
  for (int d = 0; d < D; ++d) {
    m.states.push_back({StateKind::Destination, d, -1});
    m.emission_of.push_back(dest_record[d]);
  }
  for (int r = 0; r < R; ++r) {
    if (augmented) {
      for (int s = 0; s < S; ++s) {
        m.states.push_back({StateKind::RoadAug, r, s});
        m.emission_of.push_back(static_cast<std::uint32_t>(r));
      }
    } else {
      m.states.push_back({StateKind::Road, r, -1});
      m.emission_of.push_back(static_cast<std::uint32_t>(r));
    }
  }

  const std::size_t N = m.states.size();
  m.theta0.assign(N, 0.0);
  for (int s = 0; s < S; ++s) m.theta0[s] = 1.0 / S;
  m.trans.resize(N);
  // The source block a state belongs to (augmented model only).
  auto block = [&](std::size_t s) {
    const auto& id = m.states[s];
    if (id.kind == StateKind::Source) return id.index;
    if (id.kind == StateKind::RoadAug) return id.source;
    return -1;
  };
  for (std::size_t i = 0; i < N; ++i) {
    if (m.is_destination(i)) {
      m.trans[i] = {{static_cast<std::uint32_t>(i), 1.0}};
      continue;
    }
    const Vec2& mi = m.emission(i).mu_r;
    double total = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      if (m.is_source(j)) continue;
      if (augmented && m.is_road(j) && block(j) != block(i)) continue;
      const double w = std::exp(-(mi - m.emission(j).mu_r).norm() / cfg.proximity_scale);
      if (w > 0.0) {
        m.trans[i].push_back({static_cast<std::uint32_t>(j), w});
        total += w;
      }
    }
    for (auto& t : m.trans[i]) t.prob /= total;
  }
  return m;
}

double em_objective(const HmmModel& model, std::span<const Trip> trips, std::span<const Decoding> paths) {
  double ll = 0.0;
  std::unordered_map<std::uint64_t, bool> used;
  for (std::size_t i = 0; i < trips.size(); ++i) {
    ll += path_loglik(model, trips[i], paths[i].path);
    for (std::size_t t = 1; t < paths[i].path.size(); ++t)
      used[edge_key(paths[i].path[t - 1], paths[i].path[t])] = true;
  }
  std::vector<std::uint64_t> keys;
  for (const auto& [k, v] : used) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  double prior = 0.0;
  for (auto k : keys) prior += std::log(model.transition(k >> 32, k & 0xffffffffULL));
  return ll + (model.alpha - 1.0) * prior;
}

EmFit em_fit(const HmmModel& init, std::span<const Trip> trips, const HmmConfig& cfg) {
  cfg.validate();
  if (trips.empty()) throw std::invalid_argument("em_fit: no trips");
  EmFit fit;
  HmmModel model = init;
  model.alpha = cfg.alpha;
  model.c = cfg.c;
  for (auto& e : model.emissions) e.c = cfg.c;
  std::size_t clamped = 0;

  // Warm-up: decode, drop unused states and under-populated road records,
  // repeat until the state set is stable.
  std::vector<Decoding> paths;
  for (int round = 0;; ++round) {
    paths = decode_all(model, trips, cfg.threads);
    std::vector<std::size_t> state_obs(model.size(), 0), record_obs(model.emissions.size(), 0);
    for (const auto& d : paths)
      for (auto s : d.path) {
        ++state_obs[s];
        ++record_obs[model.emission_of[s]];
      }
    std::vector<bool> keep(model.size(), true);
    bool any = false;
    for (std::size_t s = 0; s < model.size(); ++s) {
      const bool thin_road = model.is_road(s) && record_obs[model.emission_of[s]] < cfg.min_record_obs;
      if (state_obs[s] == 0 || thin_road) {
        keep[s] = false;
        any = true;
      }
    }
    if (!any || round >= 20) break;
    model = prune_states(model, keep, nullptr);
  }
  m_step(model, trips, paths, cfg, &clamped);
  double J = em_objective(model, trips, paths);
  fit.objective.push_back(J);

  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    const auto candidates = decode_all(model, trips, cfg.threads);

    std::unordered_map<std::uint64_t, int> usage;
    for (const auto& d : paths)
      for (std::size_t t = 1; t < d.path.size(); ++t) ++usage[edge_key(d.path[t - 1], d.path[t])];

    bool changed = false;
    for (std::size_t i = 0; i < trips.size(); ++i) {
      if (candidates[i].path == paths[i].path) continue;
      const double old_ll = path_loglik(model, trips[i], paths[i].path);
      double delta = candidates[i].log_likelihood - old_ll;
      double prior_delta = 0.0;
      const auto& oldp = paths[i].path;
      const auto& newp = candidates[i].path;
      for (std::size_t t = 1; t < oldp.size(); ++t) --usage[edge_key(oldp[t - 1], oldp[t])];
      for (std::size_t t = 1; t < newp.size(); ++t) ++usage[edge_key(newp[t - 1], newp[t])];
      // Entries whose usage crossed zero change the prior term.
      std::unordered_map<std::uint64_t, bool> seen;
      auto account = [&](std::size_t a, std::size_t b) {
        const auto k = edge_key(a, b);
        if (seen[k]) return;
        seen[k] = true;
        const int now = usage[k];
        int before = now;
        for (std::size_t t = 1; t < oldp.size(); ++t) before += edge_key(oldp[t - 1], oldp[t]) == k;
        for (std::size_t t = 1; t < newp.size(); ++t) before -= edge_key(newp[t - 1], newp[t]) == k;
        const double lt = std::log(model.transition(a, b));
        if (before > 0 && now == 0) prior_delta -= lt;
        if (before == 0 && now > 0) prior_delta += lt;
      };
      for (std::size_t t = 1; t < oldp.size(); ++t) account(oldp[t - 1], oldp[t]);
      for (std::size_t t = 1; t < newp.size(); ++t) account(newp[t - 1], newp[t]);
      delta += (model.alpha - 1.0) * prior_delta;
      if (delta > 0.0) {
        paths[i] = candidates[i];
        changed = true;
      } else {
        for (std::size_t t = 1; t < newp.size(); ++t) --usage[edge_key(newp[t - 1], newp[t])];
        for (std::size_t t = 1; t < oldp.size(); ++t) ++usage[edge_key(oldp[t - 1], oldp[t])];
      }
    }

    std::vector<std::size_t> state_obs(model.size(), 0);
    for (const auto& d : paths)
      for (auto s : d.path) ++state_obs[s];
    std::vector<bool> keep(model.size());
    bool prune = false;
    for (std::size_t s = 0; s < model.size(); ++s) {
      keep[s] = state_obs[s] > 0;
      prune |= !keep[s];
    }
    if (prune) model = prune_states(model, keep, &paths);

    m_step(model, trips, paths, cfg, &clamped);
    const double J_new = em_objective(model, trips, paths);
    fit.objective.push_back(J_new);
    fit.iterations = it + 1;
    const bool small = std::abs(J_new - J) <= cfg.tol * std::abs(J);
    J = J_new;
    if (!changed || small) {
      fit.converged = true;
      break;
    }
  }
  for (auto& d : paths) d.log_likelihood = 0.0;
  for (std::size_t i = 0; i < trips.size(); ++i)
    paths[i].log_likelihood = path_loglik(model, trips[i], paths[i].path);
  if (clamped > 0)
    fit.warnings.push_back("degenerate covariance clamped to floor " + std::to_string(clamped) + " time(s)");
  fit.model = std::move(model);
  fit.paths = std::move(paths);
  return fit;
}

HmmModel augment_with_source(const HmmModel& plain, std::span<const Trip> trips, const HmmConfig& cfg) {
  if (plain.augmented) throw std::invalid_argument("augment_with_source: model is already augmented");
  const int S = plain.num_sources, D = plain.num_destinations, R = plain.num_roads;
  HmmModel m;
  m.augmented = true;
  m.alpha = cfg.alpha;
  m.c = plain.c;
  m.num_sources = S;
  m.num_destinations = D;
  m.num_roads = R;
  m.emissions = plain.emissions;

  std::vector<std::size_t> plain_of;  // augmented state -> plain state
  for (std::size_t s = 0; s < plain.size(); ++s)
    if (!plain.is_road(s)) {
      m.states.push_back(plain.states[s]);
      m.emission_of.push_back(plain.emission_of[s]);
      plain_of.push_back(s);
    }
  std::vector<std::size_t> road_plain(R);
  for (std::size_t s = 0; s < plain.size(); ++s)
    if (plain.is_road(s)) road_plain[plain.states[s].index] = s;
  const std::size_t road_base = m.states.size();
  for (int r = 0; r < R; ++r)
    for (int s = 0; s < S; ++s) {
      m.states.push_back({StateKind::RoadAug, r, s});
      m.emission_of.push_back(plain.emission_of[road_plain[r]]);
      plain_of.push_back(road_plain[r]);
    }
  std::vector<std::size_t> non_road_index(plain.size(), 0);
  for (std::size_t a = 0; a < road_base; ++a) non_road_index[plain_of[a]] = a;

  const auto paths = decode_all(plain, trips, cfg.threads);
  std::vector<std::map<std::uint32_t, double>> counts(m.size());
  for (const auto& d : paths) {
    const int source = plain.states[d.path.front()].index;
    auto lift = [&](std::size_t ps) {
      if (!plain.is_road(ps)) return non_road_index[ps];
      return road_base + static_cast<std::size_t>(plain.states[ps].index) * S + source;
    };
    for (std::size_t t = 1; t < d.path.size(); ++t)
      counts[lift(d.path[t - 1])][static_cast<std::uint32_t>(lift(d.path[t]))] += 1.0;
  }
  m.trans.resize(m.size());
  for (std::size_t s = 0; s < m.size(); ++s) {
    const auto self = static_cast<std::uint32_t>(s);
    m.trans[s] = m.is_destination(s) ? std::vector<Transition>{{self, 1.0}} : map_row(counts[s], m.alpha, self);
  }
  m.theta0.assign(m.size(), 0.0);
  for (std::size_t a = 0; a < road_base; ++a) m.theta0[a] = plain.theta0[plain_of[a]];
  return m;
}

Corpus extract_corpus(const HmmModel& model, std::span<const Trip> trips, const Vocabulary& vocab,
                      unsigned threads) {
  for (const auto& trip : trips)
    if (trip.signals.size() != trip.obs.size())
      throw std::invalid_argument("trip '" + trip.id + "' has a signal stream of length " +
                                  std::to_string(trip.signals.size()) + " for " +
                                  std::to_string(trip.obs.size()) + " observations");
  const auto paths = decode_all(model, trips, threads);
  Corpus corpus;
  corpus.vocab_size = vocab.size();
  corpus.docs.resize(model.num_roads);
  for (int r = 0; r < model.num_roads; ++r) corpus.docs[r].road = r;
  for (std::size_t i = 0; i < trips.size(); ++i)
    for (std::size_t t = 0; t < trips[i].obs.size(); ++t) {
      const int r = model.road_of(paths[i].path[t]);
      if (r < 0) continue;
      const auto& sig = trips[i].signals[t];
      corpus.docs[r].words.push_back(vocab.encode(sig.velocity, sig.hour).flat);
    }
  return corpus;
}

}  // namespace roadtopics
