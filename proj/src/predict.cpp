#include "roadtopics/predict.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include <Eigen/LU>

#include "roadtopics/parallel.hpp"

namespace roadtopics {

RoutePrediction most_likely_route(const HmmModel& model, std::size_t a, std::size_t b) {
  const std::size_t N = model.size();
  if (a >= N || b >= N) throw std::invalid_argument("most_likely_route: unknown state");
  if (a == b) throw std::invalid_argument("most_likely_route: source equals target");
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  std::vector<double> dist(N, inf);
  std::vector<std::size_t> pred(N, none);
  std::vector<bool> done(N, false);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[a] = 0.0;
  heap.push({0.0, a});
  while (!heap.empty()) {
    const auto [d, u] = heap.top();
    heap.pop();
    if (done[u]) continue;
    done[u] = true;
    if (u == b) break;
    for (const auto& tr : model.trans[u]) {
      if (tr.prob <= 0.0 || tr.target == u) continue;
      const double w = -std::log(tr.prob);
      if (w < 0.0) throw std::logic_error("negative edge weight: transition probability above 1");
      const std::size_t v = tr.target;
      if (done[v]) continue;
      const double nd = d + w;
      if (nd < dist[v] || (nd == dist[v] && u < pred[v])) {
        dist[v] = nd;
        pred[v] = u;
        heap.push({nd, v});
      }
    }
  }
  if (dist[b] == inf)
    throw std::runtime_error("no route from " + to_string(model.states[a]) + " to " + to_string(model.states[b]));
  RoutePrediction out;
  for (std::size_t v = b; v != none; v = pred[v]) out.path.push_back(v);
  std::reverse(out.path.begin(), out.path.end());
  for (std::size_t i = 1; i < out.path.size(); ++i)
    out.log_prob += std::log(model.transition(out.path[i - 1], out.path[i]));
  return out;
}

std::optional<std::size_t> AbsorptionTable::column_of(std::size_t state) const {
  for (std::size_t j = 0; j < destinations.size(); ++j)
    if (destinations[j] == state) return j;
  return std::nullopt;
}

AbsorptionTable absorption_table(const HmmModel& model, unsigned threads, std::size_t dense_limit) {
  const std::size_t N = model.size();
  AbsorptionTable out;
  out.destinations = model.destination_states();
  if (out.destinations.empty()) throw std::invalid_argument("absorption_table: model has no destination");
  const std::size_t D = out.destinations.size();
  out.a = Eigen::MatrixXd::Zero(N, D);
  out.residual = Eigen::VectorXd::Ones(N);

  // States that can reach a destination, by reverse search.
  std::vector<std::vector<std::size_t>> reverse(N);
  for (std::size_t i = 0; i < N; ++i)
    for (const auto& t : model.trans[i])
      if (t.prob > 0.0) reverse[t.target].push_back(i);
  std::vector<bool> reaches(N, false);
  std::vector<std::size_t> stack = out.destinations;
  for (auto d : stack) reaches[d] = true;
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    for (auto u : reverse[v])
      if (!reaches[u]) {
        reaches[u] = true;
        stack.push_back(u);
      }
  }

  std::vector<std::int64_t> col(N, -1);
  for (std::size_t j = 0; j < D; ++j) col[out.destinations[j]] = static_cast<std::int64_t>(j);
  std::vector<std::size_t> transient;
  std::vector<std::int64_t> tindex(N, -1);
  for (std::size_t i = 0; i < N; ++i)
    if (col[i] < 0 && reaches[i]) {
      tindex[i] = static_cast<std::int64_t>(transient.size());
      transient.push_back(i);
    }
  const std::size_t T = transient.size();

  // Right-hand sides: one column per destination plus the never-absorbed
  // mass (leak out of the row and steps into states that cannot reach a
  // destination).
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(T, D + 1);
  for (std::size_t ti = 0; ti < T; ++ti) {
    const auto i = transient[ti];
    double total = 0.0;
    for (const auto& t : model.trans[i]) {
      total += t.prob;
      if (col[t.target] >= 0) rhs(ti, col[t.target]) += t.prob;
      else if (!reaches[t.target]) rhs(ti, D) += t.prob;
    }
    rhs(ti, D) += std::max(0.0, 1.0 - total);
  }

  Eigen::MatrixXd x(T, D + 1);
  if (T == 0) {
  } else if (T < dense_limit) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(T, T);
    for (std::size_t ti = 0; ti < T; ++ti)
      for (const auto& t : model.trans[transient[ti]])
        if (tindex[t.target] >= 0) A(ti, tindex[t.target]) -= t.prob;
    x = A.partialPivLu().solve(rhs);
  } else {
    parallel_for(D + 1, threads, [&](std::size_t c) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(T);
      for (std::size_t sweep = 0;; ++sweep) {
        if (sweep >= 100000) throw std::runtime_error("absorption_table: Gauss-Seidel did not converge");
        double change = 0.0;
        for (std::size_t ti = 0; ti < T; ++ti) {
          double s = rhs(ti, c), diag = 1.0;
          for (const auto& t : model.trans[transient[ti]]) {
            const auto k = tindex[t.target];
            if (k < 0) continue;
            if (static_cast<std::size_t>(k) == ti) diag -= t.prob;
            else s += t.prob * v(k);
          }
          const double nv = s / diag;
          change = std::max(change, std::abs(nv - v(ti)));
          v(ti) = nv;
        }
        if (change < 1e-10) break;
      }
      x.col(c) = v;
    });
  }

  for (std::size_t ti = 0; ti < T; ++ti) {
    for (std::size_t j = 0; j < D; ++j) out.a(transient[ti], j) = std::clamp(x(ti, j), 0.0, 1.0);
    out.residual(transient[ti]) = std::clamp(x(ti, D), 0.0, 1.0);
  }
  for (std::size_t j = 0; j < D; ++j) {
    out.a(out.destinations[j], j) = 1.0;
    out.residual(out.destinations[j]) = 0.0;
  }
  return out;
}

std::vector<DestinationEstimate> track_destinations(const HmmModel& model, const AbsorptionTable& table,
                                                    const Trip& trip, std::size_t n) {
  if (n == 0) n = trip.obs.size();
  const auto states = viterbi_prefix_states(model, trip, n);
  std::vector<DestinationEstimate> out;
  out.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    DestinationEstimate e;
    e.step = t + 1;
    e.state = states[t];
    e.probs.resize(table.destinations.size());
    for (std::size_t j = 0; j < e.probs.size(); ++j) e.probs[j] = table.a(states[t], j);
    e.residual = table.residual(states[t]);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::optional<std::size_t>> most_likely_destination_per_state(const AbsorptionTable& table) {
  std::vector<std::optional<std::size_t>> out(table.a.rows());
  for (Eigen::Index i = 0; i < table.a.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < table.a.cols(); ++j)
      if (table.a(i, j) > table.a(i, best)) best = j;
    if (table.a(i, best) > 0.0) out[i] = table.destinations[best];
  }
  return out;
}

std::size_t prefix_length(std::size_t trip_length, double fraction) {
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(trip_length)));
  return std::min(trip_length, std::max<std::size_t>(2, n));
}

EarlyPrediction predict_after_fraction(const HmmModel& model, const AbsorptionTable& table, const Trip& trip,
                                       const Vec2& true_position, double fraction, double radius) {
  EarlyPrediction p;
  p.prefix = prefix_length(trip.obs.size(), fraction);
  const auto track = track_destinations(model, table, trip, p.prefix);
  const auto& last = track.back();
  std::size_t best = 0;
  for (std::size_t j = 0; j < last.probs.size(); ++j) {
    if (last.probs[j] > last.probs[best]) best = j;
    if ((model.emission(table.destinations[j]).mu_r - true_position).norm() <= radius)
      p.true_probability += last.probs[j];
  }
  if (last.probs[best] > 0.0) {
    p.predicted = table.destinations[best];
    p.correct = (model.emission(*p.predicted).mu_r - true_position).norm() <= radius;
  }
  return p;
}

}  // namespace roadtopics
