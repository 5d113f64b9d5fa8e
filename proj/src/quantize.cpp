#include "roadtopics/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace roadtopics {

using nlohmann::json;

bool Metric::is_circular(std::size_t dim) const {
  return std::find(circular_dims.begin(), circular_dims.end(), dim) != circular_dims.end();
}

double circular_diff(double a, double b, double period) {
  double d = std::fmod(a - b, period);
  if (d < -0.5 * period) d += period;
  if (d >= 0.5 * period) d -= period;
  return d;
}

double Metric::squared_distance(std::span<const double> a, std::span<const double> b) const {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = is_circular(i) ? circular_diff(a[i], b[i], period) : a[i] - b[i];
    s += d * d;
  }
  return s;
}

double circular_mean(std::span<const double> values, std::span<const double> weights,
                     double period) {
  if (values.empty()) throw std::invalid_argument("circular_mean of empty set");
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::fmod(values[i], period);
    if (x[i] < 0) x[i] += period;
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });

  // Cutting the circle before the c-th smallest value and shifting the
  // values below the cut up by one period gives a linear problem whose mean
  // is a candidate; the smallest candidate cost is the circular optimum.
  double W = 0.0, S1 = 0.0, S2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    W += w;
    S1 += w * x[i];
    S2 += w * x[i] * x[i];
  }
  if (!(W > 0.0)) throw std::invalid_argument("circular_mean: non-positive total weight");
  double best_cost = std::numeric_limits<double>::infinity();
  double best_mean = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double m = S1 / W;
    const double cost = S2 - W * m * m;
    if (cost < best_cost - 1e-12 * std::max(1.0, std::abs(best_cost))) {
      best_cost = cost;
      best_mean = m;
    }
    const std::size_t i = order[c];
    const double w = weights.empty() ? 1.0 : weights[i];
    const double y = x[i];
    S1 += w * period;
    S2 += w * ((y + period) * (y + period) - y * y);
  }
  best_mean = std::fmod(best_mean, period);
  if (best_mean < 0) best_mean += period;
  return best_mean;
}

double circular_mean(std::span<const double> values, double period) {
  return circular_mean(values, {}, period);
}

namespace {

std::span<const double> row_span(const Eigen::MatrixXd& m, Eigen::Index r, std::vector<double>& buf) {
  buf.resize(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) buf[c] = m(r, c);
  return buf;
}

Eigen::RowVectorXd cluster_mean(const Eigen::MatrixXd& points, const std::vector<std::size_t>& members,
                                const Metric& metric) {
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(points.cols());
  std::vector<double> column;
  for (Eigen::Index d = 0; d < points.cols(); ++d) {
    if (metric.is_circular(static_cast<std::size_t>(d))) {
      column.clear();
      for (auto i : members) column.push_back(points(i, d));
      mean(d) = circular_mean(column, metric.period);
    } else {
      double s = 0.0;
      for (auto i : members) s += points(i, d);
      mean(d) = s / static_cast<double>(members.size());
    }
  }
  return mean;
}

}  // namespace

std::size_t Codebook::assign(std::span<const double> point) const {
  if (point.size() != dim())
    throw std::invalid_argument("assign: point has dimension " + std::to_string(point.size()) +
                                ", codebook has " + std::to_string(dim()));
  if (size() == 0) throw std::logic_error("assign: empty codebook");
  std::vector<double> buf;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < size(); ++k) {
    const double d = metric.squared_distance(point, row_span(centers, k, buf));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::size_t Codebook::assign(double scalar) const { return assign(std::span<const double>(&scalar, 1)); }

DpMeansFit dp_means_fit(const Eigen::MatrixXd& points, double lambda, std::size_t max_iter,
                        const Metric& metric) {
  if (points.rows() == 0) throw std::invalid_argument("dp_means: empty input");
  if (!(lambda > 0.0)) throw std::invalid_argument("dp_means: lambda must be > 0");
  const std::size_t n = points.rows();
  const double penalty = lambda * lambda;

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<Eigen::RowVectorXd> centers{cluster_mean(points, all, metric)};
  DpMeansFit fit;
  fit.assignment.assign(n, 0);

  std::vector<double> pbuf, cbuf;
  auto dist = [&](std::size_t i, const Eigen::RowVectorXd& c) {
    row_span(points, i, pbuf);
    cbuf.assign(c.data(), c.data() + c.size());
    return metric.squared_distance(pbuf, cbuf);
  };
  auto objective = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += dist(i, centers[fit.assignment[i]]);
    return s + penalty * static_cast<double>(centers.size());
  };
  fit.objective.push_back(objective());

  for (std::size_t sweep = 0; sweep < max_iter; ++sweep) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = dist(i, centers[k]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (best_d > penalty) {
        centers.push_back(points.row(i));
        best = centers.size() - 1;
      }
      if (best != fit.assignment[i]) {
        fit.assignment[i] = best;
        changed = true;
      }
    }

    std::vector<std::vector<std::size_t>> members(centers.size());
    for (std::size_t i = 0; i < n; ++i) members[fit.assignment[i]].push_back(i);
    std::vector<std::size_t> remap(centers.size(), 0);
    std::vector<Eigen::RowVectorXd> kept;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (members[k].empty()) continue;
      remap[k] = kept.size();
      kept.push_back(cluster_mean(points, members[k], metric));
    }
    centers = std::move(kept);
    for (auto& a : fit.assignment) a = remap[a];

    fit.objective.push_back(objective());
    fit.sweeps = sweep + 1;
    if (!changed) {
      fit.converged = true;
      break;
    }
  }

  fit.codebook.lambda = lambda;
  fit.codebook.metric = metric;
  fit.codebook.centers.resize(centers.size(), points.cols());
  for (std::size_t k = 0; k < centers.size(); ++k) fit.codebook.centers.row(k) = centers[k];
  return fit;
}

Codebook dp_means(const Eigen::MatrixXd& points, double lambda, std::size_t max_iter,
                  const Metric& metric) {
  return dp_means_fit(points, lambda, max_iter, metric).codebook;
}

namespace {

Codebook sorted_1d(Codebook cb) {
  std::vector<double> c(cb.centers.data(), cb.centers.data() + cb.centers.rows());
  std::sort(c.begin(), c.end());
  for (std::size_t k = 0; k < c.size(); ++k) cb.centers(k, 0) = c[k];
  return cb;
}

}  // namespace

Vocabulary build_vocab(std::span<const double> velocities, std::span<const double> hours,
                       double lambda_v, double lambda_t, std::size_t max_iter) {
  if (velocities.empty() || hours.empty()) throw std::invalid_argument("build_vocab: empty input");
  Eigen::MatrixXd v(velocities.size(), 1), t(hours.size(), 1);
  for (std::size_t i = 0; i < velocities.size(); ++i) v(i, 0) = velocities[i];
  for (std::size_t i = 0; i < hours.size(); ++i) t(i, 0) = hours[i];
  Vocabulary vocab;
  vocab.velocity = sorted_1d(dp_means(v, lambda_v, max_iter));
  vocab.time = sorted_1d(dp_means(t, lambda_t, max_iter, Metric{{0}, 24.0}));
  return vocab;
}

WordId Vocabulary::from_bins(std::uint32_t v_bin, std::uint32_t t_bin) const {
  if (v_bin >= v_count() || t_bin >= t_count()) throw std::out_of_range("bin outside vocabulary");
  return {v_bin, t_bin, static_cast<WordIndex>(v_bin * t_count() + t_bin)};
}

WordId Vocabulary::encode(double velocity_mps, double hour) const {
  return from_bins(static_cast<std::uint32_t>(velocity.assign(velocity_mps)),
                   static_cast<std::uint32_t>(time.assign(hour)));
}

WordId Vocabulary::decode(WordIndex flat) const {
  if (flat >= size()) throw std::out_of_range("word outside vocabulary");
  return {static_cast<std::uint32_t>(flat / t_count()), static_cast<std::uint32_t>(flat % t_count()), flat};
}

void save_codebook(const std::filesystem::path& path, const Codebook& cb) {
  json centers = json::array();
  for (Eigen::Index k = 0; k < cb.centers.rows(); ++k) {
    json row = json::array();
    for (Eigen::Index d = 0; d < cb.centers.cols(); ++d) row.push_back(cb.centers(k, d));
    centers.push_back(std::move(row));
  }
  json j = {{"lambda", cb.lambda},
            {"centers", std::move(centers)},
            {"circular_dims", cb.metric.circular_dims},
            {"period", cb.metric.period}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write codebook " + path.string());
  out << j.dump() << '\n';
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open codebook " + path.string());
  const json j = json::parse(in);
  Codebook cb;
  cb.lambda = j.at("lambda").get<double>();
  cb.metric.circular_dims = j.value("circular_dims", std::vector<std::size_t>{});
  cb.metric.period = j.value("period", 24.0);
  const auto rows = j.at("centers").get<std::vector<std::vector<double>>>();
  const std::size_t d = rows.empty() ? 0 : rows[0].size();
  cb.centers.resize(rows.size(), d);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].size() != d) throw std::runtime_error("codebook rows differ in dimension");
    for (std::size_t c = 0; c < d; ++c) cb.centers(k, c) = rows[k][c];
  }
  return cb;
}

}  // namespace roadtopics
