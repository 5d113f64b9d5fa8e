#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "roadtopics/corpus.hpp"

namespace roadtopics {

/// Distance used by DP-means: Euclidean, except that the listed dimensions
/// live on a circle of circumference `period` (time of day, heading).
struct Metric {
  std::vector<std::size_t> circular_dims;
  double period = 24.0;

  bool is_circular(std::size_t dim) const;
  double squared_distance(std::span<const double> a, std::span<const double> b) const;
};

struct Codebook {
  double lambda = 0.0;
  Metric metric;
  Eigen::MatrixXd centers;  // K x d, one center per row

  std::size_t size() const { return static_cast<std::size_t>(centers.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(centers.cols()); }
  /// Nearest center, ties to the lowest index. Throws on dimension mismatch.
  std::size_t assign(std::span<const double> point) const;
  std::size_t assign(double scalar) const;
};

struct DpMeansFit {
  Codebook codebook;
  std::vector<std::size_t> assignment;
  /// Objective sum ||x - c(x)||^2 + lambda^2 K: entry 0 is the single
  /// global-mean cluster, then one entry per sweep.
  std::vector<double> objective;
  std::size_t sweeps = 0;
  bool converged = false;
};

/// DP-means (hard small-variance DP mixture): starts from one cluster at the
/// global mean and sweeps the points in order, opening a cluster at any point
/// whose squared distance to every center exceeds lambda^2. Centers are then
/// recomputed (circular least-squares mean on circular dimensions) and empty
/// clusters deleted. Stops when no assignment changes or after max_iter sweeps.
DpMeansFit dp_means_fit(const Eigen::MatrixXd& points, double lambda, std::size_t max_iter = 100,
                        const Metric& metric = {});
Codebook dp_means(const Eigen::MatrixXd& points, double lambda, std::size_t max_iter = 100,
                  const Metric& metric = {});

/// Point on the circle [0, period) minimising the summed squared arc distance.
double circular_mean(std::span<const double> values, std::span<const double> weights,
                     double period);
double circular_mean(std::span<const double> values, double period);
/// Signed arc difference a - b wrapped into [-period/2, period/2).
double circular_diff(double a, double b, double period);

struct WordId {
  std::uint32_t v_bin = 0;
  std::uint32_t t_bin = 0;
  WordIndex flat = 0;
};

/// Product vocabulary of per-signal codebooks: flat = v_bin * T + t_bin.
struct Vocabulary {
  Codebook velocity;
  Codebook time;

  std::size_t v_count() const { return velocity.size(); }
  std::size_t t_count() const { return time.size(); }
  std::size_t size() const { return v_count() * t_count(); }
  WordId encode(double velocity_mps, double hour) const;
  WordId decode(WordIndex flat) const;
  WordId from_bins(std::uint32_t v_bin, std::uint32_t t_bin) const;
};

/// Clusters velocities (linear) and time of day (circular, 24 h) separately;
/// bins are relabelled so center values increase with the bin index.
Vocabulary build_vocab(std::span<const double> velocities, std::span<const double> hours,
                       double lambda_v = 2.0, double lambda_t = 1.5, std::size_t max_iter = 100);

void save_codebook(const std::filesystem::path& path, const Codebook& cb);
Codebook load_codebook(const std::filesystem::path& path);

}  // namespace roadtopics
