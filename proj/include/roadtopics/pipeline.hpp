#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "roadtopics/hdp.hpp"
#include "roadtopics/hmm.hpp"
#include "roadtopics/trips.hpp"

namespace roadtopics {

/// Invalid configuration value; the message names the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A stage ran before the stage that produces one of its inputs.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  // [paths]
  std::filesystem::path trips;       // empty: the synth stage's training trips
  std::filesystem::path test_trips;  // empty: the synth stage's test trips
  std::filesystem::path out = "out";
  // [run]
  std::uint64_t seed = 7;
  unsigned threads = 1;
  // [synth]
  WorldConfig world;
  std::size_t train_trips = 300;
  std::size_t held_out_trips = 40;
  // [hmm]
  HmmConfig hmm;
  bool augmented = true;
  // [predict]
  std::string route_from;  // state label such as "S0"; empty picks a default
  std::string route_to;
  double fraction = 0.1;
  double radius = 30.0;
  // [quantize]
  double lambda_v = 2.0;
  double lambda_t = 1.5;
  // [hdp]
  HdpHyper hdp;
  std::size_t hdp_iters = 200;
  std::size_t K0 = 1;
  // [eval]
  double ratio = 0.5;
  std::size_t snapshots = 10;
  std::size_t stride = 10;
  std::size_t heldout_every = 10;
  double baseline_prior = 0.5;
  std::size_t burn_in = 50;
  std::size_t samples = 20;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  /// Canonical JSON text of every setting (the output directory excluded).
  std::string canonical() const;
  /// FNV-1a hash of canonical(), as 16 hex digits.
  std::string hash() const;
};

/// Reads a TOML-style file of `key = value` lines grouped in [sections].
/// Unknown sections or keys are rejected.
PipelineConfig load_config(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string file_hash(const std::filesystem::path& path);

/// Seed of a stage, derived from the run seed.
std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage);

struct StageResult {
  std::string stage;
  std::vector<std::filesystem::path> artifacts;
  std::vector<std::string> messages;
};

const std::vector<std::string>& stage_names();

/// Runs one subcommand, writes its artifacts into config.out and records
/// them in manifest.json.
StageResult run_stage(const std::string& stage, const PipelineConfig& config);

}  // namespace roadtopics
