#include <iostream>

#include "CLI11.hpp"
#include "roadtopics/pipeline.hpp"

int main(int argc, char** argv) {
  using namespace roadtopics;
  CLI::App app{"Personal road network HMM and road-signal HDP pipeline"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "Pipeline config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override run.seed");
  app.add_option("--threads", threads, "Override run.threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Override paths.out");
  for (const auto& name : stage_names()) app.add_subcommand(name, "Run the '" + name + "' stage");
  app.fallthrough();

  CLI11_PARSE(app, argc, argv);
  try {
    PipelineConfig config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (seed) config.seed = *seed;
    if (threads) config.threads = *threads;
    if (out) config.out = *out;
    const auto result = run_stage(app.get_subcommands().front()->get_name(), config);
    for (const auto& m : result.messages) std::cout << m << '\n';
    for (const auto& a : result.artifacts) std::cout << "wrote " << a.string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  } catch (const MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
