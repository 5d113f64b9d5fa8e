#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace roadtopics {

using WordIndex = std::uint32_t;

/// Bag of words attached to one road segment.
struct Document {
  std::int64_t road = -1;
  std::vector<WordIndex> words;
};

struct Corpus {
  std::size_t vocab_size = 0;
  std::vector<Document> docs;

  std::size_t total_words() const;
  /// Word counts of document `d`, length vocab_size.
  std::vector<std::size_t> counts(std::size_t d) const;
  /// Throws std::invalid_argument if any word is out of the vocabulary.
  void check() const;
};

void save_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& path);

/// Planted topic structure used as ground truth for the topic model.
struct SyntheticCorpusTruth {
  std::size_t k_true = 0;
  std::vector<std::vector<double>> topics;        // k_true x V
  std::vector<std::vector<double>> doc_mixtures;  // D x k_true
  std::vector<std::size_t> doc_sizes;

  std::size_t vocab_size() const { return topics.empty() ? 0 : topics[0].size(); }
};

struct PlantedCorpusConfig {
  std::size_t k = 10;
  std::size_t vocab = 50;
  std::size_t docs = 200;
  /// Symmetric Dirichlet concentration of each planted topic.
  double topic_concentration = 0.05;
  /// Document mixtures are Dirichlet(doc_concentration * global weights), the
  /// finite form of the document-level draw around the global weights.
  double doc_concentration = 0.3;
  /// Pareto tail exponent and minimum for document sizes.
  double size_exponent = 1.5;
  std::size_t min_size = 6;
  std::size_t max_size = 2000;
};

/// Draws power-law document sizes: floor(min * U^(-1/exponent)), capped.
std::vector<std::size_t> power_law_sizes(std::size_t n, double exponent,
                                         std::size_t min_size,
                                         std::size_t max_size, std::uint64_t seed);

SyntheticCorpusTruth make_planted_truth(const PlantedCorpusConfig& config,
                                        std::uint64_t seed);

/// Document d receives doc_sizes[d] words, each drawn by first picking a
/// topic from doc_mixtures[d] and then a word from that topic.
Corpus sample_corpus(const SyntheticCorpusTruth& truth, std::uint64_t seed);

}  // namespace roadtopics
