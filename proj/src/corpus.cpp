#include "roadtopics/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "roadtopics/random.hpp"

namespace roadtopics {

using nlohmann::json;

std::size_t Corpus::total_words() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.words.size();
  return n;
}

std::vector<std::size_t> Corpus::counts(std::size_t d) const {
  std::vector<std::size_t> c(vocab_size, 0);
  for (WordIndex w : docs.at(d).words) ++c.at(w);
  return c;
}

void Corpus::check() const {
  for (const auto& d : docs)
    for (WordIndex w : d.words)
      if (w >= vocab_size)
        throw std::invalid_argument("word " + std::to_string(w) + " outside vocabulary of size " +
                                    std::to_string(vocab_size));
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  json j;
  j["format_version"] = 1;
  j["vocab_size"] = corpus.vocab_size;
  json docs = json::array();
  for (const auto& d : corpus.docs) docs.push_back({{"road", d.road}, {"words", d.words}});
  j["documents"] = std::move(docs);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus " + path.string());
  out << j.dump() << '\n';
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  const json j = json::parse(in);
  Corpus c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  for (const auto& d : j.at("documents"))
    c.docs.push_back({d.at("road").get<std::int64_t>(), d.at("words").get<std::vector<WordIndex>>()});
  c.check();
  return c;
}

std::vector<std::size_t> power_law_sizes(std::size_t n, double exponent, std::size_t min_size,
                                         std::size_t max_size, std::uint64_t seed) {
  if (!(exponent > 0.0) || min_size < 1 || max_size < min_size)
    throw std::invalid_argument("power_law_sizes: bad parameters");
  Rng rng = Rng::stream(seed, 0x51e5);
  std::vector<std::size_t> sizes(n);
  for (auto& s : sizes) {
    const double x = static_cast<double>(min_size) * std::pow(rng.uniform_open(), -1.0 / exponent);
    s = std::min<std::size_t>(max_size, static_cast<std::size_t>(std::floor(std::min(x, 1e15))));
  }
  return sizes;
}

SyntheticCorpusTruth make_planted_truth(const PlantedCorpusConfig& config, std::uint64_t seed) {
  if (config.vocab < 2) throw std::invalid_argument("vocabulary size must be >= 2");
  if (config.k < 1 || config.docs < 1) throw std::invalid_argument("need k >= 1 and docs >= 1");
  Rng rng = Rng::stream(seed, 0x9a7e);
  SyntheticCorpusTruth truth;
  truth.k_true = config.k;
  const std::vector<double> topic_prior(config.vocab, config.topic_concentration);
  for (std::size_t k = 0; k < config.k; ++k) truth.topics.push_back(rng.dirichlet(topic_prior));

  const std::vector<double> global = rng.dirichlet(std::vector<double>(config.k, 1.0));
  std::vector<double> doc_prior(config.k);
  for (std::size_t k = 0; k < config.k; ++k)
    doc_prior[k] = config.doc_concentration * global[k];
  for (std::size_t d = 0; d < config.docs; ++d) truth.doc_mixtures.push_back(rng.dirichlet(doc_prior));
  truth.doc_sizes = power_law_sizes(config.docs, config.size_exponent, config.min_size,
                                    config.max_size, mix_keys(seed, 1, 2, 3));
  return truth;
}

Corpus sample_corpus(const SyntheticCorpusTruth& truth, std::uint64_t seed) {
  const std::size_t V = truth.vocab_size();
  if (V < 2) throw std::invalid_argument("vocabulary size must be >= 2");
  if (truth.doc_mixtures.size() != truth.doc_sizes.size())
    throw std::invalid_argument("doc_mixtures and doc_sizes differ in length");
  Corpus corpus;
  corpus.vocab_size = V;
  for (std::size_t d = 0; d < truth.doc_sizes.size(); ++d) {
    Rng rng = Rng::stream(seed, 0xc0de, d);
    Document doc;
    doc.road = static_cast<std::int64_t>(d);
    doc.words.reserve(truth.doc_sizes[d]);
    for (std::size_t i = 0; i < truth.doc_sizes[d]; ++i) {
      const std::size_t k = rng.categorical(truth.doc_mixtures[d]);
      doc.words.push_back(static_cast<WordIndex>(rng.categorical(truth.topics[k])));
    }
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace roadtopics
