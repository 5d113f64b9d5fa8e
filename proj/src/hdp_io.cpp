#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "roadtopics/hdp.hpp"

namespace roadtopics {

using nlohmann::json;

namespace {

constexpr int kCheckpointFormat = 1;
constexpr int kSnapshotFormat = 1;

json hyper_json(const HdpHyper& h) { return {{"gamma", h.gamma}, {"alpha", h.alpha}, {"lambda", h.lambda}}; }

HdpHyper hyper_from(const json& j) {
  HdpHyper h{j.at("gamma").get<double>(), j.at("alpha").get<double>(), j.at("lambda").get<double>()};
  h.validate();
  return h;
}

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint binary file is truncated");
  return v;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const HdpState& s, const HdpHyper& h,
                     std::size_t next_iteration) {
  json theta_bar = json::array(), m_bar = json::array(), pi_bar = json::array();
  for (const auto& tb : s.theta_bar) theta_bar.push_back({tb[0], tb[1]});
  for (const auto& row : s.m_bar) {
    json r = json::array();
    for (const auto& x : row) r.push_back({x[0], x[1]});
    m_bar.push_back(std::move(r));
  }
  for (const auto& row : s.pi_bar) {
    json r = json::array();
    for (const auto& x : row) r.push_back({x[0], x[1]});
    pi_bar.push_back(std::move(r));
  }
  json beta_bar = json::array();
  for (const auto& b : s.beta_bar) beta_bar.push_back({b[0], b[1]});
  const json j = {{"format_version", kCheckpointFormat},
                  {"hyper", hyper_json(h)},
                  {"next_iteration", next_iteration},
                  {"vocab_size", s.vocab_size},
                  {"beta", s.beta},
                  {"pi", s.pi},
                  {"theta", s.theta},
                  {"m", s.m},
                  {"beta_bar", beta_bar},
                  {"pi_bar", pi_bar},
                  {"theta_bar", theta_bar},
                  {"m_bar", m_bar},
                  {"sub_age", s.sub_age}};
  {
    std::ofstream out(with_suffix(stem, ".json"));
    if (!out) throw std::runtime_error("cannot write checkpoint " + stem.string());
    out << j.dump() << '\n';
  }
  std::ofstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write checkpoint " + stem.string());
  write_pod<std::uint64_t>(bin, s.num_docs());
  for (std::size_t d = 0; d < s.num_docs(); ++d) {
    write_pod<std::uint64_t>(bin, s.words[d].size());
    for (std::size_t i = 0; i < s.words[d].size(); ++i) {
      write_pod<std::uint32_t>(bin, s.words[d][i]);
      write_pod<std::uint32_t>(bin, s.z[d][i]);
      write_pod<std::uint8_t>(bin, s.zbar[d][i]);
    }
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream in(with_suffix(stem, ".json"));
  if (!in) throw std::runtime_error("cannot open checkpoint " + stem.string());
  const json j = json::parse(in);
  if (j.at("format_version").get<int>() != kCheckpointFormat)
    throw std::runtime_error("unsupported checkpoint format version");
  Checkpoint c;
  c.hyper = hyper_from(j.at("hyper"));
  c.next_iteration = j.at("next_iteration").get<std::size_t>();
  auto& s = c.state;
  s.vocab_size = j.at("vocab_size").get<std::size_t>();
  s.beta = j.at("beta").get<std::vector<double>>();
  s.pi = j.at("pi").get<std::vector<std::vector<double>>>();
  s.theta = j.at("theta").get<std::vector<std::vector<double>>>();
  s.m = j.at("m").get<std::vector<std::vector<std::int64_t>>>();
  for (const auto& b : j.at("beta_bar")) s.beta_bar.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
  s.sub_age = j.at("sub_age").get<std::vector<std::uint32_t>>();
  for (const auto& tb : j.at("theta_bar"))
    s.theta_bar.push_back({tb.at(0).get<std::vector<double>>(), tb.at(1).get<std::vector<double>>()});
  for (const auto& row : j.at("pi_bar")) {
    s.pi_bar.emplace_back();
    for (const auto& x : row) s.pi_bar.back().push_back({x.at(0).get<double>(), x.at(1).get<double>()});
  }
  for (const auto& row : j.at("m_bar")) {
    s.m_bar.emplace_back();
    for (const auto& x : row) s.m_bar.back().push_back({x.at(0).get<std::int64_t>(), x.at(1).get<std::int64_t>()});
  }

  std::ifstream bin(with_suffix(stem, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open checkpoint " + stem.string());
  const auto D = read_pod<std::uint64_t>(bin);
  s.words.resize(D);
  s.z.resize(D);
  s.zbar.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    const auto n = read_pod<std::uint64_t>(bin);
    for (std::size_t i = 0; i < n; ++i) {
      s.words[d].push_back(read_pod<std::uint32_t>(bin));
      s.z[d].push_back(read_pod<std::uint32_t>(bin));
      s.zbar[d].push_back(read_pod<std::uint8_t>(bin));
    }
  }
  const std::size_t K = s.theta.size();
  s.n.assign(D, {});
  s.n_bar.assign(D, {});
  s.topic_words.assign(K, std::vector<std::int64_t>(s.vocab_size, 0));
  s.sub_topic_words.assign(K, {std::vector<std::int64_t>(s.vocab_size, 0), std::vector<std::int64_t>(s.vocab_size, 0)});
  s.recount();
  s.audit();
  return c;
}

void save_snapshots(const std::filesystem::path& path, const HdpHyper& h, std::span<const HdpSnapshot> snaps) {
  json arr = json::array();
  for (const auto& s : snaps) arr.push_back({{"iteration", s.iteration}, {"beta", s.beta}, {"theta", s.theta}});
  const json j = {{"format_version", kSnapshotFormat}, {"hyper", hyper_json(h)}, {"snapshots", std::move(arr)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write snapshots " + path.string());
  out << j.dump() << '\n';
}

std::vector<HdpSnapshot> load_snapshots(const std::filesystem::path& path, HdpHyper* hyper) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open snapshots " + path.string());
  const json j = json::parse(in);
  if (j.at("format_version").get<int>() != kSnapshotFormat) throw std::runtime_error("unsupported snapshot format");
  if (hyper) *hyper = hyper_from(j.at("hyper"));
  std::vector<HdpSnapshot> out;
  for (const auto& s : j.at("snapshots"))
    out.push_back({s.at("iteration").get<std::size_t>(), s.at("beta").get<std::vector<double>>(),
                   s.at("theta").get<std::vector<std::vector<double>>>()});
  return out;
}

void write_diagnostics_csv(const std::filesystem::path& path, std::span<const IterationDiagnostics> diag) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,K,loglik,accepts_split,accepts_merge,heldout_ll\n";
  char buf[64];
  for (const auto& d : diag) {
    std::snprintf(buf, sizeof buf, "%.10g", d.loglik);
    out << d.iteration << ',' << d.K << ',' << buf << ',' << d.accepted_splits << ',' << d.accepted_merges << ',';
    if (d.has_heldout) {
      std::snprintf(buf, sizeof buf, "%.10g", d.heldout_ll);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace roadtopics
