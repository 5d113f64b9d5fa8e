#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "roadtopics/hmm.hpp"

namespace roadtopics {

using nlohmann::json;

namespace {

constexpr int kModelFormat = 1;

const char* kind_name(StateKind k) {
  switch (k) {
    case StateKind::Source: return "source";
    case StateKind::Destination: return "destination";
    case StateKind::Road: return "road";
    case StateKind::RoadAug: return "road_aug";
  }
  return "?";
}

StateKind kind_from(const std::string& s) {
  if (s == "source") return StateKind::Source;
  if (s == "destination") return StateKind::Destination;
  if (s == "road") return StateKind::Road;
  if (s == "road_aug") return StateKind::RoadAug;
  throw std::runtime_error("unknown state kind '" + s + "'");
}

}  // namespace

void save_model(const std::filesystem::path& path, const HmmModel& m) {
  json states = json::array();
  for (const auto& s : m.states) states.push_back({kind_name(s.kind), s.index, s.source});
  json records = json::array();
  for (const auto& e : m.emissions)
    records.push_back({{"mu_r", {e.mu_r.x(), e.mu_r.y()}},
                       {"sigma_r", {e.sigma_r(0, 0), e.sigma_r(0, 1), e.sigma_r(1, 0), e.sigma_r(1, 1)}},
                       {"mu_h", e.mu_h},
                       {"sigma_h", e.sigma_h},
                       {"p_q", e.p_q},
                       {"c", e.c}});
  json rows = json::array();
  for (const auto& row : m.trans) {
    json r = json::array();
    for (const auto& t : row) r.push_back({t.target, t.prob});
    rows.push_back(std::move(r));
  }
  const json j = {{"format_version", kModelFormat},
                  {"augmented", m.augmented},
                  {"alpha", m.alpha},
                  {"c", m.c},
                  {"num_sources", m.num_sources},
                  {"num_destinations", m.num_destinations},
                  {"num_roads", m.num_roads},
                  {"states", std::move(states)},
                  {"emission_of", m.emission_of},
                  {"emissions", std::move(records)},
                  {"theta0", m.theta0},
                  {"trans", std::move(rows)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model " + path.string());
  out << j.dump() << '\n';
}

HmmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model " + path.string());
  const json j = json::parse(in);
  if (j.at("format_version").get<int>() != kModelFormat)
    throw std::runtime_error("unsupported model format version in " + path.string());
  HmmModel m;
  m.augmented = j.at("augmented").get<bool>();
  m.alpha = j.at("alpha").get<double>();
  m.c = j.at("c").get<double>();
  m.num_sources = j.at("num_sources").get<int>();
  m.num_destinations = j.at("num_destinations").get<int>();
  m.num_roads = j.at("num_roads").get<int>();
  for (const auto& s : j.at("states"))
    m.states.push_back({kind_from(s.at(0).get<std::string>()), s.at(1).get<int>(), s.at(2).get<int>()});
  m.emission_of = j.at("emission_of").get<std::vector<std::uint32_t>>();
  for (const auto& r : j.at("emissions")) {
    EmissionParams e;
    const auto mu = r.at("mu_r").get<std::vector<double>>();
    const auto sg = r.at("sigma_r").get<std::vector<double>>();
    if (mu.size() != 2 || sg.size() != 4) throw std::runtime_error("malformed emission record");
    e.mu_r = Vec2(mu[0], mu[1]);
    e.sigma_r << sg[0], sg[1], sg[2], sg[3];
    e.mu_h = r.at("mu_h").get<double>();
    e.sigma_h = r.at("sigma_h").get<double>();
    e.p_q = r.at("p_q").get<double>();
    e.c = r.at("c").get<double>();
    m.emissions.push_back(e);
  }
  m.theta0 = j.at("theta0").get<std::vector<double>>();
  for (const auto& row : j.at("trans")) {
    std::vector<Transition> r;
    for (const auto& t : row) r.push_back({t.at(0).get<std::uint32_t>(), t.at(1).get<double>()});
    m.trans.push_back(std::move(r));
  }
  m.check();
  return m;
}

}  // namespace roadtopics
