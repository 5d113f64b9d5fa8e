#include "roadtopics/trips.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace roadtopics {

using nlohmann::json;

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  if (w > std::numbers::pi) w -= two_pi;
  return w;
}

std::optional<std::string> validate_trip(const Trip& trip) {
  const auto& obs = trip.obs;
  if (obs.size() < 2) return "trip has fewer than 2 observations";
  if (!trip.signals.empty() && trip.signals.size() != obs.size())
    return "signal stream length differs from observation count";
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& o = obs[i];
    if (o.k_on && o.k_off) return "observation " + std::to_string(i) + " has both key-on and key-off";
    if (i > 0 && !(o.t > obs[i - 1].t))
      return "timestamps not strictly increasing at observation " + std::to_string(i);
    if (!(o.h > -std::numbers::pi && o.h <= std::numbers::pi))
      return "heading out of range at observation " + std::to_string(i);
    if (!std::isfinite(o.r.x()) || !std::isfinite(o.r.y()) || !std::isfinite(o.t))
      return "non-finite value at observation " + std::to_string(i);
  }
  if (!obs.front().k_on) return "first observation lacks key-on";
  if (!obs.back().k_off) return "last observation lacks key-off";
  for (std::size_t i = 1; i + 1 < obs.size(); ++i)
    if (obs[i].k_on || obs[i].k_off)
      return "key event inside trip at observation " + std::to_string(i);
  return std::nullopt;
}

Vec2 project_equirectangular(double lat, double lon, double lat0, double lon0) {
  constexpr double earth_radius = 6371008.8;
  constexpr double deg = std::numbers::pi / 180.0;
  return {earth_radius * (lon - lon0) * deg * std::cos(lat0 * deg),
          earth_radius * (lat - lat0) * deg};
}

namespace {

struct PendingObs {
  Observation obs;
  bool geographic = false;
  double lat = 0.0, lon = 0.0;
};

struct PendingTrip {
  std::size_t line = 0;
  Trip trip;
  std::vector<PendingObs> obs;
};

bool flag(const json& o, const char* key) {
  if (!o.contains(key)) return false;
  const auto& v = o.at(key);
  if (v.is_boolean()) return v.get<bool>();
  const int i = v.get<int>();
  if (i != 0 && i != 1) throw std::invalid_argument(std::string("field '") + key + "' must be 0 or 1");
  return i == 1;
}

double number(const json& o, const char* key) {
  if (!o.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
  const auto& v = o.at(key);
  if (!v.is_number()) throw std::invalid_argument(std::string("field '") + key + "' is not a number");
  return v.get<double>();
}

PendingTrip read_record(const std::string& text, std::size_t line) {
  const json j = json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  PendingTrip p;
  p.line = line;
  if (!j.contains("id")) throw std::invalid_argument("missing field 'id'");
  p.trip.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  if (!j.contains("obs") || !j.at("obs").is_array())
    throw std::invalid_argument("missing field 'obs'");
  bool any_signal = false, all_signal = true;
  for (const auto& o : j.at("obs")) {
    PendingObs po;
    po.obs.t = number(o, "t");
    if (o.contains("x") || o.contains("y")) {
      po.obs.r = {number(o, "x"), number(o, "y")};
    } else if (o.contains("lat") && o.contains("lon")) {
      po.geographic = true;
      po.lat = number(o, "lat");
      po.lon = number(o, "lon");
    } else {
      throw std::invalid_argument("observation lacks x/y or lat/lon");
    }
    po.obs.h = wrap_angle(number(o, "h"));
    po.obs.q = flag(o, "q");
    po.obs.k_on = flag(o, "kon");
    po.obs.k_off = flag(o, "koff");
    const bool has_signal = o.contains("v") && o.contains("tod");
    any_signal |= has_signal;
    all_signal &= has_signal;
    if (has_signal) p.trip.signals.push_back({number(o, "v"), number(o, "tod")});
    p.obs.push_back(po);
  }
  if (any_signal && !all_signal)
    throw std::invalid_argument("signals 'v'/'tod' present on only some observations");
  return p;
}

}  // namespace

TripLog parse_trips(std::istream& in) {
  TripLog log;
  std::vector<PendingTrip> pending;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      pending.push_back(read_record(text, line));
    } catch (const std::exception& e) {
      log.rejected.push_back({line, "", e.what()});
    }
  }
  if (in.bad()) throw std::runtime_error("I/O error while reading trips");

  double lat_sum = 0.0, lon_sum = 0.0;
  std::size_t n_geo = 0;
  for (const auto& p : pending)
    for (const auto& o : p.obs)
      if (o.geographic) {
        lat_sum += o.lat;
        lon_sum += o.lon;
        ++n_geo;
      }
  const double lat0 = n_geo ? lat_sum / n_geo : 0.0;
  const double lon0 = n_geo ? lon_sum / n_geo : 0.0;

  for (auto& p : pending) {
    for (auto& o : p.obs) {
      if (o.geographic) o.obs.r = project_equirectangular(o.lat, o.lon, lat0, lon0);
      p.trip.obs.push_back(o.obs);
    }
    if (auto err = validate_trip(p.trip)) {
      log.rejected.push_back({p.line, p.trip.id, *err});
      continue;
    }
    log.trips.push_back(std::move(p.trip));
  }
  return log;
}

TripLog parse_trips(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trip file " + path.string());
  return parse_trips(in);
}

void write_trips(std::ostream& out, std::span<const Trip> trips) {
  for (const auto& trip : trips) {
    json j;
    j["id"] = trip.id;
    json arr = json::array();
    for (std::size_t i = 0; i < trip.obs.size(); ++i) {
      const auto& o = trip.obs[i];
      json e = {{"t", o.t}, {"x", o.r.x()}, {"y", o.r.y()}, {"h", o.h},
                {"q", o.q ? 1 : 0}, {"kon", o.k_on ? 1 : 0}, {"koff", o.k_off ? 1 : 0}};
      if (!trip.signals.empty()) {
        e["v"] = trip.signals[i].velocity;
        e["tod"] = trip.signals[i].hour;
      }
      arr.push_back(std::move(e));
    }
    j["obs"] = std::move(arr);
    out << j.dump() << '\n';
  }
}

void write_trips(const std::filesystem::path& path, std::span<const Trip> trips) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trip file " + path.string());
  write_trips(out, trips);
}

}  // namespace roadtopics
