#include "mpdet/scenesim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mpdet/errors.hpp"

namespace mpdet {
namespace scenesim {

namespace {
constexpr double kDeg = M_PI / 180.0;
}

void Scene::validate() const {
  if (tag.empty()) throw InvalidScene("scene tag is empty");
  const double baseline = (antennas[0] - antennas[1]).norm();
  if (std::fabs(baseline - kBaselineMeters) > 1e-3)
    throw InvalidScene(tag + ": antenna baseline " + std::to_string(baseline) +
                       " m, expected " + std::to_string(kBaselineMeters) + " m");
  for (const auto& b : buildings) {
    if (b.height <= 0.0) throw InvalidScene(tag + ": building height must be > 0");
    if (b.min_e >= b.max_e || b.min_n >= b.max_n)
      throw InvalidScene(tag + ": degenerate building footprint");
    for (const auto& a : antennas)
      if (a.x() > b.min_e && a.x() < b.max_e && a.y() > b.min_n && a.y() < b.max_n &&
          a.z() > 0.0 && a.z() < b.height)
        throw InvalidScene(tag + ": antenna inside a building volume");
  }
}

EcefPosition Scene::origin_ecef() const {
  return geodetic_to_ecef(origin_lat_deg * kDeg, origin_lon_deg * kDeg, 0.0);
}

Eigen::Matrix3d Scene::enu_rot() const {
  return enu_rotation(origin_lat_deg * kDeg, origin_lon_deg * kDeg);
}

EnuPosition Scene::ecef_to_enu(const EcefPosition& p) const {
  return enu_rot() * (p - origin_ecef());
}

EcefPosition Scene::enu_to_ecef(const EnuPosition& p) const {
  return origin_ecef() + enu_rot().transpose() * p;
}

Scene parse_scene_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidScene(std::string("scene JSON parse error: ") + e.what());
  }
  try {
    Scene s;
    s.tag = j.at("tag").get<std::string>();
    s.origin_lat_deg = j.at("origin").at("lat").get<double>();
    s.origin_lon_deg = j.at("origin").at("lon").get<double>();
    const auto& ants = j.at("antennas");
    if (ants.size() != 2) throw InvalidScene(s.tag + ": need exactly 2 antennas");
    for (int i = 0; i < 2; ++i)
      s.antennas[i] = {ants[i].at("e").get<double>(), ants[i].at("n").get<double>(),
                       ants[i].at("u").get<double>()};
    for (const auto& b : j.value("buildings", nlohmann::json::array()))
      s.buildings.push_back({b.at("min_e").get<double>(), b.at("min_n").get<double>(),
                             b.at("max_e").get<double>(), b.at("max_n").get<double>(),
                             b.at("height").get<double>()});
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidScene(std::string("scene JSON missing/invalid key: ") + e.what());
  }
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scene file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_json(ss.str());
}

std::string scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["tag"] = scene.tag;
  j["origin"] = {{"lat", scene.origin_lat_deg}, {"lon", scene.origin_lon_deg}};
  j["antennas"] = nlohmann::json::array();
  for (const auto& a : scene.antennas)
    j["antennas"].push_back({{"e", a.x()}, {"n", a.y()}, {"u", a.z()}});
  j["buildings"] = nlohmann::json::array();
  for (const auto& b : scene.buildings)
    j["buildings"].push_back({{"min_e", b.min_e},
                              {"min_n", b.min_n},
                              {"max_e", b.max_e},
                              {"max_n", b.max_n},
                              {"height", b.height}});
  return j.dump(2);
}

const SignalPath* Visibility::direct() const {
  for (const auto& p : paths)
    if (p.kind == SignalPath::kDirect) return &p;
  return nullptr;
}

const SignalPath* Visibility::shortest_reflected() const {
  const SignalPath* best = nullptr;
  for (const auto& p : paths)
    if (p.kind == SignalPath::kReflected && (!best || p.length < best->length)) best = &p;
  return best;
}

bool segment_hits_building(const EnuPosition& a, const EnuPosition& b, const Building& box) {
  const double lo[3] = {box.min_e, box.min_n, 0.0};
  const double hi[3] = {box.max_e, box.max_n, box.height};
  double tmin = 0.0, tmax = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double d = b[k] - a[k];
    if (std::fabs(d) < 1e-15) {
      if (a[k] <= lo[k] || a[k] >= hi[k]) return false;
    } else {
      double t0 = (lo[k] - a[k]) / d;
      double t1 = (hi[k] - a[k]) / d;
      if (t0 > t1) std::swap(t0, t1);
      tmin = std::max(tmin, t0);
      tmax = std::min(tmax, t1);
      if (tmin >= tmax) return false;
    }
  }
  return tmax - tmin > 1e-12;
}

namespace {

bool segment_obstructed(const Scene& scene, const EnuPosition& a, const EnuPosition& b) {
  for (const auto& box : scene.buildings)
    if (segment_hits_building(a, b, box)) return true;
  return false;
}

// Vertical face of a box: plane axis (0 = east, 1 = north), plane coordinate,
// outward sign, lateral bounds along the other horizontal axis.
struct Face {
  int axis;
  double coord;
  double sign;
  double lat_min, lat_max;
  double height;
};

std::array<Face, 4> faces_of(const Building& b) {
  return {{{0, b.min_e, -1.0, b.min_n, b.max_n, b.height},
           {0, b.max_e, +1.0, b.min_n, b.max_n, b.height},
           {1, b.min_n, -1.0, b.min_e, b.max_e, b.height},
           {1, b.max_n, +1.0, b.min_e, b.max_e, b.height}}};
}

}  // namespace

Visibility classify_visibility(const Scene& scene, const EcefPosition& sat,
                               const EnuPosition& antenna) {
  const EnuPosition sat_enu = scene.ecef_to_enu(sat);
  Visibility vis;

  const bool has_direct = !segment_obstructed(scene, antenna, sat_enu);
  if (has_direct)
    vis.paths.push_back({SignalPath::kDirect, (sat_enu - antenna).norm(), {}, -1});

  // Single-bounce mirror method over every vertical face.
  for (size_t bi = 0; bi < scene.buildings.size(); ++bi) {
    const auto faces = faces_of(scene.buildings[bi]);
    for (size_t fi = 0; fi < faces.size(); ++fi) {
      const Face& f = faces[fi];
      // specular bounce needs antenna and satellite on the outward side
      if (f.sign * (antenna[f.axis] - f.coord) <= 0.0) continue;
      if (f.sign * (sat_enu[f.axis] - f.coord) <= 0.0) continue;

      EnuPosition mirror = antenna;
      mirror[f.axis] = 2.0 * f.coord - antenna[f.axis];
      const double denom = sat_enu[f.axis] - mirror[f.axis];
      if (std::fabs(denom) < 1e-12) continue;
      const double t = (f.coord - mirror[f.axis]) / denom;
      if (t <= 0.0 || t >= 1.0) continue;
      const EnuPosition p = mirror + t * (sat_enu - mirror);

      const int lat_axis = 1 - f.axis;
      if (p[lat_axis] < f.lat_min || p[lat_axis] > f.lat_max) continue;
      if (p.z() < 0.0 || p.z() > f.height) continue;

      EnuPosition nudged = p;
      nudged[f.axis] += f.sign * kFaceNudge;
      if (segment_obstructed(scene, antenna, nudged)) continue;
      if (segment_obstructed(scene, nudged, sat_enu)) continue;

      vis.paths.push_back({SignalPath::kReflected, (p - antenna).norm() + (sat_enu - p).norm(),
                           p, static_cast<int>(bi * 4 + fi)});
    }
  }

  const bool has_refl = vis.shortest_reflected() != nullptr;
  if (has_direct && has_refl)
    vis.cls = SignalClass::kLosNlos;
  else if (has_direct)
    vis.cls = SignalClass::kLosOnly;
  else if (has_refl)
    vis.cls = SignalClass::kNlosOnly;
  return vis;
}

double OnsetTracker::seconds_in_class(const std::string& sat, int antenna, SignalClass cls,
                                      const GpsTime& t) {
  auto key = std::make_pair(sat, antenna);
  auto it = state_.find(key);
  if (it == state_.end() || it->second.cls != cls) {
    state_[key] = {cls, t};
    return 0.0;
  }
  return t - it->second.onset;
}

SynthesizedEpoch synthesize_epoch(const Scene& scene, const rinex::NavigationFile& nav,
                                  const GpsTime& t, const NoiseModel& noise,
                                  std::mt19937_64& rng, OnsetTracker& onsets) {
  SynthesizedEpoch out;
  out.epochs[0].time = out.epochs[1].time = t;
  std::normal_distribution<double> gauss(0.0, 1.0);

  bool any_visible = false;
  for (const auto& sat_id : nav.satellites()) {
    const Ephemeris* eph = nav.find(sat_id, t);
    if (!eph) continue;
    SatelliteState state;
    try {
      state = satellite_position(*eph, t);
    } catch (const FitIntervalExceeded&) {
      continue;
    }
    const auto ea = elevation_azimuth(state.position, scene.antenna_ecef(0));
    if (ea.elevation < kElevationMaskDeg) continue;
    any_visible = true;

    for (int ant = 0; ant < 2; ++ant) {
      const Visibility vis = classify_visibility(scene, state.position, scene.antennas[ant]);
      if (!vis.cls) continue;  // NOT_RECEIVED never reaches the output

      const SignalPath* direct = vis.direct();
      const SignalPath* refl = vis.shortest_reflected();
      double range;
      switch (*vis.cls) {
        case SignalClass::kLosOnly:
          range = direct->length;
          break;
        case SignalClass::kNlosOnly:
          range = refl->length;
          break;
        case SignalClass::kLosNlos:
          range = direct->length + noise.alpha * (refl->length - direct->length);
          break;
      }
      range += noise.pr_sigma * gauss(rng);

      const EcefPosition ant_ecef = scene.antenna_ecef(ant);
      const auto ant_ea = elevation_azimuth(state.position, ant_ecef);
      double cn0 = noise.cn0_zenith - noise.cn0_rolloff * (90.0 - ant_ea.elevation) / 90.0;
      if (*vis.cls == SignalClass::kNlosOnly) cn0 -= noise.reflection_loss;
      if (*vis.cls != SignalClass::kLosOnly) {
        const double dt = onsets.seconds_in_class(sat_id, ant, *vis.cls, t);
        cn0 += std::min(noise.cn0_drift * dt, noise.cn0_drift_max);
      } else {
        onsets.seconds_in_class(sat_id, ant, *vis.cls, t);
      }
      cn0 = std::clamp(cn0, 0.0, 70.0);

      rinex::ObservationRecord rec;
      rec.satellite = sat_id;
      rec.pseudorange = range;
      rec.doppler = range_rate_to_doppler(range_rate(state, ant_ecef));
      rec.cn0 = cn0;
      out.epochs[ant].records.push_back(std::move(rec));

      if (ant == 0) out.truth.push_back({t, sat_id, *vis.cls});
    }
  }
  if (!any_visible)
    throw NoVisibleSatellites(scene.tag + ": no satellite above the elevation mask at " +
                              time_key(t));
  return out;
}

std::vector<CampaignResult> run_campaign(const std::vector<Scene>& scenes,
                                         const rinex::NavigationFile& nav, double duration_s,
                                         const NoiseModel& noise, std::uint64_t seed) {
  if (nav.ephemerides.empty()) throw Error("navigation data is empty");
  GpsTime start = nav.ephemerides.begin()->second.toe_time();
  for (const auto& [key, eph] : nav.ephemerides)
    if (eph.toe_time() < start) start = eph.toe_time();

  std::vector<CampaignResult> results;
  for (size_t si = 0; si < scenes.size(); ++si) {
    const Scene& scene = scenes[si];
    scene.validate();
    CampaignResult res;
    res.tag = scene.tag;
    for (int ant = 0; ant < 2; ++ant) {
      res.observations[ant].header.marker_name =
          scene.tag + (ant == 0 ? "_A1" : "_A2");
      res.observations[ant].header.approx_position = scene.antenna_ecef(ant);
      res.observations[ant].header.obs_codes['G'] = {"C1C", "D1C", "S1C"};
    }
    OnsetTracker onsets;
    const long n_epochs = static_cast<long>(duration_s);
    for (long i = 0; i < n_epochs; ++i) {
      // per-epoch RNG substream keeps results independent of scheduling
      std::seed_seq seq{seed, static_cast<std::uint64_t>(si), static_cast<std::uint64_t>(i)};
      std::mt19937_64 rng(seq);
      auto epoch = synthesize_epoch(scene, nav, start.plus(static_cast<double>(i)), noise,
                                    rng, onsets);
      for (int ant = 0; ant < 2; ++ant)
        res.observations[ant].epochs.push_back(std::move(epoch.epochs[ant]));
      res.truth.insert(res.truth.end(), epoch.truth.begin(), epoch.truth.end());
    }
    results.push_back(std::move(res));
  }
  return results;
}

void write_truth_csv(const std::vector<TruthRow>& truth, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write truth file: " + path);
  out << "time,sat,label\n";
  for (const auto& row : truth)
    out << time_key(row.time) << "," << row.satellite << "," << to_string(row.label) << "\n";
}

std::vector<TruthRow> read_truth_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open truth file: " + path);
  std::vector<TruthRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line != "time,sat,label") throw Error(path + ": bad truth CSV header");
      continue;
    }
    auto c1 = line.find(',');
    auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw Error(path + ": bad truth CSV row: " + line);
    auto label = signal_class_from_string(line.substr(c2 + 1));
    if (!label) throw Error(path + ": unknown label in row: " + line);
    rows.push_back({parse_time_key(line.substr(0, c1)), line.substr(c1 + 1, c2 - c1 - 1),
                    *label});
  }
  return rows;
}

rinex::NavigationFile synthetic_constellation(int week, double first_toe, int toe_sets) {
  rinex::NavigationFile nav;
  constexpr int kPlanes = 6, kPerPlane = 4;
  for (int set = 0; set < toe_sets; ++set) {
    const double toe = first_toe + set * 7200.0;
    for (int plane = 0; plane < kPlanes; ++plane) {
      for (int slot = 0; slot < kPerPlane; ++slot) {
        const int prn = plane * kPerPlane + slot + 1;
        Ephemeris eph;
        char id[4];
        std::snprintf(id, sizeof id, "G%02d", prn);
        eph.satellite = id;
        eph.week = week;
        eph.toe = toe;
        eph.sqrt_a = 5153.7;
        eph.e = 0.01 + 0.001 * plane;
        eph.i0 = 0.9599310885968813;  // 55 deg
        eph.omega0 = plane * (M_PI / 3.0);
        eph.omega = 0.3 * slot;
        eph.m0 = slot * (M_PI / 2.0) + plane * 0.25;
        eph.delta_n = 4.5e-9;
        eph.omegadot = -8.0e-9;
        eph.idot = 0.0;
        nav.insert(eph);
      }
    }
  }
  return nav;
}

}  // namespace scenesim
}  // namespace mpdet
