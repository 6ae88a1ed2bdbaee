#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mpdet/labels.hpp"
#include "mpdet/orbits.hpp"
#include "mpdet/rinex.hpp"
#include "mpdet/time.hpp"

namespace mpdet {
namespace scenesim {

inline constexpr double kBaselineMeters = 0.19;
inline constexpr double kElevationMaskDeg = 5.0;
// Reflection points are nudged this far off the reflecting face before the
// obstruction tests, so the face itself never self-occludes the bounce.
inline constexpr double kFaceNudge = 1e-6;

// Axis-aligned box building: footprint in local ENU meters, base at u = 0.
struct Building {
  double min_e, min_n, max_e, max_n, height;
};

struct Scene {
  std::string tag;
  double origin_lat_deg = 0.0, origin_lon_deg = 0.0;
  std::array<EnuPosition, 2> antennas;
  std::vector<Building> buildings;

  void validate() const;  // throws InvalidScene

  EcefPosition origin_ecef() const;
  Eigen::Matrix3d enu_rot() const;  // rows: east, north, up
  EnuPosition ecef_to_enu(const EcefPosition& p) const;
  EcefPosition enu_to_ecef(const EnuPosition& p) const;
  EcefPosition antenna_ecef(int i) const { return enu_to_ecef(antennas[i]); }
};

Scene parse_scene_json(const std::string& json_text);
Scene load_scene(const std::string& path);
std::string scene_to_json(const Scene& scene);

struct SignalPath {
  enum Kind { kDirect, kReflected } kind;
  double length;                // m, geometric
  EnuPosition reflection_point; // kReflected only
  int face_id = -1;             // building index * 4 + face index, kReflected only
};

struct Visibility {
  std::optional<SignalClass> cls;  // nullopt = NOT_RECEIVED
  std::vector<SignalPath> paths;   // direct first when present

  const SignalPath* direct() const;
  const SignalPath* shortest_reflected() const;
};

Visibility classify_visibility(const Scene& scene, const EcefPosition& sat,
                               const EnuPosition& antenna);

// true if the open segment (a, b) passes through the building volume.
bool segment_hits_building(const EnuPosition& a, const EnuPosition& b, const Building& box);

struct NoiseModel {
  double pr_sigma = 0.5;         // m
  double cn0_zenith = 45.0;      // dB-Hz at 90 deg elevation
  double cn0_rolloff = 10.0;     // dB over the full 90..0 deg span
  double reflection_loss = 12.0; // dB when no direct path
  double alpha = 0.5;            // LOS+NLOS code error gain on the extra path
  double cn0_drift = 0.02;       // dB-Hz/s while a multipath class persists
  double cn0_drift_max = 6.0;    // dB cap on the accumulated drift
  std::uint64_t seed = 0;
};

// Tracks when each (satellite, antenna) last changed class, so the C/N0
// drift term can grow with time-in-class.
class OnsetTracker {
 public:
  double seconds_in_class(const std::string& sat, int antenna, SignalClass cls,
                          const GpsTime& t);

 private:
  struct State {
    SignalClass cls;
    GpsTime onset;
  };
  std::map<std::pair<std::string, int>, State> state_;
};

struct TruthRow {
  GpsTime time;
  std::string satellite;
  SignalClass label;
};

struct SynthesizedEpoch {
  std::array<rinex::ObservationEpoch, 2> epochs;  // same timestamp, per antenna
  std::vector<TruthRow> truth;                    // class at antenna 1
};

SynthesizedEpoch synthesize_epoch(const Scene& scene, const rinex::NavigationFile& nav,
                                  const GpsTime& t, const NoiseModel& noise,
                                  std::mt19937_64& rng, OnsetTracker& onsets);

struct CampaignResult {
  std::string tag;
  std::array<rinex::ObservationFile, 2> observations;
  std::vector<TruthRow> truth;
};

std::vector<CampaignResult> run_campaign(const std::vector<Scene>& scenes,
                                         const rinex::NavigationFile& nav, double duration_s,
                                         const NoiseModel& noise, std::uint64_t seed);

void write_truth_csv(const std::vector<TruthRow>& truth, const std::string& path);
std::vector<TruthRow> read_truth_csv(const std::string& path);

// Plausible GPS-like constellation on six orbital planes, for desk-scale
// campaigns when no real broadcast file is at hand.
rinex::NavigationFile synthetic_constellation(int week, double first_toe, int toe_sets);

}  // namespace scenesim
}  // namespace mpdet
