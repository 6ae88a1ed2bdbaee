#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <utility>

#include "mpdet/time.hpp"

namespace mpdet {

using Vec3 = Eigen::Vector3d;
using EcefPosition = Vec3;  // meters, Earth-centered Earth-fixed
using EnuPosition = Vec3;   // meters, local East-North-Up

// WGS-84 / GPS ICD constants.
inline constexpr double kMuEarth = 3.986005e14;          // m^3/s^2
inline constexpr double kOmegaEarth = 7.2921151467e-5;   // rad/s
inline constexpr double kWgs84A = 6378137.0;             // m
inline constexpr double kWgs84F = 1.0 / 298.257223563;
inline constexpr double kLambdaL1 = 0.19029367;          // m, GPS L1 wavelength
inline constexpr double kFitIntervalSeconds = 7200.0;

// Broadcast Keplerian ephemeris (GPS LNAV subset).
struct Ephemeris {
  std::string satellite;  // "Gnn"
  int week = 0;
  double toe = 0.0;       // s of week
  double sqrt_a = 0.0;    // m^0.5
  double e = 0.0;
  double i0 = 0.0, omega0 = 0.0, omega = 0.0, m0 = 0.0;  // rad
  double delta_n = 0.0, idot = 0.0, omegadot = 0.0;      // rad/s
  double cuc = 0.0, cus = 0.0;  // rad
  double crc = 0.0, crs = 0.0;  // m
  double cic = 0.0, cis = 0.0;  // rad

  GpsTime toe_time() const { return {week, toe}; }
};

struct ElevationAzimuth {
  double elevation = 0.0;  // deg, [-90, 90]
  double azimuth = 0.0;    // deg, [0, 360)
};

struct SatelliteState {
  EcefPosition position;
  Vec3 velocity;  // m/s, ECEF
};

// Standard broadcast propagation: Kepler iteration, harmonic corrections,
// Earth-rotation-corrected node; velocity by analytic differentiation.
SatelliteState satellite_position(const Ephemeris& eph, const GpsTime& t);

// Geodetic coordinates (radians, meters) from ECEF.
void ecef_to_geodetic(const EcefPosition& p, double& lat, double& lon, double& height);
EcefPosition geodetic_to_ecef(double lat, double lon, double height);

// Rotation taking ECEF deltas into the local ENU frame at the given geodetic
// latitude/longitude (rows: east, north, up).
Eigen::Matrix3d enu_rotation(double lat, double lon);

ElevationAzimuth elevation_azimuth(const EcefPosition& sat, const EcefPosition& rx);

// Geometric range; clock and atmospheric terms excluded (they cancel in the
// double difference).
inline double expected_pseudorange(const EcefPosition& sat, const EcefPosition& rx) {
  return (sat - rx).norm();
}

// Range rate seen by a static receiver: satellite velocity projected on the
// line of sight, positive when the range is increasing.
double range_rate(const SatelliteState& sat, const EcefPosition& rx);

inline double doppler_to_range_rate(double doppler_hz) { return -kLambdaL1 * doppler_hz; }
inline double range_rate_to_doppler(double rate_ms) { return -rate_ms / kLambdaL1; }

}  // namespace mpdet
