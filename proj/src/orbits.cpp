#include "mpdet/orbits.hpp"

#include <cmath>

#include "mpdet/errors.hpp"

namespace mpdet {

SatelliteState satellite_position(const Ephemeris& eph, const GpsTime& t) {
  const double tk = t - eph.toe_time();
  if (std::fabs(tk) > kFitIntervalSeconds)
    throw FitIntervalExceeded(eph.satellite + ": |t - toe| = " + std::to_string(std::fabs(tk)) +
                              " s exceeds fit interval");

  const double a = eph.sqrt_a * eph.sqrt_a;
  const double n0 = std::sqrt(kMuEarth / (a * a * a));
  const double n = n0 + eph.delta_n;
  const double mk = eph.m0 + n * tk;

  // Kepler: E - e sin E = M
  double ek = mk;
  bool converged = false;
  for (int i = 0; i < 30; ++i) {
    const double delta = (ek - eph.e * std::sin(ek) - mk) / (1.0 - eph.e * std::cos(ek));
    ek -= delta;
    if (std::fabs(delta) < 1e-13) {
      converged = true;
      break;
    }
  }
  if (!converged || std::fabs(ek - eph.e * std::sin(ek) - mk) > 1e-12)
    throw KeplerNonConvergence(eph.satellite + ": Kepler iteration did not converge");

  const double sin_e = std::sin(ek), cos_e = std::cos(ek);
  const double one_mec = 1.0 - eph.e * cos_e;
  const double ek_dot = n / one_mec;

  const double sq1me2 = std::sqrt(1.0 - eph.e * eph.e);
  const double nu = std::atan2(sq1me2 * sin_e, cos_e - eph.e);
  const double nu_dot = ek_dot * sq1me2 / one_mec;

  const double phi = nu + eph.omega;
  const double sin2p = std::sin(2.0 * phi), cos2p = std::cos(2.0 * phi);

  const double du = eph.cus * sin2p + eph.cuc * cos2p;
  const double dr = eph.crs * sin2p + eph.crc * cos2p;
  const double di = eph.cis * sin2p + eph.cic * cos2p;
  const double du_dot = 2.0 * nu_dot * (eph.cus * cos2p - eph.cuc * sin2p);
  const double dr_dot = 2.0 * nu_dot * (eph.crs * cos2p - eph.crc * sin2p);
  const double di_dot = 2.0 * nu_dot * (eph.cis * cos2p - eph.cic * sin2p);

  const double u = phi + du;
  const double r = a * one_mec + dr;
  const double inc = eph.i0 + eph.idot * tk + di;
  const double u_dot = nu_dot + du_dot;
  const double r_dot = a * eph.e * sin_e * ek_dot + dr_dot;
  const double inc_dot = eph.idot + di_dot;

  const double xp = r * std::cos(u), yp = r * std::sin(u);
  const double xp_dot = r_dot * std::cos(u) - yp * u_dot;
  const double yp_dot = r_dot * std::sin(u) + xp * u_dot;

  const double node = eph.omega0 + (eph.omegadot - kOmegaEarth) * tk - kOmegaEarth * eph.toe;
  const double node_dot = eph.omegadot - kOmegaEarth;

  const double sin_n = std::sin(node), cos_n = std::cos(node);
  const double sin_i = std::sin(inc), cos_i = std::cos(inc);

  SatelliteState s;
  s.position = {xp * cos_n - yp * cos_i * sin_n,
                xp * sin_n + yp * cos_i * cos_n,
                yp * sin_i};
  s.velocity = {xp_dot * cos_n - yp_dot * cos_i * sin_n + yp * sin_i * sin_n * inc_dot -
                    s.position.y() * node_dot,
                xp_dot * sin_n + yp_dot * cos_i * cos_n - yp * sin_i * cos_n * inc_dot +
                    s.position.x() * node_dot,
                yp_dot * sin_i + yp * cos_i * inc_dot};
  return s;
}

void ecef_to_geodetic(const EcefPosition& p, double& lat, double& lon, double& height) {
  const double e2 = kWgs84F * (2.0 - kWgs84F);
  const double rho = std::hypot(p.x(), p.y());
  lon = std::atan2(p.y(), p.x());
  lat = std::atan2(p.z(), rho * (1.0 - e2));
  height = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double sin_lat = std::sin(lat);
    const double nrad = kWgs84A / std::sqrt(1.0 - e2 * sin_lat * sin_lat);
    height = rho / std::cos(lat) - nrad;
    lat = std::atan2(p.z(), rho * (1.0 - e2 * nrad / (nrad + height)));
  }
}

EcefPosition geodetic_to_ecef(double lat, double lon, double height) {
  const double e2 = kWgs84F * (2.0 - kWgs84F);
  const double sin_lat = std::sin(lat), cos_lat = std::cos(lat);
  const double nrad = kWgs84A / std::sqrt(1.0 - e2 * sin_lat * sin_lat);
  return {(nrad + height) * cos_lat * std::cos(lon),
          (nrad + height) * cos_lat * std::sin(lon),
          (nrad * (1.0 - e2) + height) * sin_lat};
}

Eigen::Matrix3d enu_rotation(double lat, double lon) {
  const double sl = std::sin(lat), cl = std::cos(lat);
  const double so = std::sin(lon), co = std::cos(lon);
  Eigen::Matrix3d r;
  r << -so, co, 0.0,
       -sl * co, -sl * so, cl,
       cl * co, cl * so, sl;
  return r;
}

ElevationAzimuth elevation_azimuth(const EcefPosition& sat, const EcefPosition& rx) {
  double lat, lon, h;
  ecef_to_geodetic(rx, lat, lon, h);
  const Vec3 enu = enu_rotation(lat, lon) * (sat - rx);
  const double horiz = std::hypot(enu.x(), enu.y());
  ElevationAzimuth ea;
  ea.elevation = std::atan2(enu.z(), horiz) * 180.0 / M_PI;
  double az = std::atan2(enu.x(), enu.y()) * 180.0 / M_PI;
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az -= 360.0;
  ea.azimuth = az;
  return ea;
}

double range_rate(const SatelliteState& sat, const EcefPosition& rx) {
  const Vec3 los = (sat.position - rx).normalized();
  return sat.velocity.dot(los);
}

}  // namespace mpdet
