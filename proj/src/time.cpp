#include "mpdet/time.hpp"

#include <cstdio>
#include <cstdlib>

#include "mpdet/errors.hpp"

namespace mpdet {

namespace {

// Days from 1970-01-01 (Howard Hinnant's civil algorithms).
long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

void civil_from_days(long z, int& y, int& m, int& d) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y += m <= 2;
}

const long kGpsEpochDays = days_from_civil(1980, 1, 6);

}  // namespace

CivilTime to_civil(const GpsTime& t) {
  long day = t.week * 7L + static_cast<long>(t.tow / 86400.0);
  double sod = t.tow - static_cast<long>(t.tow / 86400.0) * 86400.0;
  CivilTime c;
  civil_from_days(kGpsEpochDays + day, c.year, c.month, c.day);
  c.hour = static_cast<int>(sod / 3600.0);
  c.minute = static_cast<int>((sod - c.hour * 3600.0) / 60.0);
  c.second = sod - c.hour * 3600.0 - c.minute * 60.0;
  return c;
}

GpsTime from_civil(const CivilTime& c) {
  long days = days_from_civil(c.year, c.month, c.day) - kGpsEpochDays;
  long week = days / 7;
  double tow = (days - week * 7) * 86400.0 + c.hour * 3600.0 + c.minute * 60.0 + c.second;
  return {static_cast<int>(week), tow};
}

std::string time_key(const GpsTime& t) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%d:%.1f", t.week, t.tow);
  return buf;
}

GpsTime parse_time_key(const std::string& key) {
  auto colon = key.find(':');
  if (colon == std::string::npos) throw Error("bad time key: " + key);
  return {std::atoi(key.substr(0, colon).c_str()), std::atof(key.substr(colon + 1).c_str())};
}

}  // namespace mpdet
