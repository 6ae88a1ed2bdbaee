#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace mpdet {

inline constexpr double kSecondsPerWeek = 604800.0;

// GPS system time: week number plus seconds of week. No leap seconds.
struct GpsTime {
  int week = 0;
  double tow = 0.0;  // seconds of week, [0, 604800)

  double total_seconds() const { return week * kSecondsPerWeek + tow; }

  GpsTime plus(double seconds) const {
    double t = tow + seconds;
    int w = week;
    while (t >= kSecondsPerWeek) {
      t -= kSecondsPerWeek;
      ++w;
    }
    while (t < 0.0) {
      t += kSecondsPerWeek;
      --w;
    }
    return {w, t};
  }

  friend double operator-(const GpsTime& a, const GpsTime& b) {
    return (a.week - b.week) * kSecondsPerWeek + (a.tow - b.tow);
  }
  friend bool operator==(const GpsTime& a, const GpsTime& b) {
    return a.week == b.week && a.tow == b.tow;
  }
  friend bool operator<(const GpsTime& a, const GpsTime& b) { return a - b < 0.0; }
};

struct CivilTime {
  int year, month, day, hour, minute;
  double second;
};

// Calendar conversion against the GPS epoch 1980-01-06T00:00:00.
CivilTime to_civil(const GpsTime& t);
GpsTime from_civil(const CivilTime& c);

// Canonical key used to join feature rows with truth labels: "week:tow"
// with tow printed to 0.1 s.
std::string time_key(const GpsTime& t);
GpsTime parse_time_key(const std::string& key);

}  // namespace mpdet
