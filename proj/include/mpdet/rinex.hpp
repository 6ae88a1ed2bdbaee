#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpdet/orbits.hpp"
#include "mpdet/time.hpp"

namespace mpdet {
namespace rinex {

// One satellite's L1 measurements at one epoch. Blank fields stay absent;
// 0.0 is never used as a stand-in.
struct ObservationRecord {
  std::string satellite;  // system char + 2-digit PRN, e.g. "G05"
  std::optional<double> pseudorange;  // m (C1C)
  std::optional<double> doppler;      // Hz (D1C)
  std::optional<double> cn0;          // dB-Hz (S1C)
  bool loss_of_lock = false;
};

struct ObservationEpoch {
  GpsTime time;
  std::vector<ObservationRecord> records;  // at most one per satellite
};

struct ObservationHeader {
  std::string marker_name;
  EcefPosition approx_position = EcefPosition::Zero();
  // Declared observation codes per constellation, in file column order.
  std::map<char, std::vector<std::string>> obs_codes;
};

struct ObservationFile {
  ObservationHeader header;
  std::vector<ObservationEpoch> epochs;  // strictly increasing in time
};

// Per-parse bookkeeping; skipped + returned always equals records seen.
struct ParseStats {
  long returned_records = 0;
  long skipped_non_gps = 0;
  long skipped_event_epochs = 0;
  long out_of_band_values = 0;
  long total_records() const { return returned_records + skipped_non_gps; }
};

struct NavigationFile {
  // keyed by (satellite, toe seconds-of-week)
  std::map<std::pair<std::string, double>, Ephemeris> ephemerides;

  void insert(const Ephemeris& eph);
  // Nearest-toe ephemeris within the fit interval, or nullptr.
  const Ephemeris* find(const std::string& satellite, const GpsTime& t) const;
  std::vector<std::string> satellites() const;
};

ObservationFile parse_observation(std::istream& in, ParseStats* stats = nullptr);
void write_observation(const ObservationFile& file, std::ostream& out);

NavigationFile parse_navigation(std::istream& in);
void write_navigation(const NavigationFile& file, std::ostream& out);

// File-path conveniences.
ObservationFile read_observation_file(const std::string& path, ParseStats* stats = nullptr);
void write_observation_file(const ObservationFile& file, const std::string& path);
NavigationFile read_navigation_file(const std::string& path);
void write_navigation_file(const NavigationFile& file, const std::string& path);

}  // namespace rinex
}  // namespace mpdet
