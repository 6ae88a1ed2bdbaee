#include "mpdet/rinex.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mpdet/errors.hpp"

namespace mpdet {
namespace rinex {

namespace {

constexpr double kCn0Min = 0.0, kCn0Max = 70.0;
constexpr double kPrMin = 1.8e7, kPrMax = 3.0e7;

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string field(const std::string& line, size_t pos, size_t len) {
  if (pos >= line.size()) return {};
  return line.substr(pos, std::min(len, line.size() - pos));
}

std::string header_label(const std::string& line) { return trim(field(line, 60, 20)); }

bool parse_double_strict(const std::string& raw, double& out) {
  std::string s = trim(raw);
  if (s.empty()) return false;
  for (auto& c : s)
    if (c == 'D' || c == 'd') c = 'E';
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw Error("unparseable numeric field '" + s + "'");
  return true;
}

int parse_int_strict(const std::string& raw, const char* what, long line_no) {
  std::string s = trim(raw);
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size())
    throw MalformedEpoch(std::string("bad ") + what + " field '" + s + "'", line_no);
  return static_cast<int>(v);
}

std::string normalize_sat(std::string sat) {
  if (sat.size() == 3 && sat[1] == ' ') sat[1] = '0';
  return sat;
}

struct LineReader {
  std::istream& in;
  long line_no = 0;
  bool next(std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    return true;
  }
};

}  // namespace

void NavigationFile::insert(const Ephemeris& eph) {
  auto key = std::make_pair(eph.satellite, eph.toe);
  if (ephemerides.count(key))
    throw MalformedRecord("duplicate ephemeris for " + eph.satellite + " at toe " +
                          std::to_string(eph.toe));
  ephemerides.emplace(key, eph);
}

const Ephemeris* NavigationFile::find(const std::string& satellite, const GpsTime& t) const {
  const Ephemeris* best = nullptr;
  double best_dt = kFitIntervalSeconds;
  for (const auto& [key, eph] : ephemerides) {
    if (key.first != satellite) continue;
    double dt = std::fabs(t - eph.toe_time());
    if (dt <= best_dt) {
      best_dt = dt;
      best = &eph;
    }
  }
  return best;
}

std::vector<std::string> NavigationFile::satellites() const {
  std::vector<std::string> out;
  for (const auto& [key, eph] : ephemerides)
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  return out;
}

ObservationFile parse_observation(std::istream& in, ParseStats* stats) {
  ParseStats local;
  ParseStats& st = stats ? *stats : local;
  LineReader rd{in};
  std::string line;

  ObservationFile file;
  bool saw_version = false, saw_obs_types = false, header_done = false;
  char pending_sys = 0;

  while (!header_done) {
    if (!rd.next(line)) throw MalformedHeader("END OF HEADER not found");
    const std::string label = header_label(line);
    if (rd.line_no == 1) {
      if (label != "RINEX VERSION / TYPE")
        throw MalformedHeader("first line is not RINEX VERSION / TYPE");
      double version = 0.0;
      try {
        parse_double_strict(field(line, 0, 9), version);
      } catch (const Error&) {
        throw MalformedHeader("unreadable version field");
      }
      if (static_cast<int>(version) != 3)
        throw VersionUnsupported("RINEX version " + std::to_string(version) +
                                 " not supported (need 3.x)");
      saw_version = true;
      continue;
    }
    if (label == "MARKER NAME") {
      file.header.marker_name = trim(field(line, 0, 60));
    } else if (label == "APPROX POSITION XYZ") {
      for (int i = 0; i < 3; ++i) {
        double v = 0.0;
        try {
          parse_double_strict(field(line, i * 14, 14), v);
        } catch (const Error&) {
          throw MalformedHeader("bad APPROX POSITION XYZ field");
        }
        file.header.approx_position[i] = v;
      }
    } else if (label == "SYS / # / OBS TYPES") {
      char sys = line.empty() ? ' ' : line[0];
      std::vector<std::string>* codes;
      if (sys != ' ') {
        pending_sys = sys;
        codes = &file.header.obs_codes[sys];
      } else if (pending_sys) {
        codes = &file.header.obs_codes[pending_sys];  // continuation
      } else {
        throw MalformedHeader("SYS / # / OBS TYPES continuation without a system line");
      }
      for (size_t pos = 7; pos + 3 <= 60; pos += 4) {
        std::string code = trim(field(line, pos, 3));
        if (!code.empty()) codes->push_back(code);
      }
      saw_obs_types = true;
    } else if (label == "END OF HEADER") {
      header_done = true;
    }
  }
  if (!saw_version || !saw_obs_types)
    throw MalformedHeader("header missing SYS / # / OBS TYPES");
  if (!file.header.obs_codes.count('G'))
    throw MalformedHeader("header declares no GPS observation codes");

  const auto& gcodes = file.header.obs_codes.at('G');
  auto code_index = [&](const std::string& c) -> int {
    auto it = std::find(gcodes.begin(), gcodes.end(), c);
    return it == gcodes.end() ? -1 : static_cast<int>(it - gcodes.begin());
  };
  const int idx_c1c = code_index("C1C"), idx_d1c = code_index("D1C"),
            idx_s1c = code_index("S1C"), idx_l1c = code_index("L1C");

  while (rd.next(line)) {
    if (trim(line).empty()) continue;
    if (line[0] != '>')
      throw MalformedEpoch("expected epoch line starting with '>'", rd.line_no);
    CivilTime c;
    c.year = parse_int_strict(field(line, 2, 4), "year", rd.line_no);
    c.month = parse_int_strict(field(line, 7, 2), "month", rd.line_no);
    c.day = parse_int_strict(field(line, 10, 2), "day", rd.line_no);
    c.hour = parse_int_strict(field(line, 13, 2), "hour", rd.line_no);
    c.minute = parse_int_strict(field(line, 16, 2), "minute", rd.line_no);
    try {
      if (!parse_double_strict(field(line, 18, 11), c.second))
        throw Error("blank seconds field");
    } catch (const Error&) {
      throw MalformedEpoch("bad seconds field", rd.line_no);
    }
    const int flag = parse_int_strict(field(line, 31, 1), "epoch flag", rd.line_no);
    const int nsat = parse_int_strict(field(line, 32, 3), "satellite count", rd.line_no);
    if (c.month < 1 || c.month > 12 || c.day < 1 || c.day > 31 || c.hour > 23 ||
        c.minute > 59 || nsat < 0)
      throw MalformedEpoch("epoch fields out of range", rd.line_no);

    if (flag != 0) {  // event epoch: skip its records
      ++st.skipped_event_epochs;
      for (int i = 0; i < nsat; ++i)
        if (!rd.next(line)) throw MalformedEpoch("truncated event epoch", rd.line_no);
      continue;
    }

    ObservationEpoch epoch;
    epoch.time = from_civil(c);
    if (!file.epochs.empty() && !(file.epochs.back().time < epoch.time))
      throw MalformedEpoch("epochs not strictly increasing in time", rd.line_no);

    for (int i = 0; i < nsat; ++i) {
      if (!rd.next(line)) throw MalformedEpoch("truncated epoch record block", rd.line_no);
      const std::string sat = normalize_sat(field(line, 0, 3));
      if (sat.size() < 3 || !std::isalpha(static_cast<unsigned char>(sat[0])))
        throw MalformedEpoch("bad satellite id '" + sat + "'", rd.line_no);
      if (sat[0] != 'G') {
        ++st.skipped_non_gps;
        continue;
      }
      auto value_at = [&](int idx) -> std::optional<double> {
        if (idx < 0) return std::nullopt;
        double v = 0.0;
        try {
          if (!parse_double_strict(field(line, 3 + 16 * idx, 14), v)) return std::nullopt;
        } catch (const Error& e) {
          throw MalformedEpoch(e.what(), rd.line_no);
        }
        return v;
      };
      ObservationRecord rec;
      rec.satellite = sat;
      rec.pseudorange = value_at(idx_c1c);
      rec.doppler = value_at(idx_d1c);
      rec.cn0 = value_at(idx_s1c);
      const int lli_idx = idx_l1c >= 0 ? idx_l1c : idx_c1c;
      if (lli_idx >= 0) {
        const std::string lli = trim(field(line, 3 + 16 * lli_idx + 14, 1));
        rec.loss_of_lock = !lli.empty() && (std::atoi(lli.c_str()) & 1);
      }
      if (rec.cn0 && (*rec.cn0 < kCn0Min || *rec.cn0 > kCn0Max)) {
        rec.cn0.reset();
        ++st.out_of_band_values;
      }
      if (rec.pseudorange && (*rec.pseudorange < kPrMin || *rec.pseudorange > kPrMax)) {
        rec.pseudorange.reset();
        ++st.out_of_band_values;
      }
      for (const auto& r : epoch.records)
        if (r.satellite == sat)
          throw MalformedEpoch("duplicate record for " + sat, rd.line_no);
      epoch.records.push_back(std::move(rec));
      ++st.returned_records;
    }
    file.epochs.push_back(std::move(epoch));
  }
  return file;
}

void write_observation(const ObservationFile& file, std::ostream& out) {
  char buf[128];
  auto line = [&](const std::string& body, const std::string& label) {
    std::string l = body;
    l.resize(60, ' ');
    out << l << label << "\n";
  };
  line("     3.04           OBSERVATION DATA    G: GPS", "RINEX VERSION / TYPE");
  line(file.header.marker_name, "MARKER NAME");
  std::snprintf(buf, sizeof buf, "%14.4f%14.4f%14.4f", file.header.approx_position.x(),
                file.header.approx_position.y(), file.header.approx_position.z());
  line(buf, "APPROX POSITION XYZ");
  line("G    3 C1C D1C S1C", "SYS / # / OBS TYPES");
  line("", "END OF HEADER");

  for (const auto& epoch : file.epochs) {
    const CivilTime c = to_civil(epoch.time);
    std::snprintf(buf, sizeof buf, "> %04d %02d %02d %02d %02d%11.7f  0%3d", c.year, c.month,
                  c.day, c.hour, c.minute, c.second, static_cast<int>(epoch.records.size()));
    out << buf << "\n";
    for (const auto& rec : epoch.records) {
      out << rec.satellite;
      std::snprintf(buf, sizeof buf, "%14.3f  %14.3f  %14.3f  ", rec.pseudorange.value(),
                    rec.doppler.value(), rec.cn0.value());
      out << buf << "\n";
    }
  }
}

NavigationFile parse_navigation(std::istream& in) {
  LineReader rd{in};
  std::string line;
  bool header_done = false;
  while (!header_done) {
    if (!rd.next(line)) throw MalformedHeader("END OF HEADER not found");
    const std::string label = header_label(line);
    if (rd.line_no == 1) {
      if (label != "RINEX VERSION / TYPE")
        throw MalformedHeader("first line is not RINEX VERSION / TYPE");
      double version = 0.0;
      try {
        parse_double_strict(field(line, 0, 9), version);
      } catch (const Error&) {
        throw MalformedHeader("unreadable version field");
      }
      if (static_cast<int>(version) != 3)
        throw VersionUnsupported("RINEX version " + std::to_string(version) +
                                 " not supported (need 3.x)");
    } else if (label == "END OF HEADER") {
      header_done = true;
    }
  }

  NavigationFile nav;
  while (rd.next(line)) {
    if (trim(line).empty()) continue;
    if (line[0] != 'G')
      throw MalformedRecord("unsupported navigation record at line " +
                            std::to_string(rd.line_no) + ": '" + field(line, 0, 3) + "'");
    Ephemeris eph;
    eph.satellite = normalize_sat(field(line, 0, 3));

    double f[7][4] = {};
    auto grab = [&](const std::string& l, size_t pos, const char* what) {
      double v = 0.0;
      try {
        if (!parse_double_strict(field(l, pos, 19), v)) v = 0.0;
      } catch (const Error&) {
        throw MalformedRecord(std::string("bad ") + what + " field at line " +
                              std::to_string(rd.line_no));
      }
      return v;
    };
    grab(line, 23, "clock");  // af0..af2 present but unused
    for (int i = 0; i < 7; ++i) {
      if (!rd.next(line) || trim(line).empty() || line[0] == 'G')
        throw MalformedRecord("truncated ephemeris record for " + eph.satellite +
                              " near line " + std::to_string(rd.line_no));
      for (int j = 0; j < 4; ++j) f[i][j] = grab(line, 4 + 19 * j, "orbit");
    }
    eph.crs = f[0][1];
    eph.delta_n = f[0][2];
    eph.m0 = f[0][3];
    eph.cuc = f[1][0];
    eph.e = f[1][1];
    eph.cus = f[1][2];
    eph.sqrt_a = f[1][3];
    eph.toe = f[2][0];
    eph.cic = f[2][1];
    eph.omega0 = f[2][2];
    eph.cis = f[2][3];
    eph.i0 = f[3][0];
    eph.crc = f[3][1];
    eph.omega = f[3][2];
    eph.omegadot = f[3][3];
    eph.idot = f[4][0];
    eph.week = static_cast<int>(f[4][2]);
    nav.insert(eph);
  }
  return nav;
}

void write_navigation(const NavigationFile& file, std::ostream& out) {
  char buf[128];
  auto line = [&](const std::string& body, const std::string& label) {
    std::string l = body;
    l.resize(60, ' ');
    out << l << label << "\n";
  };
  line("     3.04           N: GNSS NAV DATA    G: GPS", "RINEX VERSION / TYPE");
  line("", "END OF HEADER");

  auto e19 = [&](double v) {
    std::snprintf(buf, sizeof buf, "%19.12E", v);
    out << buf;
  };
  for (const auto& [key, eph] : file.ephemerides) {
    const CivilTime c = to_civil(eph.toe_time());
    std::snprintf(buf, sizeof buf, "%s %04d %02d %02d %02d %02d %02d", eph.satellite.c_str(),
                  c.year, c.month, c.day, c.hour, c.minute, static_cast<int>(c.second));
    out << buf;
    for (int i = 0; i < 3; ++i) e19(0.0);  // clock polynomial unused
    out << "\n";
    const double rows[7][4] = {
        {0.0, eph.crs, eph.delta_n, eph.m0},
        {eph.cuc, eph.e, eph.cus, eph.sqrt_a},
        {eph.toe, eph.cic, eph.omega0, eph.cis},
        {eph.i0, eph.crc, eph.omega, eph.omegadot},
        {eph.idot, 0.0, static_cast<double>(eph.week), 0.0},
        {0.0, 0.0, 0.0, 0.0},
        {0.0, 0.0, 0.0, 0.0}};
    for (const auto& row : rows) {
      out << "    ";
      for (double v : row) e19(v);
      out << "\n";
    }
  }
}

namespace {
std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  return in;
}
std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  return out;
}
}  // namespace

ObservationFile read_observation_file(const std::string& path, ParseStats* stats) {
  auto in = open_in(path);
  return parse_observation(in, stats);
}

void write_observation_file(const ObservationFile& file, const std::string& path) {
  auto out = open_out(path);
  write_observation(file, out);
}

NavigationFile read_navigation_file(const std::string& path) {
  auto in = open_in(path);
  return parse_navigation(in);
}

void write_navigation_file(const NavigationFile& file, const std::string& path) {
  auto out = open_out(path);
  write_navigation(file, out);
}

}  // namespace rinex
}  // namespace mpdet
