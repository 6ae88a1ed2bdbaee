#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mpdet/errors.hpp"
#include "mpdet/rinex.hpp"

using namespace mpdet;
using namespace mpdet::rinex;

namespace {

std::string header_line(std::string body, const std::string& label) {
  body.resize(60, ' ');
  return body + label + "\n";
}

std::string obs_header(const std::string& codes = "G    4 C1C L1C D1C S1C") {
  return header_line("     3.04           OBSERVATION DATA    G: GPS",
                     "RINEX VERSION / TYPE") +
         header_line("TEST", "MARKER NAME") +
         header_line("  3120000.0000  4000000.0000  3750000.0000",
                     "APPROX POSITION XYZ") +
         header_line(codes, "SYS / # / OBS TYPES") + header_line("", "END OF HEADER");
}

std::string obs_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%14.3f  ", v);
  return buf;
}

ObservationFile parse_text(const std::string& text, ParseStats* stats = nullptr) {
  std::istringstream in(text);
  return parse_observation(in, stats);
}

std::string nav_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%19.12E", v);
  return buf;
}

std::string crafted_nav_record(const std::string& sat, double toe, double sqrt_a) {
  // toe 302400 in week 2200 is 2022-03-95... use a fixed civil stamp; the
  // parser reads toe from broadcast-orbit line 3, not from the stamp.
  std::string text = sat + " 2022 03 01 12 00 00" + nav_value(0) + nav_value(0) +
                     nav_value(0) + "\n";
  const double rows[7][4] = {{0, 102.5, 4.5e-9, 1.2},
                             {3.2e-6, 0.0123, 7.1e-6, sqrt_a},
                             {toe, 1.1e-7, 2.2, -2.0e-7},
                             {0.96, 260.4, -1.7, -8.1e-9},
                             {3.0e-10, 0, 2200, 0},
                             {2.0, 0, 0, 0},
                             {0, 4, 0, 0}};
  for (const auto& row : rows) {
    text += "    ";
    for (double v : row) text += nav_value(v);
    text += "\n";
  }
  return text;
}

std::string nav_header() {
  return header_line("     3.04           N: GNSS NAV DATA    G: GPS",
                     "RINEX VERSION / TYPE") +
         header_line("", "END OF HEADER");
}

}  // namespace

TEST_CASE("crafted single-record observation file round-trips exactly") {
  std::string text = obs_header() + "> 2022 03 01 00 00  0.0000000  0  1\n" + "G05" +
                     obs_value(20000000.123) + obs_value(105000000.0) + obs_value(1000.5) +
                     obs_value(45.0) + "\n";
  ParseStats stats;
  const auto file = parse_text(text, &stats);
  CHECK(file.header.marker_name == "TEST");
  CHECK(file.header.approx_position.x() == doctest::Approx(3120000.0));
  REQUIRE(file.epochs.size() == 1);
  REQUIRE(file.epochs[0].records.size() == 1);
  const auto& rec = file.epochs[0].records[0];
  CHECK(rec.satellite == "G05");
  CHECK(rec.pseudorange.value() == 20000000.123);
  CHECK(rec.doppler.value() == 1000.5);
  CHECK(rec.cn0.value() == 45.0);
  CHECK(stats.returned_records == 1);
}

TEST_CASE("blank observation field yields an absent value, not zero") {
  std::string text = obs_header() + "> 2022 03 01 00 00  0.0000000  0  1\n" + "G05" +
                     obs_value(20000000.123) + obs_value(105000000.0) + obs_value(1000.5) +
                     std::string(16, ' ') + "\n";
  const auto file = parse_text(text);
  CHECK_FALSE(file.epochs[0].records[0].cn0.has_value());
  CHECK(file.epochs[0].records[0].pseudorange.has_value());
}

TEST_CASE("corrupted epoch year reports MalformedEpoch with a line number") {
  std::string text = obs_header() + "> 20xx 03 01 00 00  0.0000000  0  0\n";
  try {
    parse_text(text);
    FAIL("expected MalformedEpoch");
  } catch (const MalformedEpoch& e) {
    CHECK(e.line_number == 6);
    CHECK(std::string(e.what()).find("line 6") != std::string::npos);
  }
}

TEST_CASE("header error contracts") {
  CHECK_THROWS_AS(parse_text("garbage\n"), MalformedHeader);
  CHECK_THROWS_AS(
      parse_text(header_line("     2.11           OBSERVATION DATA    G: GPS",
                             "RINEX VERSION / TYPE") +
                 header_line("", "END OF HEADER")),
      VersionUnsupported);
  // no SYS / # / OBS TYPES
  CHECK_THROWS_AS(parse_text(header_line("     3.04           OBSERVATION DATA    G: GPS",
                                         "RINEX VERSION / TYPE") +
                             header_line("", "END OF HEADER")),
                  MalformedHeader);
  // no END OF HEADER
  CHECK_THROWS_AS(parse_text(header_line("     3.04           OBSERVATION DATA    G: GPS",
                                         "RINEX VERSION / TYPE")),
                  MalformedHeader);
}

TEST_CASE("write -> parse is value-identical for a crafted file") {
  ObservationFile f;
  f.header.marker_name = "RT01";
  f.header.approx_position = {3120000.1234, 4000000.5678, 3750000.9};
  f.header.obs_codes['G'] = {"C1C", "D1C", "S1C"};
  const GpsTime t0 = from_civil({2022, 3, 1, 10, 0, 0.0});
  for (int e = 0; e < 2; ++e) {
    ObservationEpoch ep;
    ep.time = t0.plus(e * 1.0);
    for (int s = 0; s < 3; ++s) {
      ObservationRecord rec;
      char id[4];
      std::snprintf(id, sizeof id, "G%02d", 5 + 3 * s);
      rec.satellite = id;
      rec.pseudorange = 2.0e7 + 1234.567 * s + e;
      rec.doppler = -2500.25 + 100.0 * s;
      rec.cn0 = 38.5 + s;
      ep.records.push_back(rec);
    }
    f.epochs.push_back(ep);
  }

  std::ostringstream out;
  write_observation(f, out);
  const auto g = parse_text(out.str());
  CHECK(g.header.marker_name == f.header.marker_name);
  CHECK((g.header.approx_position - f.header.approx_position).norm() < 1e-3);
  REQUIRE(g.epochs.size() == 2);
  for (size_t e = 0; e < 2; ++e) {
    CHECK(g.epochs[e].time == f.epochs[e].time);
    REQUIRE(g.epochs[e].records.size() == 3);
    for (size_t s = 0; s < 3; ++s) {
      CHECK(g.epochs[e].records[s].satellite == f.epochs[e].records[s].satellite);
      CHECK(std::fabs(*g.epochs[e].records[s].pseudorange -
                      *f.epochs[e].records[s].pseudorange) < 1e-3);
      CHECK(std::fabs(*g.epochs[e].records[s].doppler - *f.epochs[e].records[s].doppler) <
            1e-3);
      CHECK(std::fabs(*g.epochs[e].records[s].cn0 - *f.epochs[e].records[s].cn0) < 1e-3);
    }
  }
}

TEST_CASE("empty epoch list writes a valid header-only file") {
  ObservationFile f;
  f.header.marker_name = "EMPTY";
  f.header.obs_codes['G'] = {"C1C", "D1C", "S1C"};
  std::ostringstream out;
  write_observation(f, out);
  const auto g = parse_text(out.str());
  CHECK(g.epochs.empty());
  CHECK(g.header.marker_name == "EMPTY");
}

TEST_CASE("epoch satellite count field matches the record count") {
  ObservationFile f;
  f.header.obs_codes['G'] = {"C1C", "D1C", "S1C"};
  ObservationEpoch ep;
  ep.time = from_civil({2022, 3, 1, 0, 0, 0.0});
  for (int s = 1; s <= 8; ++s) {
    ObservationRecord rec;
    char id[4];
    std::snprintf(id, sizeof id, "G%02d", s);
    rec.satellite = id;
    rec.pseudorange = 2.1e7;
    rec.doppler = 0.0;
    rec.cn0 = 44.0;
    ep.records.push_back(rec);
  }
  f.epochs.push_back(ep);
  std::ostringstream out;
  write_observation(f, out);
  std::istringstream lines(out.str());
  std::string line;
  while (std::getline(lines, line))
    if (!line.empty() && line[0] == '>') break;
  CHECK(line.substr(32, 3) == "  8");
  CHECK(parse_text(out.str()).epochs[0].records.size() == 8);
}

TEST_CASE("non-GPS records are skipped and counted") {
  std::string text = obs_header() + "> 2022 03 01 00 00  0.0000000  0  3\n" + "G05" +
                     obs_value(2.0e7) + obs_value(0) + obs_value(0) + obs_value(45) + "\n" +
                     "R12" + obs_value(2.0e7) + "\n" + "E19" + obs_value(2.6e7) + "\n";
  ParseStats stats;
  const auto file = parse_text(text, &stats);
  CHECK(file.epochs[0].records.size() == 1);
  CHECK(stats.returned_records == 1);
  CHECK(stats.skipped_non_gps == 2);
  CHECK(stats.total_records() == 3);
}

TEST_CASE("event epochs are skipped with a count") {
  std::string text = obs_header() + "> 2022 03 01 00 00  0.0000000  4  1\n" +
                     "ANTENNA MOVED\n" + "> 2022 03 01 00 00  1.0000000  0  0\n";
  ParseStats stats;
  const auto file = parse_text(text, &stats);
  CHECK(file.epochs.size() == 1);
  CHECK(stats.skipped_event_epochs == 1);
}

TEST_CASE("non-increasing epochs are rejected") {
  std::string text = obs_header() + "> 2022 03 01 00 00  1.0000000  0  0\n" +
                     "> 2022 03 01 00 00  1.0000000  0  0\n";
  CHECK_THROWS_AS(parse_text(text), MalformedEpoch);
}

TEST_CASE("duplicate satellite in one epoch is rejected") {
  std::string text = obs_header() + "> 2022 03 01 00 00  0.0000000  0  2\n" + "G05" +
                     obs_value(2.0e7) + "\n" + "G05" + obs_value(2.1e7) + "\n";
  CHECK_THROWS_AS(parse_text(text), MalformedEpoch);
}

TEST_CASE("parser returns structured errors on arbitrary bytes") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> len(0, 400);
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    if (trial % 3 == 0) text = obs_header();  // valid prefix, garbage body
    const int n = len(rng);
    for (int i = 0; i < n; ++i) text.push_back(static_cast<char>(byte(rng)));
    try {
      parse_text(text);
    } catch (const Error&) {
      // structured failure is the contract; anything else aborts the test
    }
  }
  CHECK(true);
}

TEST_CASE("generator round-trip property") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    ObservationFile f;
    f.header.marker_name = "GEN";
    f.header.approx_position = {3.1e6 + 1e5 * u01(rng), 4.0e6, 3.7e6};
    f.header.obs_codes['G'] = {"C1C", "D1C", "S1C"};
    const GpsTime t0 = from_civil({2022, 3, 1, 6, 0, 0.0});
    const int n_epochs = 1 + static_cast<int>(u01(rng) * 4);
    for (int e = 0; e < n_epochs; ++e) {
      ObservationEpoch ep;
      ep.time = t0.plus(e * 1.0);
      for (int prn = 1; prn <= 32; ++prn) {
        if (u01(rng) < 0.7) continue;
        ObservationRecord rec;
        char id[4];
        std::snprintf(id, sizeof id, "G%02d", prn);
        rec.satellite = id;
        rec.pseudorange = 1.9e7 + 1.0e7 * u01(rng);
        rec.doppler = -4000.0 + 8000.0 * u01(rng);
        rec.cn0 = 20.0 + 40.0 * u01(rng);
        ep.records.push_back(rec);
      }
      f.epochs.push_back(ep);
    }
    std::ostringstream out;
    write_observation(f, out);
    const auto g = parse_text(out.str());
    REQUIRE(g.epochs.size() == f.epochs.size());
    for (size_t e = 0; e < f.epochs.size(); ++e) {
      REQUIRE(g.epochs[e].records.size() == f.epochs[e].records.size());
      for (size_t s = 0; s < f.epochs[e].records.size(); ++s) {
        const auto& a = f.epochs[e].records[s];
        const auto& b = g.epochs[e].records[s];
        CHECK(a.satellite == b.satellite);
        CHECK(std::fabs(*a.pseudorange - *b.pseudorange) <= 1e-3);
        CHECK(std::fabs(*a.doppler - *b.doppler) <= 1e-3);
        CHECK(std::fabs(*a.cn0 - *b.cn0) <= 1e-3);
      }
    }
  }
}

TEST_CASE("navigation record fields are read back exactly") {
  std::istringstream in(nav_header() + crafted_nav_record("G05", 302400.0, 5153.700012));
  const auto nav = parse_navigation(in);
  REQUIRE(nav.ephemerides.size() == 1);
  const auto& eph = nav.ephemerides.begin()->second;
  CHECK(eph.satellite == "G05");
  CHECK(eph.sqrt_a == doctest::Approx(5153.700012).epsilon(1e-12));
  CHECK(eph.toe == 302400.0);
  CHECK(eph.week == 2200);
  CHECK(eph.crs == doctest::Approx(102.5));
  CHECK(eph.e == doctest::Approx(0.0123));
  CHECK(eph.omega0 == doctest::Approx(2.2));
  CHECK(eph.idot == doctest::Approx(3.0e-10));
}

TEST_CASE("two ephemerides for one satellite key separately") {
  std::istringstream in(nav_header() + crafted_nav_record("G05", 302400.0, 5153.7) +
                        crafted_nav_record("G05", 309600.0, 5153.7));
  const auto nav = parse_navigation(in);
  CHECK(nav.ephemerides.size() == 2);
  CHECK(nav.satellites() == std::vector<std::string>{"G05"});
}

TEST_CASE("duplicate (satellite, toe) keys are rejected") {
  std::istringstream in(nav_header() + crafted_nav_record("G05", 302400.0, 5153.7) +
                        crafted_nav_record("G05", 302400.0, 5153.8));
  CHECK_THROWS_AS(parse_navigation(in), MalformedRecord);
}

TEST_CASE("truncated navigation record is rejected") {
  const std::string full = crafted_nav_record("G05", 302400.0, 5153.7);
  // keep the epoch line plus 4 of the 7 broadcast-orbit lines
  std::string cut;
  std::istringstream lines(full);
  std::string line;
  for (int i = 0; i < 5 && std::getline(lines, line); ++i) cut += line + "\n";
  std::istringstream in(nav_header() + cut);
  CHECK_THROWS_AS(parse_navigation(in), MalformedRecord);
}

TEST_CASE("navigation write -> parse round trip") {
  NavigationFile nav;
  Ephemeris e;
  e.satellite = "G17";
  e.week = 2200;
  e.toe = 302400.0;
  e.sqrt_a = 5153.712345;
  e.e = 0.0213;
  e.i0 = 0.9571;
  e.omega0 = -2.132;
  e.omega = 1.77;
  e.m0 = 0.456;
  e.delta_n = 4.3e-9;
  e.idot = -2.1e-10;
  e.omegadot = -8.3e-9;
  e.cuc = 1.2e-6;
  e.cus = -7.0e-6;
  e.crc = 221.0;
  e.crs = -13.5;
  e.cic = 3.1e-8;
  e.cis = -9.0e-8;
  nav.insert(e);

  std::ostringstream out;
  write_navigation(nav, out);
  std::istringstream in(out.str());
  const auto back = parse_navigation(in);
  REQUIRE(back.ephemerides.size() == 1);
  const auto& b = back.ephemerides.begin()->second;
  CHECK(b.satellite == e.satellite);
  CHECK(b.week == e.week);
  CHECK(b.toe == doctest::Approx(e.toe).epsilon(1e-12));
  CHECK(b.sqrt_a == doctest::Approx(e.sqrt_a).epsilon(1e-12));
  CHECK(b.omega0 == doctest::Approx(e.omega0).epsilon(1e-11));
  CHECK(b.crc == doctest::Approx(e.crc).epsilon(1e-11));
  CHECK(b.cis == doctest::Approx(e.cis).epsilon(1e-11));
}

TEST_CASE("nearest-toe ephemeris lookup respects the fit interval") {
  NavigationFile nav;
  Ephemeris e;
  e.satellite = "G05";
  e.week = 2200;
  e.toe = 302400.0;
  e.sqrt_a = 5153.7;
  nav.insert(e);
  Ephemeris e2 = e;
  e2.toe = 309600.0;
  nav.insert(e2);

  CHECK(nav.find("G05", GpsTime{2200, 303000.0})->toe == 302400.0);
  CHECK(nav.find("G05", GpsTime{2200, 308000.0})->toe == 309600.0);
  CHECK(nav.find("G05", GpsTime{2200, 400000.0}) == nullptr);
  CHECK(nav.find("G09", GpsTime{2200, 303000.0}) == nullptr);
}

TEST_CASE("GPS/civil time conversion round trips") {
  const GpsTime t{2200, 259217.5};
  const CivilTime c = to_civil(t);
  const GpsTime back = from_civil(c);
  CHECK(back.week == t.week);
  CHECK(back.tow == doctest::Approx(t.tow).epsilon(1e-12));
  CHECK(parse_time_key(time_key(t)).tow == doctest::Approx(t.tow));
}
