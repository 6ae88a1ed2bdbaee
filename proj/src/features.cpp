#include "mpdet/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mpdet/errors.hpp"

namespace mpdet {
namespace features {

namespace {

const rinex::ObservationRecord* find_record(const rinex::ObservationEpoch& epoch,
                                            const std::string& sat) {
  for (const auto& r : epoch.records)
    if (r.satellite == sat) return &r;
  return nullptr;
}

void check_gap(double gap_s) {
  if (std::fabs(gap_s - kNominalIntervalSeconds) > 1e-9)
    throw NotConsecutive("epoch gap " + std::to_string(gap_s) + " s, expected " +
                         std::to_string(kNominalIntervalSeconds) + " s");
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

double delta_cn0(const rinex::ObservationRecord& prev, const rinex::ObservationRecord& curr,
                 double gap_s) {
  check_gap(gap_s);
  if (curr.loss_of_lock) throw NotConsecutive(curr.satellite + ": loss of lock between epochs");
  if (!prev.cn0 || !curr.cn0)
    throw MissingObservation(curr.satellite + ": C/N0 absent");
  return *curr.cn0 - *prev.cn0;
}

double pr_doppler_consistency(const rinex::ObservationRecord& prev,
                              const rinex::ObservationRecord& curr, double gap_s) {
  check_gap(gap_s);
  if (curr.loss_of_lock) throw NotConsecutive(curr.satellite + ": loss of lock between epochs");
  if (!prev.pseudorange || !curr.pseudorange || !prev.doppler || !curr.doppler)
    throw MissingObservation(curr.satellite + ": pseudorange or Doppler absent");
  const double delta_pr = *curr.pseudorange - *prev.pseudorange;
  const double rate = doppler_to_range_rate(0.5 * (*prev.doppler + *curr.doppler));
  return delta_pr - rate * gap_s;
}

double dd_residual(const DualEpoch& dual, const std::string& sat_k, const std::string& ref_j,
                   const rinex::NavigationFile& nav) {
  if (sat_k == ref_j) throw MissingObservation("reference satellite equals target satellite");
  const auto* k1 = find_record(dual.antenna1, sat_k);
  const auto* k2 = find_record(dual.antenna2, sat_k);
  const auto* j1 = find_record(dual.antenna1, ref_j);
  const auto* j2 = find_record(dual.antenna2, ref_j);
  for (const auto* r : {k1, k2, j1, j2})
    if (!r || !r->pseudorange)
      throw MissingObservation("pseudorange missing for " + sat_k + "/" + ref_j +
                               " at one antenna");

  const Ephemeris* eph_k = nav.find(sat_k, dual.time());
  const Ephemeris* eph_j = nav.find(ref_j, dual.time());
  if (!eph_k || !eph_j)
    throw MissingObservation("no usable ephemeris for " + sat_k + " or " + ref_j);
  const EcefPosition pk = satellite_position(*eph_k, dual.time()).position;
  const EcefPosition pj = satellite_position(*eph_j, dual.time()).position;

  const double measured = (*k1->pseudorange - *k2->pseudorange) -
                          (*j1->pseudorange - *j2->pseudorange);
  const double expected =
      (expected_pseudorange(pk, dual.positions[0]) - expected_pseudorange(pk, dual.positions[1])) -
      (expected_pseudorange(pj, dual.positions[0]) - expected_pseudorange(pj, dual.positions[1]));
  return measured - expected;
}

std::string select_reference(const DualEpoch& dual, const rinex::NavigationFile& nav) {
  std::vector<std::string> common;
  for (const auto& r : dual.antenna1.records)
    if (find_record(dual.antenna2, r.satellite) && nav.find(r.satellite, dual.time()))
      common.push_back(r.satellite);
  if (common.size() < 2)
    throw InsufficientSatellites("need >= 2 common satellites, have " +
                                 std::to_string(common.size()));
  std::sort(common.begin(), common.end());  // ties break toward the lowest PRN
  std::string best;
  double best_elev = -91.0;
  for (const auto& sat : common) {
    const Ephemeris* eph = nav.find(sat, dual.time());
    const auto pos = satellite_position(*eph, dual.time()).position;
    const double elev = elevation_azimuth(pos, dual.positions[0]).elevation;
    if (elev > best_elev) {
      best_elev = elev;
      best = sat;
    }
  }
  return best;
}

std::vector<DualEpoch> pair_streams(const rinex::ObservationFile& a1,
                                    const rinex::ObservationFile& a2) {
  const double baseline =
      (a1.header.approx_position - a2.header.approx_position).norm();
  if (std::fabs(baseline - 0.19) > 1e-3)
    throw Error("antenna baseline " + std::to_string(baseline) + " m, expected 0.19 m");

  std::vector<DualEpoch> stream;
  size_t i = 0, j = 0;
  while (i < a1.epochs.size() && j < a2.epochs.size()) {
    const double dt = a1.epochs[i].time - a2.epochs[j].time;
    if (std::fabs(dt) < 1e-6) {
      DualEpoch d;
      d.antenna1 = a1.epochs[i];
      d.antenna2 = a2.epochs[j];
      d.positions = {a1.header.approx_position, a2.header.approx_position};
      stream.push_back(std::move(d));
      ++i, ++j;
    } else if (dt < 0.0) {
      ++i;
    } else {
      ++j;
    }
  }

  // the collection cadence is 1 s; other intervals are rejected at ingestion
  if (stream.size() >= 2) {
    long at_nominal = 0;
    for (size_t k = 1; k < stream.size(); ++k) {
      const double gap = stream[k].time() - stream[k - 1].time();
      if (gap < kNominalIntervalSeconds - 1e-9)
        throw Error("stream interval " + std::to_string(gap) + " s is below the 1 s cadence");
      if (std::fabs(gap - kNominalIntervalSeconds) < 1e-9) ++at_nominal;
    }
    if (at_nominal == 0) throw Error("stream cadence is not 1 s");
  }
  return stream;
}

std::optional<SignalClass> TruthTable::find(const GpsTime& t, const std::string& sat) const {
  auto it = labels.find({time_key(t), sat});
  if (it == labels.end()) return std::nullopt;
  return it->second;
}

std::vector<FeatureVector> extract_features(const std::vector<DualEpoch>& stream,
                                            const rinex::NavigationFile& nav,
                                            const TruthTable* truth,
                                            const std::string& location,
                                            DropCounters* drops) {
  DropCounters local;
  DropCounters& dc = drops ? *drops : local;
  std::vector<FeatureVector> rows;

  // predecessor record per satellite (antenna 1), with its epoch time
  std::map<std::string, std::pair<GpsTime, rinex::ObservationRecord>> prev;

  for (const auto& dual : stream) {
    std::string ref;
    bool have_ref = false;
    try {
      ref = select_reference(dual, nav);
      have_ref = true;
    } catch (const InsufficientSatellites&) {
    }

    std::map<std::string, std::pair<GpsTime, rinex::ObservationRecord>> next_prev;
    for (const auto& rec : dual.antenna1.records) {
      const std::string& sat = rec.satellite;
      next_prev.emplace(sat, std::make_pair(dual.time(), rec));

      if (!find_record(dual.antenna2, sat)) {
        ++dc.missing_on_one_antenna;
        continue;
      }
      if (!have_ref) {
        ++dc.no_reference;
        continue;
      }
      if (sat == ref) {
        ++dc.reference_satellite;
        continue;
      }
      auto pit = prev.find(sat);
      if (pit == prev.end() ||
          std::fabs((dual.time() - pit->second.first) - kNominalIntervalSeconds) > 1e-9) {
        ++dc.no_predecessor;
        continue;
      }

      const Ephemeris* eph = nav.find(sat, dual.time());
      if (!eph) {
        ++dc.incomplete_measurements;
        continue;
      }
      const auto sat_pos = satellite_position(*eph, dual.time()).position;
      const double elev = elevation_azimuth(sat_pos, dual.positions[0]).elevation;
      if (elev <= 0.0) {
        ++dc.below_horizon;
        continue;
      }

      FeatureVector fv;
      try {
        fv.x[kCn0] = rec.cn0.value();
        fv.x[kDeltaCn0] =
            delta_cn0(pit->second.second, rec, dual.time() - pit->second.first);
        fv.x[kPrDopplerConsistency] =
            pr_doppler_consistency(pit->second.second, rec, dual.time() - pit->second.first);
        fv.x[kElevation] = elev;
        fv.x[kDdResidual] = dd_residual(dual, sat, ref, nav);
      } catch (const Error&) {
        ++dc.incomplete_measurements;
        continue;
      } catch (const std::bad_optional_access&) {
        ++dc.incomplete_measurements;
        continue;
      }
      fv.time = dual.time();
      fv.satellite = sat;
      fv.location = location;
      if (truth) fv.label = truth->find(dual.time(), sat);
      rows.push_back(std::move(fv));
    }
    prev = std::move(next_prev);
  }
  return rows;
}

void write_feature_csv(const std::vector<FeatureVector>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write feature file: " + path);
  out << "time,sat,location,cn0,dcn0,prdc,elev,ddres,label\n";
  for (const auto& r : rows) {
    out << time_key(r.time) << "," << r.satellite << "," << r.location << ","
        << fmt6(r.x[kCn0]) << "," << fmt6(r.x[kDeltaCn0]) << ","
        << fmt6(r.x[kPrDopplerConsistency]) << "," << fmt6(r.x[kElevation]) << ","
        << fmt6(r.x[kDdResidual]) << "," << (r.label ? to_string(*r.label) : "") << "\n";
  }
}

std::vector<FeatureVector> read_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature file: " + path);
  std::vector<FeatureVector> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line != "time,sat,location,cn0,dcn0,prdc,elev,ddres,label")
        throw Error(path + ": bad feature CSV header");
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() == 8) cols.push_back("");  // empty trailing label
    if (cols.size() != 9) throw Error(path + ": bad feature CSV row: " + line);
    FeatureVector fv;
    fv.time = parse_time_key(cols[0]);
    fv.satellite = cols[1];
    fv.location = cols[2];
    for (int k = 0; k < 5; ++k) fv.x[k] = std::atof(cols[3 + k].c_str());
    if (!cols[8].empty()) {
      auto label = signal_class_from_string(cols[8]);
      if (!label) throw Error(path + ": unknown label: " + cols[8]);
      fv.label = label;
    }
    rows.push_back(std::move(fv));
  }
  return rows;
}

}  // namespace features
}  // namespace mpdet
