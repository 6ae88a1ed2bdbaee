#pragma once

#include <Eigen/Core>
#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpdet/labels.hpp"
#include "mpdet/orbits.hpp"
#include "mpdet/rinex.hpp"
#include "mpdet/time.hpp"

namespace mpdet {
namespace features {

inline constexpr double kNominalIntervalSeconds = 1.0;

using FeatureValues = Eigen::Matrix<double, 5, 1>;  // cn0, dcn0, prdc, elev, ddres

enum FeatureIndex { kCn0 = 0, kDeltaCn0 = 1, kPrDopplerConsistency = 2, kElevation = 3,
                    kDdResidual = 4 };

struct FeatureVector {
  FeatureValues x;
  std::optional<SignalClass> label;
  GpsTime time;
  std::string satellite;
  std::string location;
};

// Two same-timestamp epochs from the 19 cm antenna pair, plus the surveyed
// antenna positions.
struct DualEpoch {
  rinex::ObservationEpoch antenna1, antenna2;
  std::array<EcefPosition, 2> positions;

  const GpsTime& time() const { return antenna1.time; }
};

double delta_cn0(const rinex::ObservationRecord& prev, const rinex::ObservationRecord& curr,
                 double gap_s);

// Eq-style pseudorange/Doppler consistency: change in pseudorange minus the
// midpoint Doppler-derived range rate times the gap.
double pr_doppler_consistency(const rinex::ObservationRecord& prev,
                              const rinex::ObservationRecord& curr, double gap_s);

double dd_residual(const DualEpoch& dual, const std::string& sat_k, const std::string& ref_j,
                   const rinex::NavigationFile& nav);

std::string select_reference(const DualEpoch& dual, const rinex::NavigationFile& nav);

// Counters for rows that never became feature vectors, one reason each.
struct DropCounters {
  long missing_on_one_antenna = 0;
  long no_predecessor = 0;
  long reference_satellite = 0;
  long no_reference = 0;
  long below_horizon = 0;
  long incomplete_measurements = 0;
  long total() const {
    return missing_on_one_antenna + no_predecessor + reference_satellite + no_reference +
           below_horizon + incomplete_measurements;
  }
};

struct TruthTable {
  std::map<std::pair<std::string, std::string>, SignalClass> labels;  // (time key, sat)

  std::optional<SignalClass> find(const GpsTime& t, const std::string& sat) const;
};

std::vector<FeatureVector> extract_features(const std::vector<DualEpoch>& stream,
                                            const rinex::NavigationFile& nav,
                                            const TruthTable* truth,
                                            const std::string& location,
                                            DropCounters* drops = nullptr);

// Pairs two observation files into a DualEpoch stream (common timestamps,
// 1 s cadence enforced).
std::vector<DualEpoch> pair_streams(const rinex::ObservationFile& a1,
                                    const rinex::ObservationFile& a2);

// Feature-table CSV: header time,sat,location,cn0,dcn0,prdc,elev,ddres,label
void write_feature_csv(const std::vector<FeatureVector>& rows, const std::string& path);
std::vector<FeatureVector> read_feature_csv(const std::string& path);

}  // namespace features
}  // namespace mpdet
