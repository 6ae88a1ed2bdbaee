#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mpdet/labels.hpp"
#include "mpdet/ml.hpp"

namespace mpdet {
namespace eval {

struct EvaluationReport {
  std::string tag;
  std::string algorithm;
  long n = 0;
  // rows = truth, cols = predicted, fixed class order
  std::array<std::array<long, kNumClasses>, kNumClasses> confusion{};
  double accuracy = 0.0;
  std::array<double, kNumClasses> per_class{};  // row-normalized diagonal
  std::array<long, kNumClasses> class_counts{};
};

// Concatenate, then draw exactly `target` rows per class without replacement
// (target < 0 means AUTO: the smallest class count). Output order is a
// seeded shuffle.
ml::Dataset combine_and_balance(const std::vector<ml::Dataset>& sets, long target,
                                std::uint64_t seed);

std::pair<ml::Dataset, ml::Dataset> split_train_test(const ml::Dataset& data, double fraction,
                                                     std::uint64_t seed);

EvaluationReport evaluate(const ml::TrainedModel& model, const ml::Dataset& test,
                          const std::string& tag);

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& json_text);
std::string report_to_text(const EvaluationReport& report);

// Plot-ready rows: dataset,algorithm,class,accuracy (one per class, plus an
// "ALL" row with the overall accuracy).
void append_plot_csv(const EvaluationReport& report, std::string& csv);

void write_report(const EvaluationReport& report, const std::string& json_path);
EvaluationReport read_report(const std::string& json_path);

}  // namespace eval
}  // namespace mpdet
