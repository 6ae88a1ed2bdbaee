#include "mpdet/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mpdet/errors.hpp"

namespace mpdet {
namespace eval {

ml::Dataset combine_and_balance(const std::vector<ml::Dataset>& sets, long target,
                                std::uint64_t seed) {
  ml::Dataset pool;
  for (const auto& s : sets) pool.insert(pool.end(), s.begin(), s.end());

  std::array<std::vector<size_t>, kNumClasses> by_class;
  for (size_t i = 0; i < pool.size(); ++i)
    by_class[static_cast<int>(pool[i].y)].push_back(i);

  long min_count = pool.empty() ? 0 : static_cast<long>(pool.size());
  for (const auto& v : by_class) min_count = std::min(min_count, static_cast<long>(v.size()));
  if (min_count == 0) throw TargetExceedsClassCount("combined set misses a class entirely");
  if (target < 0) target = min_count;  // AUTO
  if (target > min_count)
    throw TargetExceedsClassCount("per-class target " + std::to_string(target) +
                                  " exceeds smallest class count " +
                                  std::to_string(min_count));

  std::seed_seq seq{seed, static_cast<std::uint64_t>(0x62616c)};
  std::mt19937_64 rng(seq);
  ml::Dataset out;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    for (long i = 0; i < target; ++i) out.push_back(pool[idx[i]]);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::pair<ml::Dataset, ml::Dataset> split_train_test(const ml::Dataset& data, double fraction,
                                                     std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw Error("split fraction must be in (0, 1), got " + std::to_string(fraction));

  std::array<std::vector<size_t>, kNumClasses> by_class;
  for (size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<int>(data[i].y)].push_back(i);

  std::seed_seq seq{seed, static_cast<std::uint64_t>(0x73706c)};
  std::mt19937_64 rng(seq);
  ml::Dataset first, second;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    const long n_first = std::lround(fraction * static_cast<double>(idx.size()));
    if (n_first == 0 || n_first == static_cast<long>(idx.size()))
      throw DegenerateSplit("fraction " + std::to_string(fraction) +
                            " leaves an empty side for class " +
                            to_string(static_cast<SignalClass>(c)));
    for (size_t i = 0; i < idx.size(); ++i)
      (static_cast<long>(i) < n_first ? first : second).push_back(data[idx[i]]);
  }
  return {std::move(first), std::move(second)};
}

EvaluationReport evaluate(const ml::TrainedModel& model, const ml::Dataset& test,
                          const std::string& tag) {
  if (test.empty()) throw Error("evaluation set is empty");
  EvaluationReport r;
  r.tag = tag;
  r.algorithm = ml::to_string(model.family);
  r.n = static_cast<long>(test.size());
  for (const auto& s : test) {
    const int truth = static_cast<int>(s.y);
    const int pred = static_cast<int>(ml::predict(model, s.x).cls);
    ++r.confusion[truth][pred];
    ++r.class_counts[truth];
  }
  long trace = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    trace += r.confusion[c][c];
    r.per_class[c] = r.class_counts[c] > 0
                         ? static_cast<double>(r.confusion[c][c]) / r.class_counts[c]
                         : 0.0;
  }
  r.accuracy = static_cast<double>(trace) / r.n;
  return r;
}

std::string report_to_json(const EvaluationReport& r) {
  nlohmann::json j;
  j["tag"] = r.tag;
  j["algorithm"] = r.algorithm;
  j["n"] = r.n;
  j["confusion"] = r.confusion;
  j["accuracy"] = r.accuracy;
  j["per_class"] = {{"LOS", r.per_class[0]}, {"NLOS", r.per_class[1]},
                    {"LOSNLOS", r.per_class[2]}};
  return j.dump(1);
}

EvaluationReport report_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
    EvaluationReport r;
    r.tag = j.at("tag").get<std::string>();
    r.algorithm = j.at("algorithm").get<std::string>();
    r.n = j.at("n").get<long>();
    for (int a = 0; a < kNumClasses; ++a)
      for (int b = 0; b < kNumClasses; ++b)
        r.confusion[a][b] = j.at("confusion").at(a).at(b).get<long>();
    r.accuracy = j.at("accuracy").get<double>();
    r.per_class[0] = j.at("per_class").at("LOS").get<double>();
    r.per_class[1] = j.at("per_class").at("NLOS").get<double>();
    r.per_class[2] = j.at("per_class").at("LOSNLOS").get<double>();
    for (int c = 0; c < kNumClasses; ++c)
      for (int b = 0; b < kNumClasses; ++b) r.class_counts[c] += r.confusion[c][b];
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed report JSON: ") + e.what());
  }
}

std::string report_to_text(const EvaluationReport& r) {
  char buf[256];
  std::ostringstream out;
  out << "dataset " << r.tag << ", algorithm " << r.algorithm << ", n=" << r.n << "\n";
  std::snprintf(buf, sizeof buf, "overall accuracy: %.4f\n", r.accuracy);
  out << buf;
  out << "            pred LOS  pred NLOS  pred LOSNLOS  per-class acc\n";
  static const char* names[kNumClasses] = {"LOS    ", "NLOS   ", "LOSNLOS"};
  for (int c = 0; c < kNumClasses; ++c) {
    std::snprintf(buf, sizeof buf, "true %s %8ld %10ld %13ld %14.4f\n", names[c],
                  r.confusion[c][0], r.confusion[c][1], r.confusion[c][2], r.per_class[c]);
    out << buf;
  }
  return out.str();
}

void append_plot_csv(const EvaluationReport& r, std::string& csv) {
  char buf[160];
  if (csv.empty()) csv = "dataset,algorithm,class,accuracy\n";
  std::snprintf(buf, sizeof buf, "%s,%s,ALL,%.6g\n", r.tag.c_str(), r.algorithm.c_str(),
                r.accuracy);
  csv += buf;
  static const char* names[kNumClasses] = {"LOS", "NLOS", "LOSNLOS"};
  for (int c = 0; c < kNumClasses; ++c) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%.6g\n", r.tag.c_str(), r.algorithm.c_str(),
                  names[c], r.per_class[c]);
    csv += buf;
  }
}

void write_report(const EvaluationReport& report, const std::string& json_path) {
  std::ofstream out(json_path);
  if (!out) throw Error("cannot write report: " + json_path);
  out << report_to_json(report);
}

EvaluationReport read_report(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error("cannot open report: " + json_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

}  // namespace eval
}  // namespace mpdet
