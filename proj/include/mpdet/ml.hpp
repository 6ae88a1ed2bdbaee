#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpdet/features.hpp"
#include "mpdet/labels.hpp"
#include "mpdet/time.hpp"

namespace mpdet {
namespace ml {

using FeatureValues = features::FeatureValues;

struct SampleKey {
  GpsTime time;
  std::string satellite;
  std::string location;
};

struct Sample {
  FeatureValues x;
  SignalClass y;
  SampleKey key;
};

using Dataset = std::vector<Sample>;

// Labeled feature rows only; throws if any row lacks a label.
Dataset dataset_from_features(const std::vector<features::FeatureVector>& rows);
std::vector<features::FeatureVector> dataset_to_features(const Dataset& data);

enum class Family { kGbdt, kRandomForest, kDecisionTree, kKnn };

const char* to_string(Family f);
std::optional<Family> family_from_string(const std::string& s);

using ParamMap = std::map<std::string, double>;

double gini(const std::array<long, kNumClasses>& counts);

struct TreeNode {
  int feature = -1;           // split feature, [0, 5); -1 for leaves
  double threshold = 0.0;     // go left when x[feature] <= threshold
  int left = -1, right = -1;  // child node indices
  std::array<double, kNumClasses> leaf{};  // class fractions, or [value,0,0] for regression
  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // node 0 is the root
  const TreeNode& walk(const FeatureValues& x) const;
};

struct TrainedModel {
  Family family;
  ParamMap params;

  // tree families; GBDT holds n_rounds * kNumClasses trees, round-major
  std::vector<Tree> trees;
  std::array<double, kNumClasses> base_score{};  // GBDT class log-priors
  double learning_rate = 0.0;

  // KNN
  int k = 0;
  FeatureValues feature_mean = FeatureValues::Zero();
  FeatureValues feature_std = FeatureValues::Ones();
  Eigen::Matrix<double, Eigen::Dynamic, 5> knn_points;
  std::vector<int> knn_labels;
};

TrainedModel train(Family family, const ParamMap& params, const Dataset& data,
                   std::uint64_t seed);

struct Prediction {
  SignalClass cls;
  std::array<double, kNumClasses> scores;  // class order fixed
};

Prediction predict(const TrainedModel& model, const FeatureValues& x);

// Fraction of samples whose predicted class matches the label.
double accuracy(const TrainedModel& model, const Dataset& data);

struct HyperGrid {
  Family family;
  // parameter name -> candidate values; enumeration is lexicographic in the
  // parameter name with the first name slowest
  std::map<std::string, std::vector<double>> values;
};

HyperGrid default_grid(Family family);

struct CvRow {
  ParamMap params;
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
};

struct CvResult {
  ParamMap best;
  std::vector<CvRow> table;  // grid-enumeration order
};

// Per-class round-robin fold assignment after a seeded shuffle; returns the
// validation index set of each fold.
std::vector<std::vector<size_t>> stratified_folds(const Dataset& data, int folds,
                                                  std::uint64_t seed);

CvResult grid_search_cv(Family family, const HyperGrid& grid, const Dataset& data, int folds,
                        std::uint64_t seed);

void write_cv_table(const CvResult& cv, const std::string& path);

std::string serialize(const TrainedModel& model);
TrainedModel deserialize(const std::string& bytes);
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace ml
}  // namespace mpdet
