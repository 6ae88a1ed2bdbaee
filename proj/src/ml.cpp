#include "mpdet/ml.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mpdet/errors.hpp"

namespace mpdet {
namespace ml {

namespace {

constexpr int kNumFeatures = 5;
constexpr double kMinHessian = 1e-12;
constexpr double kMaxLeafStep = 4.0;

int argmax_class(const std::array<double, kNumClasses>& scores) {
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c)
    if (scores[c] > scores[best]) best = c;  // ties keep the earlier class
  return best;
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{seed, a, b};
  return std::mt19937_64(seq);
}

}  // namespace

Dataset dataset_from_features(const std::vector<features::FeatureVector>& rows) {
  Dataset data;
  data.reserve(rows.size());
  for (const auto& r : rows) {
    if (!r.label) throw Error("unlabeled feature row for " + r.satellite + " at " +
                              time_key(r.time));
    if (!r.x.allFinite()) throw Error("non-finite feature row for " + r.satellite);
    data.push_back({r.x, *r.label, {r.time, r.satellite, r.location}});
  }
  return data;
}

std::vector<features::FeatureVector> dataset_to_features(const Dataset& data) {
  std::vector<features::FeatureVector> rows;
  rows.reserve(data.size());
  for (const auto& s : data) {
    features::FeatureVector fv;
    fv.x = s.x;
    fv.label = s.y;
    fv.time = s.key.time;
    fv.satellite = s.key.satellite;
    fv.location = s.key.location;
    rows.push_back(std::move(fv));
  }
  return rows;
}

const char* to_string(Family f) {
  switch (f) {
    case Family::kGbdt:
      return "gbdt";
    case Family::kRandomForest:
      return "random_forest";
    case Family::kDecisionTree:
      return "decision_tree";
    case Family::kKnn:
      return "knn";
  }
  return "?";
}

std::optional<Family> family_from_string(const std::string& s) {
  if (s == "gbdt") return Family::kGbdt;
  if (s == "random_forest") return Family::kRandomForest;
  if (s == "decision_tree") return Family::kDecisionTree;
  if (s == "knn") return Family::kKnn;
  return std::nullopt;
}

double gini(const std::array<long, kNumClasses>& counts) {
  long total = 0;
  for (long c : counts) total += c;
  if (total <= 0) throw EmptyNode("gini of an empty node");
  double sum_sq = 0.0;
  for (long c : counts) {
    const double p = static_cast<double>(c) / total;
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

const TreeNode& Tree::walk(const FeatureValues& x) const {
  int i = 0;
  while (!nodes[i].is_leaf()) i = x[nodes[i].feature] <= nodes[i].threshold
                                      ? nodes[i].left
                                      : nodes[i].right;
  return nodes[i];
}

namespace {

// CART classification tree. Candidate thresholds are midpoints between
// consecutive sorted unique values; the split maximizing the Gini gain wins,
// scanning features then thresholds in ascending order.
class ClassTreeBuilder {
 public:
  ClassTreeBuilder(const Dataset& data, int max_depth, int min_samples_leaf,
                   int features_per_split, std::mt19937_64* rng)
      : data_(data),
        max_depth_(max_depth),
        min_leaf_(min_samples_leaf),
        per_split_(features_per_split),
        rng_(rng) {}

  Tree build(const std::vector<int>& idx) {
    Tree t;
    grow(t, idx, 0);
    return t;
  }

 private:
  int grow(Tree& t, const std::vector<int>& idx, int depth) {
    std::array<long, kNumClasses> counts{};
    for (int i : idx) ++counts[static_cast<int>(data_[i].y)];
    const int node_id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();

    const double node_gini = gini(counts);
    const long n = static_cast<long>(idx.size());
    bool splittable = depth < max_depth_ && node_gini > 0.0 && n >= 2 * min_leaf_;

    int best_f = -1;
    double best_thr = 0.0, best_score = -1.0;  // score = weighted child impurity drop
    if (splittable) {
      std::vector<int> feats = candidate_features();
      std::vector<std::pair<double, int>> vals(idx.size());
      for (int f : feats) {
        for (size_t i = 0; i < idx.size(); ++i)
          vals[i] = {data_[idx[i]].x[f], static_cast<int>(data_[idx[i]].y)};
        std::sort(vals.begin(), vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        std::array<long, kNumClasses> left{};
        long nl = 0;
        for (size_t i = 0; i + 1 < vals.size(); ++i) {
          ++left[vals[i].second];
          ++nl;
          if (vals[i].first == vals[i + 1].first) continue;
          const long nr = n - nl;
          if (nl < min_leaf_ || nr < min_leaf_) continue;
          double gl = 0.0, gr = 0.0;
          double sl = 0.0, sr = 0.0;
          for (int c = 0; c < kNumClasses; ++c) {
            sl += static_cast<double>(left[c]) * left[c];
            const long rc = counts[c] - left[c];
            sr += static_cast<double>(rc) * rc;
          }
          gl = 1.0 - sl / (static_cast<double>(nl) * nl);
          gr = 1.0 - sr / (static_cast<double>(nr) * nr);
          const double score = n * node_gini - (nl * gl + nr * gr);
          if (score > best_score + 1e-12) {
            best_score = score;
            best_f = f;
            best_thr = 0.5 * (vals[i].first + vals[i + 1].first);
          }
        }
      }
    }

    if (best_f < 0 || best_score <= 1e-12) {
      for (int c = 0; c < kNumClasses; ++c)
        t.nodes[node_id].leaf[c] = static_cast<double>(counts[c]) / n;
      return node_id;
    }

    std::vector<int> left_idx, right_idx;
    for (int i : idx)
      (data_[i].x[best_f] <= best_thr ? left_idx : right_idx).push_back(i);
    t.nodes[node_id].feature = best_f;
    t.nodes[node_id].threshold = best_thr;
    t.nodes[node_id].left = grow(t, left_idx, depth + 1);
    t.nodes[node_id].right = grow(t, right_idx, depth + 1);
    return node_id;
  }

  std::vector<int> candidate_features() {
    std::vector<int> feats(kNumFeatures);
    std::iota(feats.begin(), feats.end(), 0);
    if (per_split_ >= kNumFeatures || !rng_) return feats;
    for (int i = 0; i < per_split_; ++i) {
      std::uniform_int_distribution<int> pick(i, kNumFeatures - 1);
      std::swap(feats[i], feats[pick(*rng_)]);
    }
    feats.resize(per_split_);
    std::sort(feats.begin(), feats.end());
    return feats;
  }

  const Dataset& data_;
  int max_depth_, min_leaf_, per_split_;
  std::mt19937_64* rng_;
};

// Newton-step regression tree on per-sample gradients/hessians, used by the
// boosting rounds. Leaf value = sum(g) / sum(h), clamped.
class GradientTreeBuilder {
 public:
  GradientTreeBuilder(const Dataset& data, const std::vector<double>& grad,
                      const std::vector<double>& hess, int max_depth)
      : data_(data), grad_(grad), hess_(hess), max_depth_(max_depth) {}

  Tree build(const std::vector<int>& idx) {
    Tree t;
    grow(t, idx, 0);
    return t;
  }

 private:
  static double leaf_value(double g, double h) {
    return std::clamp(g / std::max(h, kMinHessian), -kMaxLeafStep, kMaxLeafStep);
  }
  static double score(double g, double h) { return g * g / std::max(h, kMinHessian); }

  int grow(Tree& t, const std::vector<int>& idx, int depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (int i : idx) {
      g_sum += grad_[i];
      h_sum += hess_[i];
    }
    const int node_id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();

    int best_f = -1;
    double best_thr = 0.0, best_gain = 1e-12;
    if (depth < max_depth_ && idx.size() >= 2) {
      const double parent = score(g_sum, h_sum);
      std::vector<std::pair<double, int>> vals(idx.size());
      for (int f = 0; f < kNumFeatures; ++f) {
        for (size_t i = 0; i < idx.size(); ++i) vals[i] = {data_[idx[i]].x[f], idx[i]};
        std::sort(vals.begin(), vals.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        double gl = 0.0, hl = 0.0;
        for (size_t i = 0; i + 1 < vals.size(); ++i) {
          gl += grad_[vals[i].second];
          hl += hess_[vals[i].second];
          if (vals[i].first == vals[i + 1].first) continue;
          const double gain = score(gl, hl) + score(g_sum - gl, h_sum - hl) - parent;
          if (gain > best_gain + 1e-12) {
            best_gain = gain;
            best_f = f;
            best_thr = 0.5 * (vals[i].first + vals[i + 1].first);
          }
        }
      }
    }

    if (best_f < 0) {
      t.nodes[node_id].leaf[0] = leaf_value(g_sum, h_sum);
      return node_id;
    }
    std::vector<int> left_idx, right_idx;
    for (int i : idx)
      (data_[i].x[best_f] <= best_thr ? left_idx : right_idx).push_back(i);
    t.nodes[node_id].feature = best_f;
    t.nodes[node_id].threshold = best_thr;
    t.nodes[node_id].left = grow(t, left_idx, depth + 1);
    t.nodes[node_id].right = grow(t, right_idx, depth + 1);
    return node_id;
  }

  const Dataset& data_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  int max_depth_;
};

int param_int(const ParamMap& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw InvalidParams("missing parameter: " + name);
  return static_cast<int>(std::llround(it->second));
}

double param_double(const ParamMap& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw InvalidParams("missing parameter: " + name);
  return it->second;
}

std::vector<int> all_indices(size_t n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

void softmax_row(const std::array<double, kNumClasses>& f, std::array<double, kNumClasses>& p) {
  double m = *std::max_element(f.begin(), f.end());
  double z = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    p[c] = std::exp(f[c] - m);
    z += p[c];
  }
  for (int c = 0; c < kNumClasses; ++c) p[c] /= z;
}

}  // namespace

TrainedModel train(Family family, const ParamMap& params, const Dataset& data,
                   std::uint64_t seed) {
  if (data.empty()) throw InvalidParams("training data is empty");
  TrainedModel model;
  model.family = family;
  model.params = params;
  const long n = static_cast<long>(data.size());

  switch (family) {
    case Family::kDecisionTree: {
      const int max_depth = param_int(params, "max_depth");
      const int min_leaf = param_int(params, "min_samples_leaf");
      if (max_depth <= 0 || min_leaf <= 0)
        throw InvalidParams("max_depth and min_samples_leaf must be positive");
      ClassTreeBuilder builder(data, max_depth, min_leaf, kNumFeatures, nullptr);
      model.trees.push_back(builder.build(all_indices(data.size())));
      break;
    }
    case Family::kRandomForest: {
      const int n_trees = param_int(params, "n_trees");
      const int max_depth = param_int(params, "max_depth");
      const int min_leaf = params.count("min_samples_leaf")
                               ? param_int(params, "min_samples_leaf")
                               : 1;
      if (n_trees <= 0 || max_depth <= 0 || min_leaf <= 0)
        throw InvalidParams("n_trees and max_depth must be positive");
      const int per_split = static_cast<int>(std::floor(std::sqrt(double(kNumFeatures))));
      for (int tree_i = 0; tree_i < n_trees; ++tree_i) {
        auto rng = substream(seed, static_cast<std::uint64_t>(tree_i));
        std::vector<int> bootstrap(n);
        std::uniform_int_distribution<long> pick(0, n - 1);
        for (long i = 0; i < n; ++i) bootstrap[i] = static_cast<int>(pick(rng));
        ClassTreeBuilder builder(data, max_depth, min_leaf, per_split, &rng);
        model.trees.push_back(builder.build(bootstrap));
      }
      break;
    }
    case Family::kGbdt: {
      const int n_rounds = param_int(params, "n_rounds");
      const int max_depth = param_int(params, "max_depth");
      const double lr = param_double(params, "learning_rate");
      if (n_rounds < 0 || max_depth <= 0) throw InvalidParams("bad GBDT tree parameters");
      if (lr <= 0.0) throw InvalidParams("learning_rate must be > 0");
      model.learning_rate = lr;

      std::array<long, kNumClasses> counts{};
      for (const auto& s : data) ++counts[static_cast<int>(s.y)];
      for (int c = 0; c < kNumClasses; ++c)
        model.base_score[c] =
            std::log(std::max(static_cast<double>(counts[c]) / n, 1e-12));

      std::vector<std::array<double, kNumClasses>> score(n, model.base_score);
      std::vector<double> grad(n), hess(n);
      const auto idx = all_indices(data.size());
      std::array<double, kNumClasses> p;
      for (int round = 0; round < n_rounds; ++round) {
        for (int c = 0; c < kNumClasses; ++c) {
          for (long i = 0; i < n; ++i) {
            softmax_row(score[i], p);
            grad[i] = (static_cast<int>(data[i].y) == c ? 1.0 : 0.0) - p[c];
            hess[i] = std::max(p[c] * (1.0 - p[c]), kMinHessian);
          }
          GradientTreeBuilder builder(data, grad, hess, max_depth);
          Tree tree = builder.build(idx);
          for (long i = 0; i < n; ++i) score[i][c] += lr * tree.walk(data[i].x).leaf[0];
          model.trees.push_back(std::move(tree));
        }
      }
      break;
    }
    case Family::kKnn: {
      const int k = param_int(params, "k");
      if (k <= 0 || k > n)
        throw InvalidParams("k must be in [1, " + std::to_string(n) + "], got " +
                            std::to_string(k));
      model.k = k;
      FeatureValues mean = FeatureValues::Zero();
      for (const auto& s : data) mean += s.x;
      mean /= static_cast<double>(n);
      FeatureValues var = FeatureValues::Zero();
      for (const auto& s : data) var += (s.x - mean).cwiseProduct(s.x - mean);
      var /= static_cast<double>(n);
      model.feature_mean = mean;
      model.feature_std = var.cwiseSqrt().cwiseMax(1e-12);
      model.knn_points.resize(n, kNumFeatures);
      model.knn_labels.resize(n);
      for (long i = 0; i < n; ++i) {
        model.knn_points.row(i) =
            (data[i].x - mean).cwiseQuotient(model.feature_std).transpose();
        model.knn_labels[i] = static_cast<int>(data[i].y);
      }
      break;
    }
  }
  return model;
}

Prediction predict(const TrainedModel& model, const FeatureValues& x) {
  Prediction pred;
  std::array<double, kNumClasses>& s = pred.scores;
  s.fill(0.0);

  switch (model.family) {
    case Family::kDecisionTree:
      s = model.trees.front().walk(x).leaf;
      break;
    case Family::kRandomForest: {
      for (const auto& tree : model.trees) {
        const auto& leaf = tree.walk(x).leaf;
        ++s[argmax_class(leaf)];
      }
      for (auto& v : s) v /= static_cast<double>(model.trees.size());
      break;
    }
    case Family::kGbdt: {
      std::array<double, kNumClasses> f = model.base_score;
      for (size_t i = 0; i < model.trees.size(); ++i)
        f[i % kNumClasses] += model.learning_rate * model.trees[i].walk(x).leaf[0];
      softmax_row(f, s);
      break;
    }
    case Family::kKnn: {
      const Eigen::RowVector<double, 5> q =
          (x - model.feature_mean).cwiseQuotient(model.feature_std).transpose();
      const long n = model.knn_points.rows();
      std::vector<std::pair<double, long>> dist(n);
      for (long i = 0; i < n; ++i)
        dist[i] = {(model.knn_points.row(i) - q).squaredNorm(), i};
      std::partial_sort(dist.begin(), dist.begin() + model.k, dist.end());
      for (int i = 0; i < model.k; ++i) ++s[model.knn_labels[dist[i].second]];
      for (auto& v : s) v /= model.k;
      break;
    }
  }
  pred.cls = static_cast<SignalClass>(argmax_class(s));
  return pred;
}

double accuracy(const TrainedModel& model, const Dataset& data) {
  if (data.empty()) throw Error("accuracy of an empty dataset");
  long correct = 0;
  for (const auto& s : data)
    if (predict(model, s.x).cls == s.y) ++correct;
  return static_cast<double>(correct) / data.size();
}

HyperGrid default_grid(Family family) {
  HyperGrid g;
  g.family = family;
  switch (family) {
    case Family::kDecisionTree:
      g.values = {{"max_depth", {3, 5, 8, 12}}, {"min_samples_leaf", {1, 5, 20}}};
      break;
    case Family::kRandomForest:
      g.values = {{"n_trees", {50, 200}}, {"max_depth", {8, 12}}};
      break;
    case Family::kGbdt:
      g.values = {{"n_rounds", {50, 200}},
                  {"learning_rate", {0.05, 0.1, 0.3}},
                  {"max_depth", {2, 3}}};
      break;
    case Family::kKnn:
      g.values = {{"k", {1, 5, 15, 45}}};
      break;
  }
  return g;
}

std::vector<std::vector<size_t>> stratified_folds(const Dataset& data, int folds,
                                                  std::uint64_t seed) {
  if (folds < 2) throw InvalidGrid("fold count must be >= 2");
  if (static_cast<long>(data.size()) < folds)
    throw TooFewSamples("fewer samples than folds");
  std::array<std::vector<size_t>, kNumClasses> by_class;
  for (size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<int>(data[i].y)].push_back(i);

  std::vector<std::vector<size_t>> out(folds);
  auto rng = substream(seed, 0x666f6c64);  // fold shuffles
  for (int c = 0; c < kNumClasses; ++c) {
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    for (size_t i = 0; i < by_class[c].size(); ++i)
      out[i % folds].push_back(by_class[c][i]);
  }
  for (auto& fold : out) std::sort(fold.begin(), fold.end());
  return out;
}

namespace {

std::vector<ParamMap> enumerate_grid(const HyperGrid& grid) {
  if (grid.values.empty()) throw InvalidGrid("hyperparameter grid is empty");
  for (const auto& [name, vals] : grid.values)
    if (vals.empty()) throw InvalidGrid("empty candidate list for parameter: " + name);
  std::vector<ParamMap> points{{}};
  for (const auto& [name, vals] : grid.values) {
    std::vector<ParamMap> next;
    for (const auto& base : points)
      for (double v : vals) {
        ParamMap p = base;
        p[name] = v;
        next.push_back(std::move(p));
      }
    points = std::move(next);
  }
  return points;
}

}  // namespace

CvResult grid_search_cv(Family family, const HyperGrid& grid, const Dataset& data, int folds,
                        std::uint64_t seed) {
  const auto points = enumerate_grid(grid);
  const auto fold_sets = stratified_folds(data, folds, seed);

  std::vector<char> in_fold(data.size());
  CvResult result;
  for (size_t gi = 0; gi < points.size(); ++gi) {
    CvRow row;
    row.params = points[gi];
    for (int f = 0; f < folds; ++f) {
      std::fill(in_fold.begin(), in_fold.end(), 0);
      for (size_t i : fold_sets[f]) in_fold[i] = 1;
      Dataset train_set, val_set;
      for (size_t i = 0; i < data.size(); ++i)
        (in_fold[i] ? val_set : train_set).push_back(data[i]);
      if (val_set.empty() || train_set.empty())
        throw TooFewSamples("empty fold in cross-validation");
      auto model = train(family, points[gi], train_set,
                         seed ^ (0x9e3779b97f4a7c15ULL * (gi * folds + f + 1)));
      row.fold_accuracy.push_back(accuracy(model, val_set));
    }
    row.mean_accuracy =
        std::accumulate(row.fold_accuracy.begin(), row.fold_accuracy.end(), 0.0) / folds;
    result.table.push_back(std::move(row));
  }

  size_t best = 0;
  for (size_t gi = 1; gi < result.table.size(); ++gi)
    if (result.table[gi].mean_accuracy > result.table[best].mean_accuracy) best = gi;
  result.best = result.table[best].params;
  return result;
}

void write_cv_table(const CvResult& cv, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write CV table: " + path);
  out << "params,mean_accuracy,fold_accuracies\n";
  for (const auto& row : cv.table) {
    std::string params;
    for (const auto& [k, v] : row.params) {
      if (!params.empty()) params += ";";
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s=%g", k.c_str(), v);
      params += buf;
    }
    out << params << "," << row.mean_accuracy << ",";
    for (size_t i = 0; i < row.fold_accuracy.size(); ++i)
      out << (i ? ";" : "") << row.fold_accuracy[i];
    out << "\n";
  }
}

namespace {

constexpr int kModelVersion = 1;

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

nlohmann::json tree_to_json(const Tree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : t.nodes)
    nodes.push_back({{"f", n.feature},
                     {"t", n.threshold},
                     {"l", n.left},
                     {"r", n.right},
                     {"v", n.leaf}});
  return nodes;
}

Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  for (const auto& n : j) {
    TreeNode node;
    node.feature = n.at("f").get<int>();
    node.threshold = n.at("t").get<double>();
    node.left = n.at("l").get<int>();
    node.right = n.at("r").get<int>();
    const auto& leaf = n.at("v");
    for (int c = 0; c < kNumClasses; ++c) node.leaf[c] = leaf.at(c).get<double>();
    if (node.feature >= kNumFeatures || (!node.is_leaf() && node.feature < 0) ||
        !std::isfinite(node.threshold))
      throw CorruptModel("invalid tree node");
    t.nodes.push_back(node);
  }
  if (t.nodes.empty()) throw CorruptModel("empty tree");
  return t;
}

}  // namespace

std::string serialize(const TrainedModel& model) {
  nlohmann::json payload;
  payload["family"] = to_string(model.family);
  payload["params"] = model.params;
  if (!model.trees.empty() || model.family != Family::kKnn) {
    payload["trees"] = nlohmann::json::array();
    for (const auto& t : model.trees) payload["trees"].push_back(tree_to_json(t));
  }
  if (model.family == Family::kGbdt) {
    payload["base_score"] = model.base_score;
    payload["learning_rate"] = model.learning_rate;
  }
  if (model.family == Family::kKnn) {
    payload["k"] = model.k;
    payload["mean"] = std::vector<double>(model.feature_mean.data(),
                                          model.feature_mean.data() + kNumFeatures);
    payload["std"] = std::vector<double>(model.feature_std.data(),
                                         model.feature_std.data() + kNumFeatures);
    nlohmann::json pts = nlohmann::json::array();
    for (long i = 0; i < model.knn_points.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < kNumFeatures; ++j) row.push_back(model.knn_points(i, j));
      pts.push_back(std::move(row));
    }
    payload["points"] = std::move(pts);
    payload["labels"] = model.knn_labels;
  }

  nlohmann::json j;
  j["format"] = "mpdet-model";
  j["version"] = kModelVersion;
  j["payload"] = payload;
  char sum[24];
  std::snprintf(sum, sizeof sum, "%016llx",
                static_cast<unsigned long long>(fnv1a64(j["payload"].dump())));
  j["checksum"] = sum;
  return j.dump(1);
}

TrainedModel deserialize(const std::string& bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptModel(std::string("model is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "mpdet-model") throw CorruptModel("not a model file");
    const int version = j.value("version", -1);
    if (version != kModelVersion)
      throw CorruptModel("unsupported model version " + std::to_string(version) +
                         " (expected " + std::to_string(kModelVersion) + ")");
    char sum[24];
    std::snprintf(sum, sizeof sum, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.at("payload").dump())));
    if (j.value("checksum", "") != sum) throw CorruptModel("checksum mismatch");

    const auto& payload = j.at("payload");
    auto family = family_from_string(payload.at("family").get<std::string>());
    if (!family) throw CorruptModel("unknown model family");

    TrainedModel model;
    model.family = *family;
    for (const auto& [k, v] : payload.at("params").items())
      model.params[k] = v.get<double>();
    if (payload.contains("trees"))
      for (const auto& t : payload.at("trees")) model.trees.push_back(tree_from_json(t));
    if (model.family == Family::kGbdt) {
      const auto& bs = payload.at("base_score");
      for (int c = 0; c < kNumClasses; ++c) model.base_score[c] = bs.at(c).get<double>();
      model.learning_rate = payload.at("learning_rate").get<double>();
      if (model.trees.size() % kNumClasses != 0)
        throw CorruptModel("GBDT tree count is not a multiple of the class count");
    }
    if (model.family == Family::kDecisionTree && model.trees.size() != 1)
      throw CorruptModel("decision tree model must hold exactly one tree");
    if (model.family == Family::kRandomForest && model.trees.empty())
      throw CorruptModel("random forest model holds no trees");
    if (model.family == Family::kKnn) {
      model.k = payload.at("k").get<int>();
      const auto& mean = payload.at("mean");
      const auto& stdv = payload.at("std");
      for (int i = 0; i < kNumFeatures; ++i) {
        model.feature_mean[i] = mean.at(i).get<double>();
        model.feature_std[i] = stdv.at(i).get<double>();
        if (model.feature_std[i] <= 0.0) throw CorruptModel("non-positive feature stddev");
      }
      const auto& pts = payload.at("points");
      const auto& labels = payload.at("labels");
      if (pts.size() != labels.size() || pts.empty())
        throw CorruptModel("inconsistent KNN point/label table");
      if (model.k < 1 || model.k > static_cast<int>(pts.size()))
        throw CorruptModel("KNN k outside the stored point count");
      model.knn_points.resize(static_cast<long>(pts.size()), kNumFeatures);
      model.knn_labels.resize(pts.size());
      for (size_t i = 0; i < pts.size(); ++i) {
        for (int c = 0; c < kNumFeatures; ++c)
          model.knn_points(static_cast<long>(i), c) = pts.at(i).at(c).get<double>();
        const int label = labels.at(i).get<int>();
        if (label < 0 || label >= kNumClasses) throw CorruptModel("bad KNN label");
        model.knn_labels[i] = label;
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptModel(std::string("model payload malformed: ") + e.what());
  }
}

void save_model(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file: " + path);
  out << serialize(model);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace ml
}  // namespace mpdet
