#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "mpdet/errors.hpp"
#include "mpdet/ml.hpp"

using namespace mpdet;
using namespace mpdet::ml;

namespace {

Sample sample(std::initializer_list<double> xs, SignalClass y) {
  Sample s;
  int i = 0;
  for (double v : xs) s.x[i++] = v;
  s.y = y;
  s.key.satellite = "G01";
  return s;
}

Dataset random_dataset(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<int> cls(0, 2);
  Dataset d;
  for (int i = 0; i < n; ++i) {
    Sample s;
    for (int f = 0; f < 5; ++f) s.x[f] = u(rng);
    s.y = static_cast<SignalClass>(cls(rng));
    d.push_back(s);
  }
  return d;
}

// three disjoint bands around -3, 0 and +3 in every feature
Dataset separable_dataset(std::mt19937_64& rng, int per_class) {
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  Dataset d;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < per_class; ++i) {
      Sample s;
      for (int f = 0; f < 5; ++f) s.x[f] = (c - 1) * 3.0 + noise(rng);
      s.y = static_cast<SignalClass>(c);
      d.push_back(s);
    }
  return d;
}

double multiclass_log_loss(const TrainedModel& m, const Dataset& d) {
  double loss = 0.0;
  for (const auto& s : d) {
    const auto p = predict(m, s.x).scores;
    loss -= std::log(std::max(p[static_cast<int>(s.y)], 1e-300));
  }
  return loss / d.size();
}

// exhaustive best split on the full dataset: max Gini gain over every
// feature and every midpoint between consecutive distinct sorted values
struct BruteSplit {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

BruteSplit brute_force_best_split(const Dataset& d) {
  std::array<long, kNumClasses> total{};
  for (const auto& s : d) ++total[static_cast<int>(s.y)];
  const double parent = gini(total);
  const long n = static_cast<long>(d.size());
  BruteSplit best;
  for (int f = 0; f < 5; ++f) {
    std::vector<std::pair<double, int>> vals;
    for (const auto& s : d) vals.push_back({s.x[f], static_cast<int>(s.y)});
    std::sort(vals.begin(), vals.end());
    std::array<long, kNumClasses> left{};
    for (long i = 0; i + 1 < n; ++i) {
      ++left[vals[i].second];
      if (vals[i].first == vals[i + 1].first) continue;
      std::array<long, kNumClasses> right{};
      long nl = i + 1;
      for (int c = 0; c < kNumClasses; ++c) right[c] = total[c] - left[c];
      const double gain = n * parent - (nl * gini(left) + (n - nl) * gini(right));
      if (gain > best.gain + 1e-12) {
        best.gain = gain;
        best.feature = f;
        best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
      }
    }
  }
  return best;
}

double split_gain(const Dataset& d, int feature, double threshold) {
  std::array<long, kNumClasses> total{}, left{}, right{};
  long nl = 0;
  for (const auto& s : d) {
    ++total[static_cast<int>(s.y)];
    if (s.x[feature] <= threshold) {
      ++left[static_cast<int>(s.y)];
      ++nl;
    } else {
      ++right[static_cast<int>(s.y)];
    }
  }
  const long n = static_cast<long>(d.size());
  return n * gini(total) - (nl * gini(left) + (n - nl) * gini(right));
}

}  // namespace

TEST_CASE("gini impurity") {
  CHECK(gini({10, 0, 0}) == doctest::Approx(0.0));
  CHECK(gini({5, 5, 5}) == doctest::Approx(2.0 / 3.0));
  CHECK(gini({1, 1, 0}) == doctest::Approx(0.5));
  CHECK(gini({3, 1, 0}) == doctest::Approx(1.0 - (0.75 * 0.75 + 0.25 * 0.25)));
  CHECK_THROWS_AS(gini({0, 0, 0}), EmptyNode);
}

TEST_CASE("dataset conversion requires labels and finite values") {
  features::FeatureVector fv;
  fv.x << 1, 2, 3, 4, 5;
  fv.satellite = "G03";
  CHECK_THROWS_AS(dataset_from_features({fv}), Error);
  fv.label = SignalClass::kLosOnly;
  const auto d = dataset_from_features({fv});
  REQUIRE(d.size() == 1);
  CHECK(d[0].y == SignalClass::kLosOnly);
  const auto back = dataset_to_features(d);
  CHECK(back[0].satellite == "G03");
  CHECK(back[0].label == SignalClass::kLosOnly);
  fv.x[2] = std::nan("");
  CHECK_THROWS_AS(dataset_from_features({fv}), Error);
}

TEST_CASE("decision stump picks the exhaustively best split") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(5, 50);
  int nontrivial = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Dataset d = random_dataset(rng, size(rng));
    const auto model = train(Family::kDecisionTree,
                             {{"max_depth", 1}, {"min_samples_leaf", 1}}, d, 1);
    const auto& root = model.trees[0].nodes[0];
    const BruteSplit expect = brute_force_best_split(d);
    if (expect.feature < 0) {
      CHECK(root.is_leaf());
      continue;
    }
    ++nontrivial;
    REQUIRE(!root.is_leaf());
    // the trained split must achieve the exhaustive maximum gain
    CHECK(split_gain(d, root.feature, root.threshold) ==
          doctest::Approx(expect.gain).epsilon(1e-12));
    // and its threshold must sit strictly between two data values
    double below = -1e300, above = 1e300;
    for (const auto& s : d) {
      if (s.x[root.feature] <= root.threshold) below = std::max(below, s.x[root.feature]);
      else above = std::min(above, s.x[root.feature]);
    }
    CHECK(root.threshold == doctest::Approx(0.5 * (below + above)).epsilon(1e-12));
  }
  CHECK(nontrivial >= 40);
}

TEST_CASE("decision tree fits separable data exactly and respects min_samples_leaf") {
  std::mt19937_64 rng(7);
  const Dataset d = separable_dataset(rng, 40);
  const auto model =
      train(Family::kDecisionTree, {{"max_depth", 6}, {"min_samples_leaf", 1}}, d, 1);
  CHECK(accuracy(model, d) == doctest::Approx(1.0));

  const auto stump =
      train(Family::kDecisionTree, {{"max_depth", 8}, {"min_samples_leaf", 50}}, d, 1);
  // every leaf of the constrained tree must cover >= 50 training rows
  std::map<int, long> leaf_counts;
  for (const auto& s : d) {
    const auto& leaf = stump.trees[0].walk(s.x);
    ++leaf_counts[static_cast<int>(&leaf - stump.trees[0].nodes.data())];
  }
  for (const auto& [node, count] : leaf_counts) CHECK(count >= 50);

  CHECK_THROWS_AS(train(Family::kDecisionTree, {{"max_depth", 0}, {"min_samples_leaf", 1}},
                        d, 1),
                  InvalidParams);
  CHECK_THROWS_AS(train(Family::kDecisionTree, {{"min_samples_leaf", 1}}, d, 1),
                  InvalidParams);
}

TEST_CASE("KNN basics") {
  std::mt19937_64 rng(11);
  const Dataset d = separable_dataset(rng, 30);
  SUBCASE("k=1 memorizes the training set") {
    const auto model = train(Family::kKnn, {{"k", 1}}, d, 3);
    CHECK(accuracy(model, d) == doctest::Approx(1.0));
  }
  SUBCASE("k bounds") {
    CHECK_THROWS_AS(train(Family::kKnn, {{"k", 0}}, d, 3), InvalidParams);
    CHECK_THROWS_AS(train(Family::kKnn, {{"k", 91}}, d, 3), InvalidParams);
  }
  SUBCASE("per-feature affine rescaling cannot change predictions") {
    Dataset scaled = d;
    const double a[5] = {100.0, 0.001, -7.0, 42.0, 3.0};
    const double b[5] = {-5.0, 12.0, 0.5, 1e4, 0.0};
    for (auto& s : scaled)
      for (int f = 0; f < 5; ++f) s.x[f] = a[f] * s.x[f] + b[f];
    const auto m1 = train(Family::kKnn, {{"k", 5}}, d, 3);
    const auto m2 = train(Family::kKnn, {{"k", 5}}, scaled, 3);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 200; ++i) {
      features::FeatureValues x, xs;
      for (int f = 0; f < 5; ++f) {
        x[f] = u(rng);
        xs[f] = a[f] * x[f] + b[f];
      }
      CHECK(predict(m1, x).cls == predict(m2, xs).cls);
    }
  }
}

TEST_CASE("GBDT basics") {
  std::mt19937_64 rng(13);
  const Dataset d = separable_dataset(rng, 40);
  SUBCASE("zero rounds predicts the class prior") {
    Dataset skew = d;
    for (int i = 0; i < 30; ++i) skew.push_back(sample({0, 0, 0, 0, 0}, SignalClass::kNlosOnly));
    const auto model = train(Family::kGbdt,
                             {{"n_rounds", 0}, {"max_depth", 2}, {"learning_rate", 0.1}},
                             skew, 5);
    CHECK(model.trees.empty());
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 50; ++i) {
      features::FeatureValues x;
      for (int f = 0; f < 5; ++f) x[f] = u(rng);
      const auto pred = predict(model, x);
      CHECK(pred.cls == SignalClass::kNlosOnly);
      CHECK(pred.scores[0] + pred.scores[1] + pred.scores[2] == doctest::Approx(1.0));
    }
  }
  SUBCASE("training log-loss is non-increasing in the round count") {
    double last = 1e300;
    for (int rounds : {0, 1, 2, 4, 8, 16}) {
      const auto model = train(
          Family::kGbdt, {{"n_rounds", rounds}, {"max_depth", 3}, {"learning_rate", 0.3}},
          d, 5);
      const double loss = multiclass_log_loss(model, d);
      CHECK(loss <= last + 1e-9);
      last = loss;
    }
  }
  SUBCASE("tree layout is round-major") {
    const auto model = train(Family::kGbdt,
                             {{"n_rounds", 4}, {"max_depth", 2}, {"learning_rate", 0.1}},
                             d, 5);
    CHECK(model.trees.size() == 4 * kNumClasses);
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(train(Family::kGbdt,
                          {{"n_rounds", 10}, {"max_depth", 2}, {"learning_rate", 0.0}}, d, 5),
                    InvalidParams);
    CHECK_THROWS_AS(train(Family::kGbdt, {{"n_rounds", 10}, {"learning_rate", 0.1}}, d, 5),
                    InvalidParams);
  }
}

TEST_CASE("random forest vote matches a recount over its serialized trees") {
  std::mt19937_64 rng(17);
  Dataset d = separable_dataset(rng, 25);
  // blur the bands a little so trees disagree sometimes
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  for (auto& s : d) s.x[0] += u(rng);
  const auto model = train(Family::kRandomForest, {{"n_trees", 31}, {"max_depth", 4}}, d, 9);
  const auto clone = deserialize(serialize(model));
  REQUIRE(clone.trees.size() == 31);
  for (int trial = 0; trial < 100; ++trial) {
    features::FeatureValues x;
    for (int f = 0; f < 5; ++f) x[f] = u(rng) * 2.0;
    std::array<int, kNumClasses> votes{};
    for (const auto& tree : clone.trees) {
      const auto& leaf = tree.walk(x).leaf;
      int best = 0;
      for (int c = 1; c < kNumClasses; ++c)
        if (leaf[c] > leaf[best]) best = c;
      ++votes[best];
    }
    int winner = 0;
    for (int c = 1; c < kNumClasses; ++c)
      if (votes[c] > votes[winner]) winner = c;
    const auto pred = predict(model, x);
    CHECK(static_cast<int>(pred.cls) == winner);
    CHECK(pred.scores[winner] == doctest::Approx(votes[winner] / 31.0));
  }
}

TEST_CASE("training is deterministic in the seed") {
  std::mt19937_64 rng(23);
  const Dataset d = separable_dataset(rng, 20);
  for (Family fam : {Family::kGbdt, Family::kRandomForest, Family::kDecisionTree,
                     Family::kKnn}) {
    ParamMap p;
    switch (fam) {
      case Family::kGbdt: p = {{"n_rounds", 5}, {"max_depth", 2}, {"learning_rate", 0.1}}; break;
      case Family::kRandomForest: p = {{"n_trees", 10}, {"max_depth", 4}}; break;
      case Family::kDecisionTree: p = {{"max_depth", 4}, {"min_samples_leaf", 1}}; break;
      case Family::kKnn: p = {{"k", 3}}; break;
    }
    CHECK(serialize(train(fam, p, d, 77)) == serialize(train(fam, p, d, 77)));
  }
  // the forest bootstrap actually depends on the seed
  CHECK(serialize(train(Family::kRandomForest, {{"n_trees", 10}, {"max_depth", 4}}, d, 1)) !=
        serialize(train(Family::kRandomForest, {{"n_trees", 10}, {"max_depth", 4}}, d, 2)));
}

TEST_CASE("all four families solve an axis-separable problem") {
  std::mt19937_64 rng(29);
  const Dataset train_set = separable_dataset(rng, 60);
  const Dataset test_set = separable_dataset(rng, 30);
  const std::map<Family, ParamMap> params{
      {Family::kGbdt, {{"n_rounds", 30}, {"max_depth", 2}, {"learning_rate", 0.3}}},
      {Family::kRandomForest, {{"n_trees", 30}, {"max_depth", 6}}},
      {Family::kDecisionTree, {{"max_depth", 6}, {"min_samples_leaf", 1}}},
      {Family::kKnn, {{"k", 5}}}};
  for (const auto& [fam, p] : params) {
    const auto model = train(fam, p, train_set, 3);
    CHECK(accuracy(model, test_set) >= 0.95);
  }
}

TEST_CASE("stratified folds partition the data with balanced classes") {
  std::mt19937_64 rng(31);
  Dataset d = separable_dataset(rng, 17);  // 51 rows
  const auto folds = stratified_folds(d, 5, 99);
  REQUIRE(folds.size() == 5);
  std::set<size_t> seen;
  for (const auto& f : folds) {
    for (size_t i : f) {
      CHECK(!seen.count(i));
      seen.insert(i);
    }
    // per-class counts differ by at most one across folds
    std::array<long, kNumClasses> counts{};
    for (size_t i : f) ++counts[static_cast<int>(d[i].y)];
    for (long c : counts) {
      CHECK(c >= 17 / 5);
      CHECK(c <= 17 / 5 + 1);
    }
  }
  CHECK(seen.size() == d.size());
  // deterministic, and seed-sensitive
  CHECK(stratified_folds(d, 5, 99) == folds);
  CHECK(stratified_folds(d, 5, 100) != folds);
  CHECK_THROWS_AS(stratified_folds(d, 1, 99), InvalidGrid);
  CHECK_THROWS_AS(stratified_folds(Dataset(d.begin(), d.begin() + 3), 5, 99), TooFewSamples);
}

TEST_CASE("grid search") {
  std::mt19937_64 rng(37);
  const Dataset d = separable_dataset(rng, 20);

  SUBCASE("table covers the whole grid in enumeration order") {
    HyperGrid g;
    g.family = Family::kDecisionTree;
    g.values = {{"max_depth", {2, 4}}, {"min_samples_leaf", {1, 5, 9}}};
    const auto cv = grid_search_cv(Family::kDecisionTree, g, d, 3, 5);
    REQUIRE(cv.table.size() == 6);
    // "max_depth" enumerates slowest (lexicographically first name)
    CHECK(cv.table[0].params.at("max_depth") == 2);
    CHECK(cv.table[0].params.at("min_samples_leaf") == 1);
    CHECK(cv.table[1].params.at("min_samples_leaf") == 5);
    CHECK(cv.table[3].params.at("max_depth") == 4);
    for (const auto& row : cv.table) {
      CHECK(row.fold_accuracy.size() == 3);
      double mean = 0;
      for (double a : row.fold_accuracy) mean += a;
      CHECK(row.mean_accuracy == doctest::Approx(mean / 3.0));
    }
  }

  SUBCASE("accuracy ties keep the earliest grid point") {
    HyperGrid g;
    g.family = Family::kKnn;
    g.values = {{"k", {3, 3, 3}}};  // identical points force a three-way tie
    const auto cv = grid_search_cv(Family::kKnn, g, d, 3, 5);
    CHECK(cv.best.at("k") == 3);
    CHECK(cv.table[0].mean_accuracy == doctest::Approx(cv.table[2].mean_accuracy));
  }

  SUBCASE("best point maximizes the mean accuracy") {
    const auto cv = grid_search_cv(Family::kDecisionTree,
                                   default_grid(Family::kDecisionTree), d, 3, 5);
    double best_mean = -1.0;
    for (const auto& row : cv.table) best_mean = std::max(best_mean, row.mean_accuracy);
    for (const auto& row : cv.table)
      if (row.params == cv.best) CHECK(row.mean_accuracy == doctest::Approx(best_mean));
  }

  SUBCASE("degenerate inputs throw") {
    HyperGrid empty;
    empty.family = Family::kKnn;
    CHECK_THROWS_AS(grid_search_cv(Family::kKnn, empty, d, 3, 5), InvalidGrid);
    HyperGrid hollow;
    hollow.family = Family::kKnn;
    hollow.values = {{"k", {}}};
    CHECK_THROWS_AS(grid_search_cv(Family::kKnn, hollow, d, 3, 5), InvalidGrid);
    CHECK_THROWS_AS(
        grid_search_cv(Family::kKnn, default_grid(Family::kKnn),
                       Dataset(d.begin(), d.begin() + 2), 3, 5),
        TooFewSamples);
  }

  SUBCASE("CV table file has one row per grid point") {
    std::mt19937_64 rng2(38);
    const Dataset big = separable_dataset(rng2, 30);  // k=45 needs >= 45 train rows
    const auto cv = grid_search_cv(Family::kKnn, default_grid(Family::kKnn), big, 3, 5);
    const std::string path = "cv_table_test.csv";
    write_cv_table(cv, path);
    std::ifstream in(path);
    std::string line;
    long lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 1 + 4);
    std::remove(path.c_str());
  }
}

TEST_CASE("default hyperparameter grids are pinned") {
  CHECK(default_grid(Family::kDecisionTree).values.at("max_depth") ==
        std::vector<double>{3, 5, 8, 12});
  CHECK(default_grid(Family::kDecisionTree).values.at("min_samples_leaf") ==
        std::vector<double>{1, 5, 20});
  CHECK(default_grid(Family::kRandomForest).values.at("n_trees") ==
        std::vector<double>{50, 200});
  CHECK(default_grid(Family::kGbdt).values.at("learning_rate") ==
        std::vector<double>{0.05, 0.1, 0.3});
  CHECK(default_grid(Family::kKnn).values.at("k") == std::vector<double>{1, 5, 15, 45});
}

TEST_CASE("model serialization") {
  std::mt19937_64 rng(41);
  const Dataset d = separable_dataset(rng, 20);
  const std::map<Family, ParamMap> params{
      {Family::kGbdt, {{"n_rounds", 8}, {"max_depth", 2}, {"learning_rate", 0.1}}},
      {Family::kRandomForest, {{"n_trees", 12}, {"max_depth", 4}}},
      {Family::kDecisionTree, {{"max_depth", 5}, {"min_samples_leaf", 2}}},
      {Family::kKnn, {{"k", 7}}}};

  SUBCASE("round trip preserves every prediction") {
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    for (const auto& [fam, p] : params) {
      const auto model = train(fam, p, d, 55);
      const auto clone = deserialize(serialize(model));
      CHECK(serialize(clone) == serialize(model));
      for (int i = 0; i < 1000; ++i) {
        features::FeatureValues x;
        for (int f = 0; f < 5; ++f) x[f] = u(rng);
        const auto a = predict(model, x), b = predict(clone, x);
        CHECK(a.cls == b.cls);
        for (int c = 0; c < kNumClasses; ++c) CHECK(a.scores[c] == b.scores[c]);
      }
    }
  }

  SUBCASE("file round trip") {
    const auto model = train(Family::kKnn, {{"k", 3}}, d, 55);
    const std::string path = "model_roundtrip_test.json";
    save_model(model, path);
    const auto back = load_model(path);
    CHECK(serialize(back) == serialize(model));
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_model(path), Error);
  }

  SUBCASE("corruption is rejected") {
    const auto model = train(Family::kDecisionTree,
                             {{"max_depth", 4}, {"min_samples_leaf", 1}}, d, 55);
    const std::string bytes = serialize(model);
    CHECK_THROWS_AS(deserialize(bytes.substr(0, bytes.size() / 2)), CorruptModel);
    CHECK_THROWS_AS(deserialize("{}"), CorruptModel);
    CHECK_THROWS_AS(deserialize("not json at all"), CorruptModel);

    // flip a payload byte: the checksum must catch it
    std::string tampered = bytes;
    const auto pos = tampered.find("\"t\":");
    REQUIRE(pos != std::string::npos);
    tampered[pos + 5] = tampered[pos + 5] == '1' ? '2' : '1';
    CHECK_THROWS_AS(deserialize(tampered), CorruptModel);

    // future format versions are refused outright
    std::string vbump = bytes;
    const auto vpos = vbump.find("\"version\": 1");
    REQUIRE(vpos != std::string::npos);
    vbump.replace(vpos, 12, "\"version\": 2");
    try {
      deserialize(vbump);
      FAIL("expected CorruptModel");
    } catch (const CorruptModel& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
}
