#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpdet/errors.hpp"
#include "mpdet/eval.hpp"
#include "mpdet/features.hpp"
#include "mpdet/ml.hpp"
#include "mpdet/rinex.hpp"
#include "mpdet/scenesim.hpp"

namespace fs = std::filesystem;
using namespace mpdet;

namespace {

constexpr const char* kVersion = "1.0.0";

std::uint64_t env_seed_fallback() {
  if (const char* s = std::getenv("MPLAB_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw Error(std::string("MPLAB_SEED is not a valid unsigned integer: ") + s);
    }
  }
  return 0;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw Error(what + " not found: " + path);
}

std::vector<std::string> collect_scene_files(const std::string& scenes) {
  std::vector<std::string> files;
  if (fs::is_directory(scenes)) {
    for (const auto& entry : fs::directory_iterator(scenes))
      if (entry.is_regular_file() && entry.path().extension() == ".json")
        files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(scenes)) {
    files.push_back(scenes);
  }
  if (files.empty()) throw Error("no scene files at: " + scenes);
  return files;
}

void apply_noise_overrides(scenesim::NoiseModel& noise, const nlohmann::json& j) {
  if (j.contains("pr_sigma")) noise.pr_sigma = j.at("pr_sigma").get<double>();
  if (j.contains("cn0_zenith")) noise.cn0_zenith = j.at("cn0_zenith").get<double>();
  if (j.contains("cn0_rolloff")) noise.cn0_rolloff = j.at("cn0_rolloff").get<double>();
  if (j.contains("reflection_loss")) noise.reflection_loss = j.at("reflection_loss").get<double>();
  if (j.contains("alpha")) noise.alpha = j.at("alpha").get<double>();
  if (j.contains("cn0_drift")) noise.cn0_drift = j.at("cn0_drift").get<double>();
  if (j.contains("cn0_drift_max")) noise.cn0_drift_max = j.at("cn0_drift_max").get<double>();
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string scenes, nav, out;
  double hours = 2.0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  double pr_sigma = 0.5, cn0_drift = 0.02, alpha = 0.5;
};

int run_simulate(const SimulateArgs& a) {
  require_file(a.nav, "navigation file");
  const auto scene_files = collect_scene_files(a.scenes);
  std::vector<scenesim::Scene> scenes;
  for (const auto& f : scene_files) scenes.push_back(scenesim::load_scene(f));
  const auto nav = rinex::read_navigation_file(a.nav);

  scenesim::NoiseModel noise;
  noise.pr_sigma = a.pr_sigma;
  noise.cn0_drift = a.cn0_drift;
  noise.alpha = a.alpha;

  fs::create_directories(a.out);
  const auto results =
      scenesim::run_campaign(scenes, nav, a.hours * 3600.0, noise, a.seed);
  for (const auto& r : results) {
    rinex::write_observation_file(r.observations[0],
                                  (fs::path(a.out) / (r.tag + "_A1.obs")).string());
    rinex::write_observation_file(r.observations[1],
                                  (fs::path(a.out) / (r.tag + "_A2.obs")).string());
    scenesim::write_truth_csv(r.truth,
                              (fs::path(a.out) / (r.tag + "_truth.csv")).string());
    std::cout << r.tag << ": " << r.observations[0].epochs.size() << " epochs, "
              << r.truth.size() << " truth rows\n";
  }
  return 0;
}

// ---- extract ----------------------------------------------------------------

struct ExtractArgs {
  std::string obs1, obs2, nav, truth, location, out;
};

int run_extract(const ExtractArgs& a) {
  require_file(a.obs1, "observation file");
  require_file(a.obs2, "observation file");
  require_file(a.nav, "navigation file");
  if (!a.truth.empty()) require_file(a.truth, "truth file");

  const auto f1 = rinex::read_observation_file(a.obs1);
  const auto f2 = rinex::read_observation_file(a.obs2);
  const auto nav = rinex::read_navigation_file(a.nav);

  features::TruthTable table;
  if (!a.truth.empty())
    for (const auto& row : scenesim::read_truth_csv(a.truth))
      table.labels[{time_key(row.time), row.satellite}] = row.label;

  const auto stream = features::pair_streams(f1, f2);
  features::DropCounters drops;
  const auto rows = features::extract_features(stream, nav, a.truth.empty() ? nullptr : &table,
                                               a.location, &drops);
  if (rows.empty()) throw Error("no feature rows extracted from " + a.obs1);
  features::write_feature_csv(rows, a.out);
  std::cout << a.location << ": " << rows.size() << " feature rows, " << drops.total()
            << " dropped\n";
  return 0;
}

// ---- dataset ----------------------------------------------------------------

struct DatasetArgs {
  std::vector<std::string> features, pool, holdout;
  std::string out;
  long target = -1;  // AUTO
  double split = 0.0;
  std::uint64_t seed = 0;
  bool paper_protocol = false;
};

void write_dataset(const ml::Dataset& d, const fs::path& path) {
  features::write_feature_csv(ml::dataset_to_features(d), path.string());
  std::cout << path.filename().string() << ": " << d.size() << " rows\n";
}

ml::Dataset load_dataset(const std::string& path) {
  require_file(path, "feature file");
  return ml::dataset_from_features(features::read_feature_csv(path));
}

int run_dataset(const DatasetArgs& a) {
  fs::path out_dir(a.out);
  if (a.paper_protocol) {
    if (a.pool.empty() || a.holdout.empty())
      throw Error("--paper-protocol needs --pool and --holdout feature files");
    std::vector<ml::Dataset> pool_sets;
    for (const auto& f : a.pool) pool_sets.push_back(load_dataset(f));
    std::vector<ml::Dataset> holdout_sets;
    for (const auto& f : a.holdout) holdout_sets.push_back(load_dataset(f));

    // pooled draw of 2x target per class, then a disjoint 50/50 split
    const long draw = a.target < 0 ? -1 : 2 * a.target;
    const auto pooled = eval::combine_and_balance(pool_sets, draw, a.seed);
    const auto [t0, t1] = eval::split_train_test(pooled, 0.5, a.seed);

    fs::create_directories(out_dir);
    write_dataset(t0, out_dir / "T0.csv");
    write_dataset(t1, out_dir / "T1.csv");
    for (size_t i = 0; i < holdout_sets.size(); ++i) {
      const auto t = eval::combine_and_balance({holdout_sets[i]}, -1, a.seed + 1 + i);
      write_dataset(t, out_dir / ("T" + std::to_string(2 + i) + ".csv"));
    }
    return 0;
  }

  if (a.features.empty()) throw Error("dataset needs --features (or --paper-protocol)");
  std::vector<ml::Dataset> sets;
  for (const auto& f : a.features) sets.push_back(load_dataset(f));
  const auto balanced = eval::combine_and_balance(sets, a.target, a.seed);
  fs::create_directories(out_dir);
  if (a.split > 0.0) {
    const auto [tr, te] = eval::split_train_test(balanced, a.split, a.seed);
    write_dataset(tr, out_dir / "train.csv");
    write_dataset(te, out_dir / "test.csv");
  } else {
    write_dataset(balanced, out_dir / "dataset.csv");
  }
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string dataset, family, grid_json, out, cv_table;
  int folds = 5;
  std::uint64_t seed = 0;
};

ml::HyperGrid parse_grid(ml::Family family, const std::string& text) {
  ml::HyperGrid g = ml::default_grid(family);
  if (text.empty()) return g;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("--grid is not valid JSON: ") + e.what());
  }
  g.values.clear();
  for (const auto& [name, vals] : j.items()) {
    std::vector<double> v;
    for (const auto& x : vals) v.push_back(x.get<double>());
    g.values[name] = v;
  }
  return g;
}

int run_train(const TrainArgs& a) {
  const auto family = ml::family_from_string(a.family);
  if (!family) throw Error("unknown family: " + a.family);
  const auto grid = parse_grid(*family, a.grid_json);
  const auto data = load_dataset(a.dataset);

  const auto cv = ml::grid_search_cv(*family, grid, data, a.folds, a.seed);
  const auto model = ml::train(*family, cv.best, data, a.seed);
  ml::save_model(model, a.out);
  if (!a.cv_table.empty()) ml::write_cv_table(cv, a.cv_table);

  std::cout << a.family << ": best params";
  for (const auto& [k, v] : cv.best) std::cout << " " << k << "=" << v;
  std::cout << ", model " << a.out << "\n";
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string model, dataset, tag, out, plot_csv;
};

int run_evaluate(const EvaluateArgs& a) {
  require_file(a.model, "model file");
  const auto model = ml::load_model(a.model);
  const auto data = load_dataset(a.dataset);
  const auto report = eval::evaluate(model, data, a.tag);
  if (!a.out.empty()) eval::write_report(report, a.out);
  if (!a.plot_csv.empty()) {
    std::string csv;
    if (fs::is_regular_file(a.plot_csv)) {
      std::ifstream in(a.plot_csv);
      std::stringstream ss;
      ss << in.rdbuf();
      csv = ss.str();
    }
    eval::append_plot_csv(report, csv);
    std::ofstream out(a.plot_csv);
    out << csv;
  }
  std::cout << eval::report_to_text(report);
  return 0;
}

// ---- gen-nav ----------------------------------------------------------------

struct GenNavArgs {
  int week = 2200;
  double toe = 302400.0;
  int sets = 2;
  std::string out;
};

int run_gen_nav(const GenNavArgs& a) {
  const auto nav = scenesim::synthetic_constellation(a.week, a.toe, a.sets);
  rinex::write_navigation_file(nav, a.out);
  std::cout << "wrote " << nav.ephemerides.size() << " ephemerides to " << a.out << "\n";
  return 0;
}

// ---- pipeline ---------------------------------------------------------------

struct PipelineArgs {
  std::string config;
  std::optional<std::uint64_t> seed_override;
};

int run_pipeline(const PipelineArgs& a) {
  require_file(a.config, "config file");
  nlohmann::json cfg;
  {
    std::ifstream in(a.config);
    try {
      in >> cfg;
    } catch (const nlohmann::json::exception& e) {
      throw Error(a.config + ": invalid JSON: " + e.what());
    }
  }

  const std::string scenes_dir = cfg.at("scenes").get<std::string>();
  const std::string nav_path = cfg.at("nav").get<std::string>();
  const std::string out_dir = cfg.at("out").get<std::string>();
  const double hours = cfg.value("hours", 2.0);
  const long target = cfg.value("target", -1L);
  const int folds = cfg.value("folds", 5);
  std::uint64_t seed = cfg.value("seed", 0ULL);
  if (a.seed_override) seed = *a.seed_override;

  std::vector<std::string> families =
      cfg.value("families", std::vector<std::string>{"gbdt", "random_forest",
                                                     "decision_tree", "knn"});
  for (const auto& f : families)
    if (!ml::family_from_string(f)) throw Error("config names unknown family: " + f);

  // validate everything up front: scenes, nav, pool/holdout assignment
  const auto scene_files = collect_scene_files(scenes_dir);
  std::vector<scenesim::Scene> scenes;
  for (const auto& f : scene_files) scenes.push_back(scenesim::load_scene(f));
  require_file(nav_path, "navigation file");
  const auto nav = rinex::read_navigation_file(nav_path);

  std::vector<std::string> pool_tags, holdout_tags;
  if (cfg.contains("pool_scenes"))
    pool_tags = cfg.at("pool_scenes").get<std::vector<std::string>>();
  if (cfg.contains("holdout_scenes"))
    holdout_tags = cfg.at("holdout_scenes").get<std::vector<std::string>>();
  if (pool_tags.empty() || holdout_tags.empty()) {
    // default layout: first three tags pooled, the rest held out
    std::vector<std::string> tags;
    for (const auto& s : scenes) tags.push_back(s.tag);
    std::sort(tags.begin(), tags.end());
    if (tags.size() < 4) throw Error("pipeline needs >= 4 scenes (pool + holdout)");
    pool_tags.assign(tags.begin(), tags.begin() + 3);
    holdout_tags.assign(tags.begin() + 3, tags.end());
  }
  for (const auto& t : pool_tags) {
    bool found = false;
    for (const auto& s : scenes) found |= s.tag == t;
    if (!found) throw Error("pool scene tag not in scenes dir: " + t);
  }

  scenesim::NoiseModel noise;
  if (cfg.contains("noise")) apply_noise_overrides(noise, cfg.at("noise"));

  const fs::path out(out_dir);
  fs::create_directories(out / "sim");
  fs::create_directories(out / "features");
  fs::create_directories(out / "datasets");
  fs::create_directories(out / "models");
  fs::create_directories(out / "reports");

  // simulate
  const auto results = scenesim::run_campaign(scenes, nav, hours * 3600.0, noise, seed);
  std::map<std::string, std::string> feature_files;
  for (const auto& r : results) {
    rinex::write_observation_file(r.observations[0],
                                  (out / "sim" / (r.tag + "_A1.obs")).string());
    rinex::write_observation_file(r.observations[1],
                                  (out / "sim" / (r.tag + "_A2.obs")).string());
    scenesim::write_truth_csv(r.truth, (out / "sim" / (r.tag + "_truth.csv")).string());

    // extract straight from the written files, so the CSVs reflect the
    // on-disk interchange exactly
    const auto f1 = rinex::read_observation_file((out / "sim" / (r.tag + "_A1.obs")).string());
    const auto f2 = rinex::read_observation_file((out / "sim" / (r.tag + "_A2.obs")).string());
    features::TruthTable table;
    for (const auto& row : r.truth)
      table.labels[{time_key(row.time), row.satellite}] = row.label;
    const auto stream = features::pair_streams(f1, f2);
    features::DropCounters drops;
    const auto rows = features::extract_features(stream, nav, &table, r.tag, &drops);
    const std::string fpath = (out / "features" / (r.tag + ".csv")).string();
    features::write_feature_csv(rows, fpath);
    feature_files[r.tag] = fpath;
    std::cout << r.tag << ": " << rows.size() << " feature rows (" << drops.total()
              << " dropped)\n";
  }

  // datasets, paper-protocol layout
  DatasetArgs ds;
  ds.paper_protocol = true;
  ds.target = target;
  ds.seed = seed;
  ds.out = (out / "datasets").string();
  for (const auto& t : pool_tags) ds.pool.push_back(feature_files.at(t));
  for (const auto& t : holdout_tags) ds.holdout.push_back(feature_files.at(t));
  run_dataset(ds);

  // train on T0, evaluate on T1..Tn
  std::vector<std::string> test_tags{"T1"};
  for (size_t i = 0; i < holdout_tags.size(); ++i)
    test_tags.push_back("T" + std::to_string(2 + i));

  std::string plot_csv;
  for (const auto& fam_name : families) {
    TrainArgs ta;
    ta.dataset = (out / "datasets" / "T0.csv").string();
    ta.family = fam_name;
    ta.folds = folds;
    ta.seed = seed;
    ta.out = (out / "models" / (fam_name + ".json")).string();
    ta.cv_table = (out / "models" / (fam_name + "_cv.csv")).string();
    if (cfg.contains("grids") && cfg.at("grids").contains(fam_name))
      ta.grid_json = cfg.at("grids").at(fam_name).dump();
    run_train(ta);

    const auto model = ml::load_model(ta.out);
    for (const auto& tag : test_tags) {
      const auto data = load_dataset((out / "datasets" / (tag + ".csv")).string());
      const auto report = eval::evaluate(model, data, tag);
      eval::write_report(report, (out / "reports" / (fam_name + "_" + tag + ".json")).string());
      eval::append_plot_csv(report, plot_csv);
      std::cout << eval::report_to_text(report);
    }
  }
  std::ofstream plot(out / "reports" / "accuracy.csv");
  plot << plot_csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPS multipath detection toolkit: simulate urban-canyon dual-antenna "
               "observations, extract features, train and evaluate classifiers"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "ray-trace scenes into RINEX pairs + truth");
  c_sim->add_option("--scenes", sim.scenes, "scene JSON file or directory")->required();
  c_sim->add_option("--nav", sim.nav, "RINEX navigation file")->required();
  c_sim->add_option("--hours", sim.hours, "campaign duration in hours");
  c_sim->add_option("--seed", sim.seed, "RNG seed");
  c_sim->add_option("--out", sim.out, "output directory")->required();
  c_sim->add_option("--pr-sigma", sim.pr_sigma, "pseudorange noise sigma, m");
  c_sim->add_option("--cn0-drift", sim.cn0_drift, "C/N0 drift rate, dB-Hz/s");
  c_sim->add_option("--alpha", sim.alpha, "LOS+NLOS code error gain");

  ExtractArgs ext;
  auto* c_ext = app.add_subcommand("extract", "RINEX pair + nav [+ truth] -> feature CSV");
  c_ext->add_option("--obs1", ext.obs1, "antenna 1 observation file")->required();
  c_ext->add_option("--obs2", ext.obs2, "antenna 2 observation file")->required();
  c_ext->add_option("--nav", ext.nav, "RINEX navigation file")->required();
  c_ext->add_option("--truth", ext.truth, "truth CSV (optional)");
  c_ext->add_option("--location", ext.location, "location tag")->required();
  c_ext->add_option("--out", ext.out, "output feature CSV")->required();

  DatasetArgs ds;
  auto* c_ds = app.add_subcommand("dataset", "feature CSVs -> balanced train/test sets");
  c_ds->add_option("--features", ds.features, "feature CSVs to combine");
  c_ds->add_option("--pool", ds.pool, "pooled-location feature CSVs (paper protocol)");
  c_ds->add_option("--holdout", ds.holdout, "held-out-location feature CSVs (paper protocol)");
  c_ds->add_option("--target", ds.target, "per-class sample target (-1 = AUTO)");
  c_ds->add_option("--split", ds.split, "train fraction for a two-way split");
  c_ds->add_option("--seed", ds.seed, "RNG seed");
  c_ds->add_option("--out", ds.out, "output directory")->required();
  c_ds->add_flag("--paper-protocol", ds.paper_protocol,
                 "pool -> disjoint balanced T0/T1; holdouts -> T2, T3, ...");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "grid-search CV + fit on a dataset");
  c_tr->add_option("--dataset", tr.dataset, "training feature CSV")->required();
  c_tr->add_option("--family", tr.family, "gbdt | random_forest | decision_tree | knn")
      ->required();
  c_tr->add_option("--grid", tr.grid_json, "JSON grid override, e.g. {\"k\":[1,5]}");
  c_tr->add_option("--folds", tr.folds, "CV fold count");
  c_tr->add_option("--seed", tr.seed, "RNG seed");
  c_tr->add_option("--out", tr.out, "output model file")->required();
  c_tr->add_option("--cv-table", tr.cv_table, "CV table CSV output");

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "model + dataset -> report");
  c_ev->add_option("--model", ev.model, "model file")->required();
  c_ev->add_option("--dataset", ev.dataset, "test feature CSV")->required();
  c_ev->add_option("--tag", ev.tag, "dataset tag for the report")->required();
  c_ev->add_option("--out", ev.out, "report JSON output");
  c_ev->add_option("--plot-csv", ev.plot_csv, "plot CSV to append to");

  GenNavArgs gn;
  auto* c_gn = app.add_subcommand("gen-nav", "write a synthetic broadcast navigation file");
  c_gn->add_option("--week", gn.week, "GPS week");
  c_gn->add_option("--toe", gn.toe, "first ephemeris toe, s of week");
  c_gn->add_option("--sets", gn.sets, "number of 2 h ephemeris sets per satellite");
  c_gn->add_option("--out", gn.out, "output navigation file")->required();

  PipelineArgs pl;
  std::uint64_t pl_seed = 0;
  auto* c_pl = app.add_subcommand("pipeline", "run the full flow from one JSON config");
  c_pl->add_option("--config", pl.config, "pipeline config JSON")->required();
  auto* pl_seed_opt = c_pl->add_option("--seed", pl_seed, "override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message
    std::cerr << app.help() << std::endl;
    return 2;
  }

  try {
    const std::uint64_t fallback = env_seed_fallback();
    if (c_sim->parsed()) {
      if (!c_sim->count("--seed")) sim.seed = fallback;
      return run_simulate(sim);
    }
    if (c_ext->parsed()) return run_extract(ext);
    if (c_ds->parsed()) {
      if (!c_ds->count("--seed")) ds.seed = fallback;
      return run_dataset(ds);
    }
    if (c_tr->parsed()) {
      if (!c_tr->count("--seed")) tr.seed = fallback;
      return run_train(tr);
    }
    if (c_ev->parsed()) return run_evaluate(ev);
    if (c_gn->parsed()) return run_gen_nav(gn);
    if (c_pl->parsed()) {
      if (pl_seed_opt->count()) pl.seed_override = pl_seed;
      return run_pipeline(pl);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
