#include <ebbsvm/experiment.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include <ebbsvm/bank_io.hpp>
#include <ebbsvm/platt.hpp>
#include <ebbsvm/random.hpp>

namespace ebbsvm {

namespace fs = std::filesystem;

std::string_view to_string(Method method) {
  switch (method) {
    case Method::ebb: return "ebb";
    case Method::ebb_best_theta: return "ebb_best_theta";
    case Method::cebb1: return "cebb1";
    case Method::cebb2: return "cebb2";
    case Method::platt: return "platt";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  for (auto m : {Method::ebb, Method::ebb_best_theta, Method::cebb1, Method::cebb2, Method::platt})
    if (to_string(m) == text) return m;
  fail(ErrorKind::invalid_argument, "unknown method '" + std::string(text) + "'");
}

// ---- config --------------------------------------------------------------

namespace {

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& f : split(text, ','))
    if (!trim(f).empty()) out.push_back(parse_double(f));
  return out;
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
  return out;
}

fs::path resolve(const std::string& value, const fs::path& base) {
  fs::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

bool is_cost_sensitive(Method m) { return m == Method::cebb1 || m == Method::cebb2; }

}  // namespace

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value, const fs::path& base) {
  std::string key = trim(raw_key);
  if (key.rfind("experiment.", 0) == 0) key = key.substr(11);
  const std::string value = trim(raw_value);
  try {
    if (key == "dataset") dataset = resolve(value, base);
    else if (key == "method") method = parse_method(value);
    else if (key == "preset") {
      if (value == "desk") replicates = 100;
      else if (value == "full") replicates = 500;
      else fail(ErrorKind::invalid_argument, "preset must be desk or full");
      grid = ParameterGrid::powers_of_two(-5, 5);
    } else if (key == "replicates") replicates = parse_u64(value);
    else if (key == "grid") {
      const auto costs = parse_list(value);
      grid = ParameterGrid::from_costs(costs);
    } else if (key == "grid_exponents") {
      const auto colon = value.find(':');
      if (colon == std::string::npos) fail(ErrorKind::invalid_argument, "grid_exponents must look like lo:hi");
      const double lo = parse_double(value.substr(0, colon)), hi = parse_double(value.substr(colon + 1));
      if (lo != std::floor(lo) || hi != std::floor(hi))
        fail(ErrorKind::invalid_argument, "grid_exponents bounds must be integers");
      grid = ParameterGrid::powers_of_two(static_cast<int>(lo), static_cast<int>(hi));
    } else if (key == "epsilon") epsilon = parse_double(value);
    else if (key == "metric") metric = parse_metric(value);
    else if (key == "target_tpr") target_tpr = parse_list(value);
    else if (key == "seeds") {
      seeds.clear();
      for (const auto& f : split(value, ','))
        if (!trim(f).empty()) seeds.push_back(parse_u64(trim(f)));
    } else if (key == "validation_fraction") validation_fraction = parse_double(value);
    else if (key == "stratify") stratify = parse_bool(value);
    else if (key == "output") output = value.empty() ? fs::path{} : resolve(value, base);
    else if (key == "tolerance") tolerance = parse_double(value);
    else if (key == "big_m") big_m = parse_double(value);
    else if (key == "time_limit") time_limit = parse_double(value);
    else if (key == "outer_folds") outer_folds = parse_u64(value);
    else if (key == "inner_folds") inner_folds = parse_u64(value);
    else if (key == "threads") threads = static_cast<unsigned>(parse_u64(value));
    else fail(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
  } catch (const Error& e) {
    throw e.with_context("key=" + key);
  }
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValueFile& kv, const fs::path& base) {
  ExperimentConfig c;
  // Presets first so that explicit keys override them.
  if (auto preset = kv.find("preset")) c.set("preset", *preset, base);
  if (auto preset = kv.find("experiment.preset")) c.set("preset", *preset, base);
  for (const auto& [key, value] : kv.entries())
    if (key != "preset" && key != "experiment.preset") c.set(key, value, base);
  return c;
}

ExperimentConfig ExperimentConfig::read(const fs::path& path) {
  return from_key_values(KeyValueFile::read(path), path.parent_path());
}

void ExperimentConfig::validate() {
  if (dataset.empty()) fail(ErrorKind::invalid_argument, "config: dataset is required");
  require(replicates >= 1, "config: replicates must be at least 1");
  grid.validate();
  require(epsilon >= 0 && std::isfinite(epsilon), "config: epsilon must be non-negative");
  require(!seeds.empty(), "config: at least one seed is required");
  require(validation_fraction > 0 && validation_fraction < 1, "config: validation_fraction must lie in (0, 1)");
  require(tolerance > 0, "config: tolerance must be positive");
  require(big_m > 0 && time_limit > 0, "config: big_m and time_limit must be positive");
  require(outer_folds >= 2 && inner_folds >= 2, "config: folds must be at least 2");
  if (is_cost_sensitive(method)) {
    if (target_tpr.empty()) target_tpr = kDefaultTargets;
    for (double t : target_tpr) require(t >= 0 && t <= 1, "config: target_tpr values must lie in [0, 1]");
  } else if (!target_tpr.empty()) {
    fail(ErrorKind::invalid_argument, "config: target_tpr applies only to cebb1 and cebb2");
  }
}

KeyValueFile ExperimentConfig::to_key_values() const {
  KeyValueFile kv;
  kv.set("dataset", dataset.string());
  kv.set("method", std::string(to_string(method)));
  kv.set("replicates", std::to_string(replicates));
  std::vector<double> costs;
  for (const auto& g : grid.values) costs.push_back(g.C);
  kv.set("grid", join(costs));
  kv.set("epsilon", format_double(epsilon));
  kv.set("metric", std::string(to_string(metric)));
  if (!target_tpr.empty()) kv.set("target_tpr", join(target_tpr));
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  kv.set("seeds", s);
  kv.set("validation_fraction", format_double(validation_fraction));
  kv.set("stratify", stratify ? "true" : "false");
  if (!output.empty()) kv.set("output", output.string());
  kv.set("tolerance", format_double(tolerance));
  kv.set("big_m", format_double(big_m));
  kv.set("time_limit", format_double(time_limit));
  kv.set("outer_folds", std::to_string(outer_folds));
  kv.set("inner_folds", std::to_string(inner_folds));
  kv.set("threads", std::to_string(threads));
  return kv;
}

// ---- pipeline ------------------------------------------------------------

SeedPlan seed_plan(std::uint64_t seed) {
  return {derive_seed(seed, {0}), derive_seed(seed, {1}), derive_seed(seed, {2})};
}

PreparedSplit prepare_split(const DatasetManifest& manifest, const RawTable& raw, double validation_fraction,
                            bool stratify, std::uint64_t seed) {
  PreparedSplit s;
  s.dataset_name = manifest.name;
  std::tie(s.raw_train, s.raw_validation) = split_outer(raw, validation_fraction, seed_plan(seed).split, stratify);
  s.preprocessor = Preprocessor::fit(s.raw_train);
  s.train = s.preprocessor.apply(s.raw_train);
  s.validation = s.preprocessor.apply(s.raw_validation);
  return s;
}

namespace {

std::string tpr_tag(double t) { return "tpr-" + format_double(t); }

void write_file(const fs::path& path, const auto& writer) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  writer(out);
}

SeedRun run_seed(const ExperimentConfig& config, const DatasetManifest& manifest, const RawTable& raw,
                 std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  const SeedPlan plan = seed_plan(seed);
  const std::string method(to_string(config.method));

  if (config.method == Method::platt) {
    CvPlan cv{config.outer_folds, config.inner_folds, plan.folds, config.tolerance, config.threads};
    auto report = run_kfold_platt(raw, config.grid, cv, {}, manifest.name);
    for (auto& row : report.rows) row.seed = seed;
    run.reports.push_back(std::move(report));
    return run;
  }

  run.split = prepare_split(manifest, raw, config.validation_fraction, config.stratify, seed);
  const Dataset& train = run.split->train;
  const Dataset& validation = run.split->validation;
  EnsembleOptions options;
  options.threads = config.threads;

  auto emit = [&](const Eigen::VectorXd& p, std::optional<double> target) {
    run.reports.push_back(make_report(manifest.name, method, target, seed, validation.ids, validation.y, p));
  };

  if (config.method == Method::cebb2) {
    for (double t : config.target_tpr) {
      std::vector<PerformanceTarget> targets;
      if (t > 0) targets.push_back({Metric::tpr, t});
      auto bank = train_cebb2_ensemble(train, config.grid, config.replicates, targets, plan.bank, config.metric,
                                       options, config.big_m, config.time_limit);
      auto w = reliability_weights(mean_performance(bank), config.epsilon);
      emit(ensemble_probabilities(bank, w, validation.x), t);
      run.banks.push_back(std::move(bank));
      run.weights.push_back(std::move(w));
    }
    return run;
  }

  auto bank = train_ensemble(train, config.grid, config.replicates, config.metric, plan.bank,
                             svm_learner(config.tolerance), options);
  const auto means = mean_performance(bank);
  auto w = config.method == Method::ebb_best_theta ? best_theta_weights(means)
                                                   : reliability_weights(means, config.epsilon);
  if (config.method == Method::cebb1) {
    for (double t : config.target_tpr) {
      auto calibration = calibrate_thresholds(bank, w, train, t);
      emit(cebb1_probabilities(bank, w, calibration, validation.x), t);
      run.calibrations.push_back(std::move(calibration));
    }
  } else {
    emit(ensemble_probabilities(bank, w, validation.x), std::nullopt);
  }
  run.banks.push_back(std::move(bank));
  run.weights.push_back(std::move(w));
  return run;
}

void persist_seed(const ExperimentConfig& config, const SeedRun& run) {
  const fs::path dir = config.output / ("seed-" + std::to_string(run.seed));
  fs::create_directories(dir);
  if (run.split) {
    write_file(dir / "preprocessor.txt", [&](std::ostream& out) { run.split->preprocessor.save(out); });
    write_ids(run.split->train.ids, dir / "training_ids.txt");
    write_ids(run.split->validation.ids, dir / "validation_ids.txt");
  }
  for (std::size_t i = 0; i < run.banks.size(); ++i) {
    const std::string tag = config.method == Method::cebb2 ? "-" + tpr_tag(config.target_tpr[i]) : "";
    save_bank(run.banks[i], dir / ("bank" + tag));
    write_file(dir / ("weights" + tag + ".txt"), [&](std::ostream& out) { save_weights(run.weights[i], out); });
  }
  for (const auto& c : run.calibrations)
    write_file(dir / ("calibration-" + tpr_tag(c.target_tpr) + ".txt"), [&](std::ostream& out) { c.save(out); });
  std::vector<std::string> notes;
  for (const auto& r : run.reports) notes.insert(notes.end(), r.notes.begin(), r.notes.end());
  if (!notes.empty())
    write_file(dir / "notes.txt", [&](std::ostream& out) {
      for (const auto& note : notes) out << note << '\n';
    });
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& input) {
  ExperimentResult result;
  result.config = input;
  result.config.validate();
  const auto& config = result.config;

  const auto manifest = DatasetManifest::read(config.dataset);
  result.dataset_name = manifest.name;
  const RawTable raw = load_csv(manifest.csv, manifest.load);

  for (auto seed : config.seeds) {
    try {
      result.runs.push_back(run_seed(config, manifest, raw, seed));
    } catch (const Error& e) {
      throw e.with_context("seed=" + std::to_string(seed));
    }
    for (const auto& r : result.runs.back().reports) {
      result.combined.rows.insert(result.combined.rows.end(), r.rows.begin(), r.rows.end());
      result.combined.notes.insert(result.combined.notes.end(), r.notes.begin(), r.notes.end());
    }
  }

  if (!config.output.empty()) {
    fs::create_directories(config.output);
    write_file(config.output / "config.txt", [&](std::ostream& out) { config.to_key_values().write(out); });
    write_file(config.output / "report.csv", [&](std::ostream& out) { write_report_csv(result.combined, out); });
    write_file(config.output / "summary.txt",
               [&](std::ostream& out) { write_grouped_summary(result.combined, out); });
    for (const auto& run : result.runs) persist_seed(config, run);
  }
  return result;
}

void save_weights(const ReliabilityWeights& w, std::ostream& out) {
  KeyValueFile kv;
  kv.set("format", "ebbsvm-reliability-weights 1");
  kv.set("epsilon", format_hex(w.epsilon));
  std::string mean, rho, retained;
  for (std::size_t j = 0; j < w.mean.size(); ++j) {
    mean += (j ? "," : "") + format_hex(w.mean[j]);
    rho += (j ? "," : "") + format_hex(w.rho[j]);
  }
  for (std::size_t k = 0; k < w.retained.size(); ++k) retained += (k ? "," : "") + std::to_string(w.retained[k]);
  kv.set("mean", mean);
  kv.set("rho", rho);
  kv.set("retained", retained);
  kv.write(out);
}

ReliabilityWeights load_weights(std::istream& in, const std::string& origin) {
  const auto kv = KeyValueFile::parse(in, origin);
  if (kv.get_or("format", "") != "ebbsvm-reliability-weights 1")
    fail(ErrorKind::format, origin + ": not a reliability weights record");
  ReliabilityWeights w;
  w.epsilon = kv.get_double("epsilon");
  for (const auto& f : split(kv.get("mean"), ',')) w.mean.push_back(parse_double(f));
  for (const auto& f : split(kv.get("rho"), ',')) w.rho.push_back(parse_double(f));
  for (const auto& f : split(kv.get("retained"), ','))
    if (!trim(f).empty()) w.retained.push_back(parse_u64(trim(f)));
  if (w.mean.size() != w.rho.size()) fail(ErrorKind::format, origin + ": mean and rho differ in length");
  return w;
}

void write_grouped_summary(const ProbabilityReport& report, std::ostream& out) {
  for (const auto& group : group_report(report)) {
    const auto& first = group.rows.front();
    out << '[' << first.method;
    if (first.target_tpr) out << " tpr=" << format_double(*first.target_tpr);
    out << " seed=" << first.seed << "]\n";
    write_summary(summarize(group), out);
    out << '\n';
  }
}

// ---- score distributions -------------------------------------------------

ScoreDistribution export_score_distribution(const EnsembleBank& bank, std::size_t theta, const Dataset& data,
                                            std::size_t instance_id) {
  require(theta < bank.grid.size(), "export_score_distribution: theta index out of range");
  std::size_t row = data.ids.size();
  for (std::size_t i = 0; i < data.ids.size(); ++i)
    if (data.ids[i] == instance_id) row = i;
  if (row == data.ids.size())
    fail(ErrorKind::invalid_argument, "export_score_distribution: unknown instance " + std::to_string(instance_id));

  ScoreDistribution d;
  d.theta = theta;
  d.instance_id = instance_id;
  const Eigen::MatrixXd s = score_matrix(bank, theta, data.x.row(static_cast<Eigen::Index>(row)));
  Eigen::Index c = 0;
  for (std::size_t b = 0; b < bank.models[theta].size(); ++b) {
    if (!bank.models[theta][b].usable()) continue;
    d.replicate.push_back(b);
    d.score.push_back(s(0, c++));
  }
  d.proportion = positive_fraction(s.row(0), 0.0);
  return d;
}

void write_score_distribution(const ScoreDistribution& d, std::ostream& out) {
  out << "replicate,score\n";
  for (std::size_t k = 0; k < d.score.size(); ++k) out << d.replicate[k] << ',' << format_double(d.score[k]) << '\n';
}

std::vector<std::pair<double, double>> threshold_sweep(const ScoreDistribution& d,
                                                       const std::vector<double>& thresholds) {
  const Eigen::RowVectorXd s =
      Eigen::Map<const Eigen::RowVectorXd>(d.score.data(), static_cast<Eigen::Index>(d.score.size()));
  std::vector<std::pair<double, double>> out;
  for (double t : thresholds) out.emplace_back(t, positive_fraction(s, t));
  return out;
}

}  // namespace ebbsvm
