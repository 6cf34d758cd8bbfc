// Command-line front end. Every failure ends with a one-line JSON record on
// stderr and a nonzero exit code:
//   2  usage or invalid argument
//   3  io, format or schema problems
//   4  degenerate data, infeasible targets, time limit, failed training
//   1  anything else

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <ebbsvm/bank_io.hpp>
#include <ebbsvm/cost_sensitive.hpp>
#include <ebbsvm/experiment.hpp>
#include <ebbsvm/report.hpp>

using namespace ebbsvm;
namespace fs = std::filesystem;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument:
      return 2;
    case ErrorKind::io:
    case ErrorKind::format:
    case ErrorKind::schema:
      return 3;
    case ErrorKind::degenerate_data:
    case ErrorKind::infeasible:
    case ErrorKind::time_limit:
    case ErrorKind::training_failed:
      return 4;
  }
  return 1;
}

int report_error(const std::string& kind, const std::string& message, const std::string& context, int code) {
  nlohmann::json record{{"status", "error"}, {"kind", kind}, {"message", message}, {"exit_code", code}};
  if (!context.empty()) record["context"] = context;
  std::cerr << record.dump() << '\n';
  return code;
}

/// Options shared by the subcommands that build an ExperimentConfig.
struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  std::map<std::string, std::string> flags;

  void attach(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("--config", config_file, "key = value file");
    app->add_option("--set", overrides, "override as key=value (repeatable)");
    for (const auto& key : keys) {
      std::string flag = "--" + key;
      for (auto& c : flag)
        if (c == '_') c = '-';
      app->add_option_function<std::string>(
          flag, [this, key](const std::string& v) { flags[key] = v; }, "config key " + key);
    }
  }

  ExperimentConfig build() const {
    ExperimentConfig c;
    if (!config_file.empty()) c = ExperimentConfig::read(config_file);
    for (const auto& [k, v] : flags) c.set(k, v, fs::current_path());
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) fail(ErrorKind::invalid_argument, "--set expects key=value, got '" + o + "'");
      c.set(o.substr(0, eq), o.substr(eq + 1), fs::current_path());
    }
    return c;
  }
};

const std::vector<std::string> kAllKeys{"dataset",   "method",        "preset",     "replicates",
                                        "grid",      "grid_exponents", "epsilon",    "metric",
                                        "target_tpr", "seeds",         "validation_fraction", "stratify",
                                        "output",    "tolerance",     "big_m",      "time_limit",
                                        "outer_folds", "inner_folds",  "threads"};

void write_text(const fs::path& path, const auto& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  writer(out);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return in;
}

// ---- model directories ---------------------------------------------------
//
// config.txt, preprocessor.txt, training_ids.txt, validation_ids.txt, bank/,
// weights.txt and, after calibrate, calibration-tpr-<t>.txt.

struct ModelDir {
  fs::path dir;
  ExperimentConfig config;
  DatasetManifest manifest;
  Preprocessor preprocessor;
  EnsembleBank bank;
  ReliabilityWeights weights;

  static ModelDir open(const fs::path& dir) {
    ModelDir m;
    m.dir = dir;
    m.config = ExperimentConfig::read(dir / "config.txt");
    m.manifest = DatasetManifest::read(m.config.dataset);
    auto pin = open_in(dir / "preprocessor.txt");
    m.preprocessor = Preprocessor::load(pin);
    m.bank = load_bank(dir / "bank");
    auto win = open_in(dir / "weights.txt");
    m.weights = load_weights(win, (dir / "weights.txt").string());
    return m;
  }

  std::uint64_t seed() const { return config.seeds.front(); }

  /// Labeled training rows, rebuilt from the dataset and the stored ids.
  Dataset training_set() const {
    const RawTable raw = load_csv(manifest.csv, manifest.load);
    const auto ids = read_ids(dir / "training_ids.txt");
    std::vector<std::size_t> positions;
    std::map<std::size_t, std::size_t> where;
    for (std::size_t i = 0; i < raw.ids.size(); ++i) where[raw.ids[i]] = i;
    for (auto id : ids) {
      const auto it = where.find(id);
      if (it == where.end()) fail(ErrorKind::schema, "training id " + std::to_string(id) + " is not in the dataset");
      positions.push_back(it->second);
    }
    return preprocessor.apply(raw.subset(positions));
  }

  /// Rows of a CSV with the dataset's columns; the label column is optional.
  Dataset load_rows(const fs::path& csv) const {
    auto options = manifest.load;
    std::ifstream in = open_in(csv);
    std::string header;
    std::getline(in, header);
    bool has_label = false;
    for (const auto& name : split(header, ','))
      if (trim(name) == options.label_column) has_label = true;
    if (!has_label) options.label_column.clear();
    return preprocessor.apply(load_csv(csv, options));
  }

  fs::path calibration_path(double target) const {
    return dir / ("calibration-tpr-" + format_double(target) + ".txt");
  }
};

// ---- subcommands ---------------------------------------------------------

int cmd_train(const ConfigArgs& args, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  auto config = args.build();
  if (seed) config.seeds = {*seed};
  if (!out_dir.empty()) config.output = out_dir;
  if (config.output.empty()) fail(ErrorKind::invalid_argument, "train: --output directory is required");
  if (config.method == Method::platt) fail(ErrorKind::invalid_argument, "train: platt has no ensemble bank");
  if (config.method == Method::cebb2 && config.target_tpr.size() > 1)
    fail(ErrorKind::invalid_argument, "train: cebb2 takes a single target_tpr");
  config.seeds.resize(1);
  config.validate();

  const auto manifest = DatasetManifest::read(config.dataset);
  const RawTable raw = load_csv(manifest.csv, manifest.load);
  const auto split = prepare_split(manifest, raw, config.validation_fraction, config.stratify, config.seeds.front());
  const auto plan = seed_plan(config.seeds.front());
  EnsembleOptions options;
  options.threads = config.threads;

  EnsembleBank bank;
  if (config.method == Method::cebb2) {
    std::vector<PerformanceTarget> targets;
    if (config.target_tpr.front() > 0) targets.push_back({Metric::tpr, config.target_tpr.front()});
    bank = train_cebb2_ensemble(split.train, config.grid, config.replicates, targets, plan.bank, config.metric, options,
                                config.big_m, config.time_limit);
  } else {
    bank = train_ensemble(split.train, config.grid, config.replicates, config.metric, plan.bank,
                          svm_learner(config.tolerance), options);
  }
  const auto means = mean_performance(bank);
  const auto weights = config.method == Method::ebb_best_theta ? best_theta_weights(means)
                                                               : reliability_weights(means, config.epsilon);

  const fs::path dir = config.output;
  fs::create_directories(dir);
  write_text(dir / "config.txt", [&](std::ostream& o) { config.to_key_values().write(o); });
  write_text(dir / "preprocessor.txt", [&](std::ostream& o) { split.preprocessor.save(o); });
  write_ids(split.train.ids, dir / "training_ids.txt");
  write_ids(split.validation.ids, dir / "validation_ids.txt");
  save_bank(bank, dir / "bank");
  write_text(dir / "weights.txt", [&](std::ostream& o) { save_weights(weights, o); });

  nlohmann::json out{{"status", "ok"},
                     {"output", dir.string()},
                     {"training_rows", split.train.rows()},
                     {"validation_rows", split.validation.rows()},
                     {"retained_theta", weights.retained}};
  std::vector<double> usable;
  for (std::size_t t = 0; t < bank.grid.size(); ++t) usable.push_back(static_cast<double>(bank.usable_count(t)));
  out["usable_replicates"] = usable;
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_calibrate(const std::string& model_dir, const std::vector<double>& targets) {
  const auto model = ModelDir::open(model_dir);
  const Dataset train = model.training_set();
  nlohmann::json out{{"status", "ok"}, {"files", nlohmann::json::array()}};
  for (double t : targets) {
    const auto cal = calibrate_thresholds(model.bank, model.weights, train, t);
    const auto path = model.calibration_path(t);
    write_text(path, [&](std::ostream& o) { cal.save(o); });
    out["files"].push_back(path.string());
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_predict(const std::string& model_dir, const std::string& input, const std::string& output,
                std::optional<double> target) {
  const auto model = ModelDir::open(model_dir);
  const Dataset rows = model.load_rows(input);
  Eigen::VectorXd p;
  if (target) {
    auto in = open_in(model.calibration_path(*target));
    const auto cal = ThresholdCalibration::load(in, model.calibration_path(*target).string());
    p = cebb1_probabilities(model.bank, model.weights, cal, rows.x);
  } else {
    p = ensemble_probabilities(model.bank, model.weights, rows.x);
  }
  auto write = [&](std::ostream& o) {
    o << (rows.labeled() ? "instance_id,label,probability\n" : "instance_id,probability\n");
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      o << rows.ids[static_cast<std::size_t>(i)] << ',';
      if (rows.labeled()) o << (rows.y(i) > 0 ? 1 : 0) << ',';
      o << format_double(p(i)) << '\n';
    }
  };
  if (output.empty() || output == "-") write(std::cout);
  else write_text(output, write);
  return 0;
}

int cmd_evaluate(const std::string& report_path, const std::string& output) {
  auto in = open_in(report_path);
  const auto report = read_report_csv(in, report_path);
  if (report.rows.empty()) fail(ErrorKind::degenerate_data, "evaluate: report has no rows");
  auto write = [&](std::ostream& o) {
    o << "[all]\n";
    write_summary(summarize(report), o);
    o << '\n';
    write_grouped_summary(report, o);
  };
  if (output.empty() || output == "-") write(std::cout);
  else write_text(output, write);
  return 0;
}

int cmd_experiment(const ConfigArgs& args) {
  const auto result = run_experiment(args.build());
  write_grouped_summary(result.combined, std::cout);
  for (const auto& note : result.combined.notes) std::cout << "note: " << note << '\n';
  return 0;
}

int cmd_export(const std::string& model_dir, std::size_t theta, std::size_t instance, const std::string& input,
               const std::string& output, const std::string& sweep, const std::string& sweep_output) {
  const auto model = ModelDir::open(model_dir);
  const Dataset rows = input.empty() ? model.preprocessor.apply(load_csv(model.manifest.csv, model.manifest.load))
                                     : model.load_rows(input);
  const auto dist = export_score_distribution(model.bank, theta, rows, instance);
  if (output.empty() || output == "-") write_score_distribution(dist, std::cout);
  else write_text(output, [&](std::ostream& o) { write_score_distribution(dist, o); });

  nlohmann::json out{{"status", "ok"}, {"theta", theta}, {"instance_id", instance}, {"proportion", dist.proportion}};
  if (!sweep.empty()) {
    const auto parts = split(sweep, ':');
    if (parts.size() != 3) fail(ErrorKind::invalid_argument, "--sweep expects lo:hi:step");
    const double lo = parse_double(parts[0]), hi = parse_double(parts[1]), step = parse_double(parts[2]);
    if (!(step > 0) || hi < lo) fail(ErrorKind::invalid_argument, "--sweep needs lo <= hi and a positive step");
    std::vector<double> thresholds;
    for (long k = 0; lo + static_cast<double>(k) * step <= hi + 1e-12 * std::abs(hi); ++k)
      thresholds.push_back(lo + static_cast<double>(k) * step);
    const auto points = threshold_sweep(dist, thresholds);
    auto write = [&](std::ostream& o) {
      o << "threshold,proportion\n";
      for (const auto& [t, f] : points) o << format_double(t) << ',' << format_double(f) << '\n';
    };
    if (sweep_output.empty()) fail(ErrorKind::invalid_argument, "--sweep needs --sweep-output");
    write_text(sweep_output, write);
    out["sweep_output"] = sweep_output;
  }
  (output.empty() || output == "-" ? std::cerr : std::cout) << out.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bootstrap-ensemble SVM probability estimates"};
  app.require_subcommand(1);

  ConfigArgs train_args, experiment_args;
  std::string train_out;
  std::optional<std::uint64_t> train_seed;
  auto* train = app.add_subcommand("train", "train and persist an ensemble bank for one seed");
  train_args.attach(train, kAllKeys);
  train->add_option("-o,--out", train_out, "model directory (same as --output)");
  train->add_option("--seed", train_seed, "seed of the outer split and the bank");

  std::string model_dir;
  std::vector<double> cal_targets;
  auto* calibrate = app.add_subcommand("calibrate", "per-theta thresholds for target TPR values");
  calibrate->add_option("-m,--model", model_dir, "model directory")->required();
  calibrate->add_option("-t,--target-tpr", cal_targets, "one or more targets in [0, 1]")->required()->delimiter(',');

  std::string input, output;
  std::optional<double> target;
  auto* predict = app.add_subcommand("predict", "probabilities for the rows of a CSV file");
  predict->add_option("-m,--model", model_dir, "model directory")->required();
  predict->add_option("-i,--input", input, "CSV with the dataset's columns")->required();
  predict->add_option("-o,--output", output, "output CSV (default stdout)");
  predict->add_option("-t,--target-tpr", target, "use the stored calibration for this target");

  std::string report_path;
  auto* evaluate = app.add_subcommand("evaluate", "MSE tables from a report CSV");
  evaluate->add_option("-r,--report", report_path, "report.csv")->required();
  evaluate->add_option("-o,--output", output, "output file (default stdout)");

  auto* experiment = app.add_subcommand("experiment", "full pipeline from a config file");
  experiment_args.attach(experiment, kAllKeys);

  std::size_t theta = 0, instance = 0;
  std::string sweep, sweep_output;
  auto* exporter = app.add_subcommand("export-scores", "per-replicate scores of one instance");
  exporter->add_option("-m,--model", model_dir, "model directory")->required();
  exporter->add_option("--theta", theta, "grid index")->required();
  exporter->add_option("--instance", instance, "instance id")->required();
  exporter->add_option("-i,--input", input, "CSV holding the instance (default: the dataset)");
  exporter->add_option("-o,--output", output, "output CSV (default stdout)");
  exporter->add_option("--sweep", sweep, "threshold grid lo:hi:step");
  exporter->add_option("--sweep-output", sweep_output, "CSV for the threshold sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), "", 2);
  }

  try {
    if (*train) return cmd_train(train_args, train_out, train_seed);
    if (*calibrate) return cmd_calibrate(model_dir, cal_targets);
    if (*predict) return cmd_predict(model_dir, input, output, target);
    if (*evaluate) return cmd_evaluate(report_path, output);
    if (*experiment) return cmd_experiment(experiment_args);
    if (*exporter) return cmd_export(model_dir, theta, instance, input, output, sweep, sweep_output);
  } catch (const Error& e) {
    return report_error(std::string(to_string(e.kind())), e.message(), e.context(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), "", 1);
  }
  return 1;
}
