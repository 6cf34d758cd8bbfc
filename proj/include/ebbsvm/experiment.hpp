#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <ebbsvm/cost_sensitive.hpp>
#include <ebbsvm/dataset.hpp>
#include <ebbsvm/ensemble.hpp>
#include <ebbsvm/key_value.hpp>
#include <ebbsvm/report.hpp>

namespace ebbsvm {

enum class Method { ebb, ebb_best_theta, cebb1, cebb2, platt };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

/// Every key of the config file, also accepted as a command-line override:
///   dataset, method, preset (desk | full), replicates, grid (list of C),
///   grid_exponents (lo:hi, powers of two), epsilon, metric, target_tpr (list),
///   seeds (list), validation_fraction, stratify, output, tolerance, big_m,
///   time_limit, outer_folds, inner_folds, threads.
struct ExperimentConfig {
  std::filesystem::path dataset;
  Method method = Method::ebb;
  std::size_t replicates = 100;
  ParameterGrid grid = ParameterGrid::powers_of_two(-5, 5);
  double epsilon = 0.05;
  Metric metric = Metric::accuracy;
  std::vector<double> target_tpr;
  std::vector<std::uint64_t> seeds{1};
  double validation_fraction = 0.1;
  bool stratify = false;
  std::filesystem::path output;  // empty: nothing is written
  double tolerance = 1e-3;
  double big_m = 1000;
  double time_limit = 300;
  std::size_t outer_folds = 10;
  std::size_t inner_folds = 10;
  unsigned threads = 0;

  /// Relative dataset/output paths are resolved against `base`.
  static ExperimentConfig from_key_values(const KeyValueFile& kv, const std::filesystem::path& base = {});
  static ExperimentConfig read(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value, const std::filesystem::path& base = {});
  /// Fills defaults that depend on the method and checks consistency.
  void validate();
  KeyValueFile to_key_values() const;
};

/// Target TPR values used when a cost-sensitive run names none.
inline const std::vector<double> kDefaultTargets{0.0, 0.5, 0.7, 0.9, 1.0};

/// Outer split of one seed, preprocessed on its training part.
struct PreparedSplit {
  std::string dataset_name;
  RawTable raw_train;
  RawTable raw_validation;
  Preprocessor preprocessor;
  Dataset train;
  Dataset validation;
};

/// Seeds used by one repetition, all derived from the repetition seed.
struct SeedPlan {
  std::uint64_t split;
  std::uint64_t bank;
  std::uint64_t folds;
};
SeedPlan seed_plan(std::uint64_t seed);

PreparedSplit prepare_split(const DatasetManifest& manifest, const RawTable& raw, double validation_fraction,
                            bool stratify, std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  std::optional<PreparedSplit> split;  // empty for platt
  std::vector<EnsembleBank> banks;     // one, or one per target for cebb2
  std::vector<ReliabilityWeights> weights;
  std::vector<ThresholdCalibration> calibrations;
  std::vector<ProbabilityReport> reports;  // one per target, or one
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string dataset_name;
  std::vector<SeedRun> runs;
  /// All report rows in seed, then target order.
  ProbabilityReport combined;
};

/// Outer split, preprocessing, the method's pipeline and a report on V for
/// every seed. With `config.output` set, writes config.txt, report.csv,
/// summary.txt and per-seed banks, weights and calibrations.
ExperimentResult run_experiment(const ExperimentConfig& config);

void save_weights(const ReliabilityWeights& weights, std::ostream& out);
ReliabilityWeights load_weights(std::istream& in, const std::string& origin = "<stream>");

/// Per-group summaries as [method tpr=... seed=...] sections.
void write_grouped_summary(const ProbabilityReport& report, std::ostream& out);

// ---- score distributions -------------------------------------------------

struct ScoreDistribution {
  std::size_t theta = 0;
  std::size_t instance_id = 0;
  std::vector<std::size_t> replicate;
  std::vector<double> score;
  /// Fraction of scores >= 0, the per-theta probability.
  double proportion = 0;
};

/// Scores of row `instance_id` of `data` under every usable replicate of `theta`.
ScoreDistribution export_score_distribution(const EnsembleBank& bank, std::size_t theta, const Dataset& data,
                                            std::size_t instance_id);

void write_score_distribution(const ScoreDistribution& dist, std::ostream& out);

/// (threshold, fraction of scores >= threshold) for each threshold.
std::vector<std::pair<double, double>> threshold_sweep(const ScoreDistribution& dist,
                                                       const std::vector<double>& thresholds);

}  // namespace ebbsvm
