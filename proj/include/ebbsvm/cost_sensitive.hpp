#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <ebbsvm/certificate.hpp>
#include <ebbsvm/dataset.hpp>
#include <ebbsvm/ensemble.hpp>
#include <ebbsvm/svm.hpp>

namespace ebbsvm {

// ---- threshold shifting --------------------------------------------------

struct ThresholdCalibration {
  double target_tpr = 0;
  /// One per theta of the bank; zero outside J.
  std::vector<double> thresholds;
  std::string source = "oob-median";

  void save(std::ostream& out) const;
  static ThresholdCalibration load(std::istream& in, const std::string& origin = "<stream>");
};

/// Representative score of each row of `calibration` under `theta`: the median
/// over usable replicates for which the row was out of bag, or over all usable
/// replicates when the row never was (or is not a training row of the bank).
std::vector<double> representative_scores(const EnsembleBank& bank, std::size_t theta, const Dataset& calibration);

/// Largest t <= 0 such that at least ceil(target * P) of the P values reach t.
double shifted_threshold(std::vector<double> positive_medians, double target_tpr);

/// Per-theta thresholds over J from the calibration positives.
ThresholdCalibration calibrate_thresholds(const EnsembleBank& bank, const ReliabilityWeights& weights,
                                          const Dataset& calibration, double target_tpr);

double cebb1_probability(const EnsembleBank& bank, const ReliabilityWeights& weights,
                         const ThresholdCalibration& calibration, const Eigen::VectorXd& x);
Eigen::VectorXd cebb1_probabilities(const EnsembleBank& bank, const ReliabilityWeights& weights,
                                    const ThresholdCalibration& calibration, const Eigen::MatrixXd& x);

// ---- constrained SVM -----------------------------------------------------

struct PerformanceTarget {
  Metric measure = Metric::tpr;  // tpr or tnr
  double level = 0;
};

struct CsvmSpec {
  double C = 1;
  double big_m = 1000;
  std::vector<PerformanceTarget> targets;
  double time_limit = 300;
  /// Above this many binaries the solve is heuristic.
  std::size_t exact_limit = 200;
  /// KKT tolerance of every QP subproblem.
  double tolerance = 1e-9;
};

struct CsvmResult {
  LinearSvm model;
  Eigen::VectorXd slack;
  std::vector<std::uint8_t> zeta;
  CsvmCertificate certificate;
};

/// Minimizes w'w + C sum(xi) subject to y_i (w x_i + b) >= 1 - xi_i,
/// 0 <= xi_i <= M (1 - zeta_i) and, per target, sum of zeta over the class
/// >= ceil(level * class size). Throws ErrorKind::infeasible when no assignment
/// is found.
CsvmResult train_csvm(const Dataset& train, const CsvmSpec& spec);

/// Base learner wrapping train_csvm. Grid value C maps to CSVM cost 2C, so that
/// with no targets the replicate solves the same problem as train_svm(C).
BaseLearner csvm_learner(const std::vector<PerformanceTarget>& targets, double big_m = 1000, double time_limit = 300,
                         std::size_t exact_limit = 200);

EnsembleBank train_cebb2_ensemble(const Dataset& train, const ParameterGrid& grid, std::size_t B,
                                  const std::vector<PerformanceTarget>& targets, std::uint64_t master_seed,
                                  Metric metric = Metric::accuracy, const EnsembleOptions& options = {},
                                  double big_m = 1000, double time_limit = 300);

std::string describe_targets(const std::vector<PerformanceTarget>& targets);
std::vector<PerformanceTarget> parse_targets(const std::string& text);

}  // namespace ebbsvm
