#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <ebbsvm/certificate.hpp>
#include <ebbsvm/dataset.hpp>
#include <ebbsvm/svm.hpp>

namespace ebbsvm {

struct GridPoint {
  double C = 1;
  KernelSpec kernel;

  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

struct ParameterGrid {
  std::vector<GridPoint> values;

  /// C = 2^lo, ..., 2^hi with the linear kernel.
  static ParameterGrid powers_of_two(int lo, int hi);
  static ParameterGrid from_costs(std::span<const double> costs);

  std::size_t size() const { return values.size(); }
  const GridPoint& operator[](std::size_t i) const { return values[i]; }
  /// Throws unless non-empty, every C positive and finite, values distinct.
  void validate() const;
};

/// One (theta, b) cell of the bank.
struct Replicate {
  LinearSvm model;
  /// Seed of the accepted draw and how many draws were made (1 = no retry).
  std::uint64_t seed = 0;
  unsigned attempts = 0;
  bool failed = false;
  std::string failure;
  /// Performance on the out-of-bag rows; empty when the OOB set lacks the
  /// classes the metric needs (always so when OOB is empty).
  std::optional<double> oob_performance;
  /// Positions into the training set, ascending.
  std::vector<std::size_t> out_of_bag;
  std::optional<CsvmCertificate> certificate;

  bool usable() const { return !failed; }
};

struct EnsembleBank {
  ParameterGrid grid;
  std::size_t replicates = 0;
  Metric metric = Metric::accuracy;
  std::uint64_t master_seed = 0;
  /// "svm" for the plain learner, "csvm" for the constrained one.
  std::string learner = "svm";
  std::string learner_settings;
  /// models[theta][b].
  std::vector<std::vector<Replicate>> models;
  /// Ids of the training rows, in training-set order.
  std::vector<std::size_t> training_ids;
  std::size_t dimension = 0;

  std::size_t usable_count(std::size_t theta) const;
};

struct ReplicateFit {
  LinearSvm model;
  std::optional<CsvmCertificate> certificate;
};

/// Fits one replicate on `sample` (already standardized). Throws Error with
/// kind degenerate_data or infeasible to request a fresh draw.
using BaseLearner = std::function<ReplicateFit(const Dataset& sample, const GridPoint& theta)>;

BaseLearner svm_learner(double tolerance = 1e-3);

struct EnsembleOptions {
  unsigned threads = 0;
  /// Extra draws after a single-class or infeasible sample.
  unsigned max_retries = 5;
  /// Re-standardize scaled columns on each bootstrap sample and fold the
  /// transform back into (w, b).
  bool standardize_replicates = true;
  std::string learner_name = "svm";
  std::string learner_settings;
};

/// Fits every (theta, b) replicate. Seeds are derive_seed(master_seed, {theta, b, attempt}).
EnsembleBank train_ensemble(const Dataset& train, const ParameterGrid& grid, std::size_t B, Metric metric,
                            std::uint64_t master_seed, const BaseLearner& learner = svm_learner(),
                            const EnsembleOptions& options = {});

/// Mean OOB performance per theta over replicates that have one; NaN when none do.
std::vector<double> mean_performance(const EnsembleBank& bank);

struct ReliabilityWeights {
  std::vector<double> mean;
  double epsilon = 0;
  std::vector<std::size_t> retained;  // J, ascending
  std::vector<double> rho;            // one per theta, zero outside J
};

/// J = {j : mean_j >= max mean - epsilon}, rho_j = mean_j / sum_J mean.
/// NaN means never enter J. All-zero means over J get uniform weights.
ReliabilityWeights reliability_weights(std::span<const double> means, double epsilon);

/// Weights over the argmax set only (the best-theta estimator).
ReliabilityWeights best_theta_weights(std::span<const double> means);

/// Scores of every usable replicate of `theta` on each row of `x` (rows x usable).
Eigen::MatrixXd score_matrix(const EnsembleBank& bank, std::size_t theta, const Eigen::MatrixXd& x);

/// Fraction of usable replicates of `theta` scoring >= threshold at x.
double per_theta_probability(const EnsembleBank& bank, std::size_t theta, const Eigen::VectorXd& x,
                             double threshold = 0.0);

/// Weighted sum over J of per-theta probabilities. `thresholds` is empty
/// (all zero) or has one entry per theta.
double ensemble_probability(const EnsembleBank& bank, const ReliabilityWeights& weights, const Eigen::VectorXd& x,
                            std::span<const double> thresholds = {});

/// Row-wise ensemble_probability.
Eigen::VectorXd ensemble_probabilities(const EnsembleBank& bank, const ReliabilityWeights& weights,
                                       const Eigen::MatrixXd& x, std::span<const double> thresholds = {});

/// Proportion of entries of `row_scores` >= threshold.
double positive_fraction(const Eigen::Ref<const Eigen::RowVectorXd>& row_scores, double threshold);

}  // namespace ebbsvm
