#include <ebbsvm/ensemble.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <ebbsvm/parallel.hpp>
#include <ebbsvm/random.hpp>

namespace ebbsvm {

ParameterGrid ParameterGrid::powers_of_two(int lo, int hi) {
  require(lo <= hi, "powers_of_two: empty exponent range");
  ParameterGrid grid;
  for (int e = lo; e <= hi; ++e) grid.values.push_back({std::ldexp(1.0, e), KernelSpec::linear()});
  return grid;
}

ParameterGrid ParameterGrid::from_costs(std::span<const double> costs) {
  ParameterGrid grid;
  for (double c : costs) grid.values.push_back({c, KernelSpec::linear()});
  grid.validate();
  return grid;
}

void ParameterGrid::validate() const {
  require(!values.empty(), "parameter grid is empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(values[i].C > 0 && std::isfinite(values[i].C), "parameter grid: C must be positive and finite");
    for (std::size_t j = 0; j < i; ++j) require(!(values[i] == values[j]), "parameter grid: duplicate value");
  }
}

std::size_t EnsembleBank::usable_count(std::size_t theta) const {
  return static_cast<std::size_t>(
      std::count_if(models[theta].begin(), models[theta].end(), [](const Replicate& r) { return r.usable(); }));
}

BaseLearner svm_learner(double tolerance) {
  return [tolerance](const Dataset& sample, const GridPoint& theta) {
    SolverOptions options;
    options.tolerance = tolerance;
    return ReplicateFit{train_svm<double>(sample.x, sample.y, theta.C, theta.kernel, options), std::nullopt};
  };
}

namespace {

bool has_both_classes(const Dataset& train, std::span<const std::size_t> rows) {
  bool pos = false, neg = false;
  for (auto r : rows) (train.y(static_cast<Eigen::Index>(r)) > 0 ? pos : neg) = true;
  return pos && neg;
}

Replicate fit_replicate(const Dataset& train, const GridPoint& theta, std::size_t t, std::size_t b,
                        std::uint64_t master_seed, Metric metric, const BaseLearner& learner,
                        const EnsembleOptions& options) {
  Replicate rep;
  for (unsigned attempt = 0; attempt <= options.max_retries; ++attempt) {
    rep.attempts = attempt + 1;
    rep.seed = derive_seed(master_seed, {t, b, attempt});
    auto draw = bootstrap_sample(train, rep.seed);
    if (!has_both_classes(train, draw.in_bag)) {
      rep.failure = "bootstrap sample holds a single class";
      continue;
    }
    Dataset sample = train.subset(draw.in_bag);
    ColumnScaling scaling{Eigen::VectorXd::Zero(train.cols()), Eigen::VectorXd::Ones(train.cols())};
    if (options.standardize_replicates) {
      scaling = column_scaling(train, draw.in_bag);
      sample.x = (sample.x.rowwise() - scaling.mean.transpose()).array().rowwise() / scaling.scale.transpose().array();
    }
    ReplicateFit fit;
    try {
      fit = learner(sample, theta);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate_data && e.kind() != ErrorKind::infeasible) throw;
      rep.failure = e.message();
      rep.certificate.reset();
      continue;
    }
    // Back to the coordinates of `train`: w' x' + b with x' = (x - mu) / s.
    fit.model.weights = fit.model.weights.cwiseQuotient(scaling.scale);
    fit.model.intercept -= fit.model.weights.dot(scaling.mean);
    rep.model = std::move(fit.model);
    rep.certificate = std::move(fit.certificate);
    rep.failed = false;
    rep.failure.clear();
    rep.out_of_bag = std::move(draw.out_of_bag);
    if (!rep.out_of_bag.empty()) {
      const Dataset oob = train.subset(rep.out_of_bag);
      rep.oob_performance = try_performance(scores(rep.model, oob.x), oob.y, metric);
    }
    return rep;
  }
  rep.failed = true;
  return rep;
}

}  // namespace

EnsembleBank train_ensemble(const Dataset& train, const ParameterGrid& grid, std::size_t B, Metric metric,
                            std::uint64_t master_seed, const BaseLearner& learner, const EnsembleOptions& options) {
  grid.validate();
  require(B >= 1, "train_ensemble: B must be at least 1");
  if (train.rows() == 0) fail(ErrorKind::degenerate_data, "train_ensemble: empty training set");
  require(train.labeled(), "train_ensemble: training set must be labeled");

  EnsembleBank bank;
  bank.grid = grid;
  bank.replicates = B;
  bank.metric = metric;
  bank.master_seed = master_seed;
  bank.learner = options.learner_name;
  bank.learner_settings = options.learner_settings;
  bank.training_ids = train.ids;
  bank.dimension = static_cast<std::size_t>(train.cols());
  bank.models.assign(grid.size(), std::vector<Replicate>(B));

  parallel_for(grid.size() * B, options.threads, [&](std::size_t task) {
    const std::size_t t = task / B, b = task % B;
    try {
      bank.models[t][b] = fit_replicate(train, grid[t], t, b, master_seed, metric, learner, options);
    } catch (const Error& e) {
      throw e.with_context("theta=" + std::to_string(t) + " replicate=" + std::to_string(b));
    }
  });

  for (std::size_t t = 0; t < grid.size(); ++t)
    if (bank.usable_count(t) == 0)
      fail(ErrorKind::training_failed, "train_ensemble: every replicate failed for theta=" + std::to_string(t) +
                                           " (" + bank.models[t].front().failure + ")");
  return bank;
}

std::vector<double> mean_performance(const EnsembleBank& bank) {
  std::vector<double> means(bank.grid.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t < bank.grid.size(); ++t) {
    double sum = 0;
    std::size_t count = 0;
    for (const auto& rep : bank.models[t]) {
      if (rep.failed || !rep.oob_performance) continue;
      sum += *rep.oob_performance;
      ++count;
    }
    if (count) means[t] = sum / static_cast<double>(count);
  }
  return means;
}

namespace {

void normalize(ReliabilityWeights& w) {
  double total = 0;
  for (auto j : w.retained) total += w.mean[j];
  w.rho.assign(w.mean.size(), 0.0);
  for (auto j : w.retained)
    w.rho[j] = total > 0 ? w.mean[j] / total : 1.0 / static_cast<double>(w.retained.size());
}

double finite_max(std::span<const double> means) {
  double best = -std::numeric_limits<double>::infinity();
  for (double v : means)
    if (!std::isnan(v)) best = std::max(best, v);
  if (!std::isfinite(best)) fail(ErrorKind::degenerate_data, "reliability weights: no theta has a mean performance");
  return best;
}

}  // namespace

ReliabilityWeights reliability_weights(std::span<const double> means, double epsilon) {
  require(!means.empty(), "reliability_weights: no means");
  require(epsilon >= 0, "reliability_weights: epsilon must be non-negative");
  ReliabilityWeights w;
  w.mean.assign(means.begin(), means.end());
  w.epsilon = epsilon;
  const double best = finite_max(means);
  for (std::size_t j = 0; j < means.size(); ++j)
    if (means[j] >= best - epsilon) w.retained.push_back(j);
  normalize(w);
  return w;
}

ReliabilityWeights best_theta_weights(std::span<const double> means) {
  require(!means.empty(), "best_theta_weights: no means");
  ReliabilityWeights w;
  w.mean.assign(means.begin(), means.end());
  const double best = finite_max(means);
  for (std::size_t j = 0; j < means.size(); ++j)
    if (means[j] == best) w.retained.push_back(j);
  normalize(w);
  return w;
}

Eigen::MatrixXd score_matrix(const EnsembleBank& bank, std::size_t theta, const Eigen::MatrixXd& x) {
  require(theta < bank.grid.size(), "score_matrix: theta index out of range");
  if (static_cast<std::size_t>(x.cols()) != bank.dimension)
    fail(ErrorKind::invalid_argument, "score_matrix: expected " + std::to_string(bank.dimension) + " attributes, got " +
                                          std::to_string(x.cols()));
  const auto& reps = bank.models[theta];
  const auto usable = static_cast<Eigen::Index>(bank.usable_count(theta));
  Eigen::MatrixXd w(x.cols(), usable);
  Eigen::RowVectorXd b(usable);
  Eigen::Index c = 0;
  for (const auto& rep : reps) {
    if (!rep.usable()) continue;
    w.col(c) = rep.model.weights;
    b(c++) = rep.model.intercept;
  }
  Eigen::MatrixXd s = x * w;
  s.rowwise() += b;
  return s;
}

double positive_fraction(const Eigen::Ref<const Eigen::RowVectorXd>& row_scores, double threshold) {
  if (row_scores.size() == 0) return 0.0;
  const auto hits = (row_scores.array() >= threshold).count();
  return static_cast<double>(hits) / static_cast<double>(row_scores.size());
}

double per_theta_probability(const EnsembleBank& bank, std::size_t theta, const Eigen::VectorXd& x,
                             double threshold) {
  const Eigen::MatrixXd s = score_matrix(bank, theta, x.transpose());
  return positive_fraction(s.row(0), threshold);
}

Eigen::VectorXd ensemble_probabilities(const EnsembleBank& bank, const ReliabilityWeights& weights,
                                       const Eigen::MatrixXd& x, std::span<const double> thresholds) {
  require(weights.rho.size() == bank.grid.size(), "ensemble_probability: weights do not match the bank grid");
  require(thresholds.empty() || thresholds.size() == bank.grid.size(),
          "ensemble_probability: one threshold per theta expected");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(x.rows());
  for (auto j : weights.retained) {
    const Eigen::MatrixXd s = score_matrix(bank, j, x);
    const double t = thresholds.empty() ? 0.0 : thresholds[j];
    for (Eigen::Index i = 0; i < x.rows(); ++i) p(i) += weights.rho[j] * positive_fraction(s.row(i), t);
  }
  // Rounding in sum(rho) may leave p a few ulps outside [0, 1].
  return p.cwiseMax(0.0).cwiseMin(1.0);
}

double ensemble_probability(const EnsembleBank& bank, const ReliabilityWeights& weights, const Eigen::VectorXd& x,
                            std::span<const double> thresholds) {
  return ensemble_probabilities(bank, weights, x.transpose(), thresholds)(0);
}

}  // namespace ebbsvm
