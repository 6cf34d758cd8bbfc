#include <ebbsvm/cost_sensitive.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <queue>
#include <unordered_map>

#include <ebbsvm/key_value.hpp>

namespace ebbsvm {

// ---- threshold shifting --------------------------------------------------

namespace {

double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<double> representative_scores(const EnsembleBank& bank, std::size_t theta, const Dataset& calibration) {
  std::unordered_map<std::size_t, std::size_t> position;
  for (std::size_t p = 0; p < bank.training_ids.size(); ++p) position.emplace(bank.training_ids[p], p);

  std::vector<const Replicate*> usable;
  for (const auto& rep : bank.models[theta])
    if (rep.usable()) usable.push_back(&rep);
  const Eigen::MatrixXd s = score_matrix(bank, theta, calibration.x);

  std::vector<double> medians(static_cast<std::size_t>(calibration.rows()));
  std::vector<double> picked;
  for (Eigen::Index i = 0; i < calibration.rows(); ++i) {
    picked.clear();
    auto found = position.find(calibration.ids[static_cast<std::size_t>(i)]);
    if (found != position.end()) {
      for (std::size_t c = 0; c < usable.size(); ++c) {
        const auto& oob = usable[c]->out_of_bag;
        if (std::binary_search(oob.begin(), oob.end(), found->second)) picked.push_back(s(i, static_cast<Eigen::Index>(c)));
      }
    }
    if (picked.empty())
      for (Eigen::Index c = 0; c < s.cols(); ++c) picked.push_back(s(i, c));
    medians[static_cast<std::size_t>(i)] = median_of(picked);
  }
  return medians;
}

double shifted_threshold(std::vector<double> positive_medians, double target_tpr) {
  require(target_tpr >= 0 && target_tpr <= 1, "target TPR must lie in [0, 1]");
  if (positive_medians.empty()) fail(ErrorKind::degenerate_data, "calibration set has no positive instances");
  if (target_tpr == 0) return 0.0;
  const double p = static_cast<double>(positive_medians.size());
  auto k = static_cast<std::size_t>(std::ceil(target_tpr * p - 1e-9));
  k = std::clamp<std::size_t>(k, 1, positive_medians.size());
  std::sort(positive_medians.begin(), positive_medians.end(), std::greater<>());
  return std::min(0.0, positive_medians[k - 1]);
}

ThresholdCalibration calibrate_thresholds(const EnsembleBank& bank, const ReliabilityWeights& weights,
                                          const Dataset& calibration, double target_tpr) {
  require(target_tpr >= 0 && target_tpr <= 1, "target TPR must lie in [0, 1]");
  require(weights.rho.size() == bank.grid.size(), "calibrate_thresholds: weights do not match the bank grid");
  std::vector<std::size_t> positives;
  for (Eigen::Index i = 0; i < calibration.rows(); ++i)
    if (calibration.y(i) > 0) positives.push_back(static_cast<std::size_t>(i));
  if (positives.empty()) fail(ErrorKind::degenerate_data, "calibrate_thresholds: no positive calibration instances");

  ThresholdCalibration out;
  out.target_tpr = target_tpr;
  out.thresholds.assign(bank.grid.size(), 0.0);
  if (target_tpr == 0) return out;
  const Dataset pos = calibration.subset(positives);
  for (auto j : weights.retained) out.thresholds[j] = shifted_threshold(representative_scores(bank, j, pos), target_tpr);
  return out;
}

double cebb1_probability(const EnsembleBank& bank, const ReliabilityWeights& weights,
                         const ThresholdCalibration& calibration, const Eigen::VectorXd& x) {
  return ensemble_probability(bank, weights, x, calibration.thresholds);
}

Eigen::VectorXd cebb1_probabilities(const EnsembleBank& bank, const ReliabilityWeights& weights,
                                    const ThresholdCalibration& calibration, const Eigen::MatrixXd& x) {
  return ensemble_probabilities(bank, weights, x, calibration.thresholds);
}

void ThresholdCalibration::save(std::ostream& out) const {
  KeyValueFile kv;
  kv.set("format", "ebbsvm-threshold-calibration 1");
  kv.set("target_tpr", format_hex(target_tpr));
  kv.set("source", source);
  std::string list;
  for (std::size_t j = 0; j < thresholds.size(); ++j) list += (j ? "," : "") + format_hex(thresholds[j]);
  kv.set("thresholds", list);
  kv.write(out);
}

ThresholdCalibration ThresholdCalibration::load(std::istream& in, const std::string& origin) {
  const auto kv = KeyValueFile::parse(in, origin);
  if (kv.get_or("format", "") != "ebbsvm-threshold-calibration 1")
    fail(ErrorKind::format, origin + ": not a threshold calibration record");
  ThresholdCalibration c;
  c.target_tpr = kv.get_double("target_tpr");
  c.source = kv.get_or("source", c.source);
  for (const auto& field : split(kv.get("thresholds"), ',')) c.thresholds.push_back(parse_double(field));
  return c;
}

// ---- constrained SVM -----------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

struct QpOutcome {
  bool feasible = false;
  LinearSvm model;
  Eigen::VectorXd slack;
  double objective = 0;  // w'w + C sum over soft rows
  double bound = 0;      // twice the dual objective
};

struct ClassTarget {
  int label = 1;
  std::size_t required = 0;
  std::vector<std::size_t> rows;
};

class CsvmSearch {
 public:
  CsvmSearch(const Dataset& data, const CsvmSpec& spec) : data_(data), spec_(spec) {
    soft_box_ = spec.C / 2;
    hard_box_ = 1e6 * std::max(1.0, spec.C);
    zero_tol_ = std::max(1e-7, 10 * spec.tolerance);
  }

  // Rows forced to zero slack are `hard`; every other row is soft without the
  // xi <= M cap, which keeps the value a lower bound for the node.
  QpOutcome solve(const std::vector<std::int8_t>& state) {
    const Eigen::Index m = data_.rows();
    Eigen::VectorXd upper(m);
    for (Eigen::Index i = 0; i < m; ++i) upper(i) = state[static_cast<std::size_t>(i)] == 1 ? hard_box_ : soft_box_;
    SolverOptions options;
    options.tolerance = spec_.tolerance;
    QpOutcome out;
    out.model = fit_linear_dual<double>(data_.x, data_.y, upper, options);
    ++solves_;
    const Eigen::VectorXd f = scores(out.model, data_.x);
    out.slack = (1.0 - data_.y.array() * f.array()).cwiseMax(0.0);
    out.bound = 2 * out.model.diagnostics.dual_objective;
    out.feasible = true;
    double soft_sum = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (state[static_cast<std::size_t>(i)] == 1) {
        if (out.model.dual_coefficients(i) >= hard_box_ * (1 - 1e-9) || out.slack(i) > zero_tol_ * 10) out.feasible = false;
      } else {
        soft_sum += out.slack(i);
      }
    }
    out.objective = out.model.weights.squaredNorm() + spec_.C * soft_sum;
    return out;
  }

  std::size_t solves() const { return solves_; }
  double zero_tol() const { return zero_tol_; }
  double big_m() const { return spec_.big_m; }

 private:
  const Dataset& data_;
  const CsvmSpec& spec_;
  double soft_box_, hard_box_, zero_tol_;
  std::size_t solves_ = 0;
};

struct Candidate {
  QpOutcome qp;
  std::vector<std::int8_t> state;
};

// Fixes every free row of a class to 1 when it needs all of them. Returns false
// when some class can no longer reach its count.
bool propagate(std::vector<std::int8_t>& state, const std::vector<ClassTarget>& targets) {
  for (const auto& t : targets) {
    std::size_t ones = 0, open = 0;
    for (auto r : t.rows) ones += state[r] == 1, open += state[r] == -1;
    if (ones + open < t.required) return false;
    if (ones + open == t.required)
      for (auto r : t.rows)
        if (state[r] == -1) state[r] = 1;
  }
  return true;
}

}  // namespace

CsvmResult train_csvm(const Dataset& train, const CsvmSpec& spec) {
  const auto start = Clock::now();
  require(spec.C > 0 && std::isfinite(spec.C), "train_csvm: C must be positive");
  require(spec.big_m > 0, "train_csvm: big M must be positive");
  require(spec.time_limit > 0, "train_csvm: time limit must be positive");
  if (train.rows() == 0) fail(ErrorKind::degenerate_data, "train_csvm: empty training set");
  if (train.count_label(1) == 0 || train.count_label(-1) == 0)
    fail(ErrorKind::degenerate_data, "train_csvm: both classes must be present");

  std::vector<ClassTarget> targets;
  for (int label : {1, -1}) {
    ClassTarget t{label, 0, {}};
    for (Eigen::Index i = 0; i < train.rows(); ++i)
      if (train.y(i) == label) t.rows.push_back(static_cast<std::size_t>(i));
    for (const auto& p : spec.targets) {
      require(p.measure == Metric::tpr || p.measure == Metric::tnr, "train_csvm: targets must be tpr or tnr");
      require(p.level >= 0 && p.level <= 1, "train_csvm: target level must lie in [0, 1]");
      if ((p.measure == Metric::tpr) != (label == 1)) continue;
      const auto k = static_cast<std::size_t>(std::ceil(p.level * static_cast<double>(t.rows.size()) - 1e-9));
      t.required = std::max(t.required, k);
    }
    if (t.required) targets.push_back(std::move(t));
  }
  std::size_t binaries = 0;
  for (const auto& t : targets) binaries += t.rows.size();
  const bool exact = binaries <= spec.exact_limit;

  CsvmSearch search(train, spec);
  CsvmCertificate cert;
  cert.mode = exact ? "exact" : "heuristic";
  std::optional<Candidate> best;

  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
  auto count_met = [&](const ClassTarget& t, const std::vector<std::int8_t>& state, const QpOutcome& qp) {
    std::size_t met = 0;
    for (auto r : t.rows)
      met += state[r] == 1 || (state[r] == -1 && qp.slack(static_cast<Eigen::Index>(r)) <= search.zero_tol());
    return met;
  };
  // Node solution satisfies every count: make its zero-slack rows hard and
  // offer the re-solved point as an incumbent.
  auto offer = [&](std::vector<std::int8_t> state, const QpOutcome& qp) {
    bool changed = false;
    for (const auto& t : targets)
      for (auto r : t.rows)
        if (state[r] == -1 && qp.slack(static_cast<Eigen::Index>(r)) <= search.zero_tol()) state[r] = 1, changed = true;
    QpOutcome fixed = changed ? search.solve(state) : qp;
    if (!fixed.feasible) return;
    for (std::size_t i = 0; i < state.size(); ++i)
      if (state[i] != 1 && fixed.slack(static_cast<Eigen::Index>(i)) > search.big_m()) {
        cert.big_m_valid = false;
        return;
      }
    if (!best || fixed.objective < best->qp.objective) best = Candidate{std::move(fixed), std::move(state)};
  };
  auto deficient = [&](const std::vector<std::int8_t>& state, const QpOutcome& qp) -> const ClassTarget* {
    for (const auto& t : targets)
      if (count_met(t, state, qp) < t.required) return &t;
    return nullptr;
  };

  std::vector<std::int8_t> root(static_cast<std::size_t>(train.rows()), 0);
  for (const auto& t : targets)
    for (auto r : t.rows) root[r] = -1;
  if (!propagate(root, targets)) fail(ErrorKind::infeasible, "train_csvm: performance targets exceed class sizes");
  const QpOutcome root_qp = search.solve(root);

  // Greedy incumbent: repeatedly harden the smallest-slack rows of a deficient class.
  if (root_qp.feasible) {
    auto state = root;
    QpOutcome qp = root_qp;
    while (qp.feasible) {
      const ClassTarget* t = deficient(state, qp);
      if (!t) {
        offer(state, qp);
        break;
      }
      std::vector<std::size_t> open;
      for (auto r : t->rows)
        if (state[r] == -1 && qp.slack(static_cast<Eigen::Index>(r)) > search.zero_tol()) open.push_back(r);
      std::sort(open.begin(), open.end(), [&](auto a, auto b) {
        return qp.slack(static_cast<Eigen::Index>(a)) < qp.slack(static_cast<Eigen::Index>(b));
      });
      const std::size_t need = t->required - count_met(*t, state, qp);
      if (open.size() < need) break;
      for (std::size_t q = 0; q < need; ++q) state[open[q]] = 1;
      qp = search.solve(state);
      if (elapsed() > spec.time_limit) break;
    }
  }

  bool timed_out = false;
  double frontier = root_qp.bound;
  if (exact && root_qp.feasible) {
    struct Solved {
      QpOutcome qp;
      std::vector<bool> hard;
    };
    struct Node {
      double bound;
      std::vector<std::int8_t> state;
      std::shared_ptr<const Solved> solved;  // parent's solution, reused while the hard set is unchanged
    };
    auto hard_set = [](const std::vector<std::int8_t>& state) {
      std::vector<bool> h(state.size());
      for (std::size_t i = 0; i < state.size(); ++i) h[i] = state[i] == 1;
      return h;
    };
    auto worse = [](const Node& a, const Node& b) { return a.bound > b.bound; };
    std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
    open.push({root_qp.bound, root, std::make_shared<const Solved>(Solved{root_qp, hard_set(root)})});
    auto prunable = [&](double bound) {
      return best && bound >= best->qp.objective - 1e-9 * std::max(1.0, std::abs(best->qp.objective));
    };
    while (!open.empty()) {
      if (elapsed() > spec.time_limit) {
        timed_out = true;
        frontier = open.top().bound;
        break;
      }
      Node node = open.top();
      open.pop();
      if (prunable(node.bound)) continue;
      ++cert.nodes;
      if (!propagate(node.state, targets)) continue;
      auto hard = hard_set(node.state);
      auto solved = node.solved;
      if (!solved || solved->hard != hard)
        solved = std::make_shared<const Solved>(Solved{search.solve(node.state), std::move(hard)});
      const QpOutcome& qp = solved->qp;
      if (!qp.feasible || prunable(qp.bound)) continue;
      const ClassTarget* t = deficient(node.state, qp);
      if (!t) {
        offer(node.state, qp);
        continue;
      }
      // Branch on the open row of the deficient class closest to its margin.
      std::size_t pick = node.state.size();
      double smallest = std::numeric_limits<double>::infinity();
      for (auto r : t->rows) {
        const double s = qp.slack(static_cast<Eigen::Index>(r));
        if (node.state[r] == -1 && s > search.zero_tol() && s < smallest) smallest = s, pick = r;
      }
      if (pick == node.state.size()) continue;
      const double bound = std::max(node.bound, qp.bound);
      Node one{bound, node.state, nullptr};
      one.state[pick] = 1;
      Node zero{bound, std::move(node.state), solved};
      zero.state[pick] = 0;
      open.push(std::move(one));
      open.push(std::move(zero));
    }
  }

  cert.wall_seconds = elapsed();
  if (!best) {
    if (timed_out) fail(ErrorKind::time_limit, "train_csvm: time limit reached without a feasible solution");
    fail(ErrorKind::infeasible, cert.big_m_valid ? "train_csvm: performance targets are infeasible"
                                                 : "train_csvm: no solution with slack within M; M is too small");
  }

  CsvmResult result;
  result.model = std::move(best->qp.model);
  result.model.C = spec.C;
  result.slack = std::move(best->qp.slack);
  result.zeta.resize(best->state.size());
  for (std::size_t i = 0; i < best->state.size(); ++i) result.zeta[i] = best->state[i] == 1;
  for (const auto& t : targets) {
    std::size_t met = 0;
    for (auto r : t.rows) met += result.zeta[r];
    (t.label == 1 ? cert.positives_required : cert.negatives_required) = t.required;
    (t.label == 1 ? cert.positives_met : cert.negatives_met) = met;
  }
  cert.objective = best->qp.objective;
  // A completed search proves the incumbent optimal.
  if (!exact) cert.bound = std::min(root_qp.bound, cert.objective);
  else if (timed_out) cert.bound = std::min(frontier, cert.objective);
  else cert.bound = cert.objective;
  cert.gap = (cert.objective - cert.bound) / std::max(1.0, std::abs(cert.objective));
  cert.status = !exact ? "heuristic" : timed_out ? "time_limit" : "optimal";
  cert.feasible = true;
  result.certificate = cert;
  return result;
}

BaseLearner csvm_learner(const std::vector<PerformanceTarget>& targets, double big_m, double time_limit,
                         std::size_t exact_limit) {
  return [=](const Dataset& sample, const GridPoint& theta) {
    require(theta.kernel.kind == KernelKind::linear, "csvm: only the linear kernel is supported");
    CsvmSpec spec;
    spec.C = 2 * theta.C;
    spec.big_m = big_m;
    spec.targets = targets;
    spec.time_limit = time_limit;
    spec.exact_limit = exact_limit;
    spec.tolerance = 1e-6;
    auto result = train_csvm(sample, spec);
    result.model.C = theta.C;
    return ReplicateFit{std::move(result.model), std::move(result.certificate)};
  };
}

EnsembleBank train_cebb2_ensemble(const Dataset& train, const ParameterGrid& grid, std::size_t B,
                                  const std::vector<PerformanceTarget>& targets, std::uint64_t master_seed,
                                  Metric metric, const EnsembleOptions& options, double big_m, double time_limit) {
  EnsembleOptions opts = options;
  opts.learner_name = "csvm";
  opts.learner_settings = describe_targets(targets);
  return train_ensemble(train, grid, B, metric, master_seed, csvm_learner(targets, big_m, time_limit), opts);
}

std::string describe_targets(const std::vector<PerformanceTarget>& targets) {
  std::string out;
  for (const auto& t : targets) {
    if (!out.empty()) out += ';';
    out += std::string(to_string(t.measure)) + ">=" + format_double(t.level);
  }
  return out;
}

std::vector<PerformanceTarget> parse_targets(const std::string& text) {
  std::vector<PerformanceTarget> out;
  if (trim(text).empty()) return out;
  for (const auto& part : split(text, ';')) {
    const auto at = part.find(">=");
    if (at == std::string::npos) fail(ErrorKind::format, "performance target '" + part + "' lacks '>='");
    PerformanceTarget t{parse_metric(trim(part.substr(0, at))), parse_double(trim(part.substr(at + 2)))};
    require(t.measure == Metric::tpr || t.measure == Metric::tnr, "performance targets must be tpr or tnr");
    out.push_back(t);
  }
  return out;
}

void CsvmCertificate::save(std::ostream& out) const {
  KeyValueFile kv;
  kv.set("format", "ebbsvm-csvm-certificate 1");
  kv.set("mode", mode);
  kv.set("status", status);
  kv.set("objective", format_hex(objective));
  kv.set("bound", format_hex(bound));
  kv.set("gap", format_hex(gap));
  kv.set("nodes", std::to_string(nodes));
  kv.set("wall_seconds", format_double(wall_seconds));
  kv.set("feasible", feasible ? "true" : "false");
  kv.set("big_m_valid", big_m_valid ? "true" : "false");
  kv.set("positives_required", std::to_string(positives_required));
  kv.set("positives_met", std::to_string(positives_met));
  kv.set("negatives_required", std::to_string(negatives_required));
  kv.set("negatives_met", std::to_string(negatives_met));
  kv.write(out);
}

CsvmCertificate CsvmCertificate::load(std::istream& in, const std::string& origin) {
  const auto kv = KeyValueFile::parse(in, origin);
  if (kv.get_or("format", "") != "ebbsvm-csvm-certificate 1") fail(ErrorKind::format, origin + ": not a certificate");
  CsvmCertificate c;
  c.mode = kv.get("mode");
  c.status = kv.get("status");
  c.objective = kv.get_double("objective");
  c.bound = kv.get_double("bound");
  c.gap = kv.get_double("gap");
  c.nodes = kv.get_u64("nodes");
  c.wall_seconds = kv.get_double("wall_seconds");
  c.feasible = parse_bool(kv.get("feasible"));
  c.big_m_valid = parse_bool(kv.get("big_m_valid"));
  c.positives_required = kv.get_u64("positives_required");
  c.positives_met = kv.get_u64("positives_met");
  c.negatives_required = kv.get_u64("negatives_required");
  c.negatives_met = kv.get_u64("negatives_met");
  return c;
}

}  // namespace ebbsvm
