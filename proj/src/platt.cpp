#include <ebbsvm/platt.hpp>

#include <optional>

#include <ebbsvm/parallel.hpp>
#include <ebbsvm/random.hpp>

namespace ebbsvm {

namespace {

bool two_classes(const RawTable& t) { return t.count_label(1) > 0 && t.count_label(-1) > 0; }

std::vector<std::size_t> complement(std::size_t m, const std::vector<std::size_t>& fold) {
  std::vector<char> in(m, 0);
  for (auto i : fold) in[i] = 1;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < m; ++i)
    if (!in[i]) rest.push_back(i);
  return rest;
}

struct FoldOutcome {
  std::vector<std::size_t> ids;
  Eigen::VectorXd labels;
  Eigen::VectorXd probabilities;
  std::optional<std::string> note;
};

FoldOutcome run_outer_fold(const RawTable& data, const ParameterGrid& grid, const CvPlan& plan,
                           const PreprocessPolicy& policy, const std::vector<std::size_t>& test_rows, std::size_t f) {
  FoldOutcome out;
  const RawTable outer_train = data.subset(complement(data.size(), test_rows));
  const RawTable outer_test = data.subset(test_rows);
  if (!two_classes(outer_train)) {
    out.note = "fold " + std::to_string(f) + " skipped: training part holds a single class";
    return out;
  }
  SolverOptions solver;
  solver.tolerance = plan.tolerance;

  // Inner CV: held-out scores per theta, pooled over inner folds.
  const std::size_t k = std::min(plan.inner_folds, outer_train.size());
  const auto inner = kfold_partition(outer_train.size(), k, derive_seed(plan.seed, {1, f}));
  std::vector<std::vector<double>> pooled(grid.size());
  std::vector<double> pooled_labels;
  std::vector<std::size_t> correct(grid.size(), 0);
  for (const auto& held : inner) {
    const RawTable in_train = outer_train.subset(complement(outer_train.size(), held));
    if (!two_classes(in_train)) continue;
    const auto [tr, te] = preprocess(in_train, outer_train.subset(held), policy);
    for (Eigen::Index i = 0; i < te.rows(); ++i) pooled_labels.push_back(te.y(i));
    for (std::size_t t = 0; t < grid.size(); ++t) {
      const auto model = train_svm<double>(tr.x, tr.y, grid[t].C, grid[t].kernel, solver);
      const Eigen::VectorXd s = scores(model, te.x);
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        pooled[t].push_back(s(i));
        correct[t] += label_of(s(i)) == (te.y(i) > 0 ? 1 : -1);
      }
    }
  }
  if (pooled_labels.empty()) {
    out.note = "fold " + std::to_string(f) + " skipped: no inner fold had both classes";
    return out;
  }
  std::size_t best = 0;
  for (std::size_t t = 1; t < grid.size(); ++t)
    if (correct[t] > correct[best]) best = t;

  const Eigen::VectorXd ps = Eigen::Map<const Eigen::VectorXd>(pooled[best].data(), static_cast<Eigen::Index>(pooled[best].size()));
  const Eigen::VectorXd pl = Eigen::Map<const Eigen::VectorXd>(pooled_labels.data(), static_cast<Eigen::Index>(pooled_labels.size()));
  PlattSigmoid<double> sigmoid;
  try {
    sigmoid = fit_platt<double>(ps, pl);
  } catch (const Error& e) {
    out.note = "fold " + std::to_string(f) + " skipped: " + e.message();
    return out;
  }

  const auto [tr, te] = preprocess(outer_train, outer_test, policy);
  const auto model = train_svm<double>(tr.x, tr.y, grid[best].C, grid[best].kernel, solver);
  const Eigen::VectorXd s = scores(model, te.x);
  out.ids = te.ids;
  out.labels = te.y;
  out.probabilities.resize(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) out.probabilities(i) = platt_probability(sigmoid, s(i));
  return out;
}

}  // namespace

ProbabilityReport run_kfold_platt(const RawTable& data, const ParameterGrid& grid, const CvPlan& plan,
                                  const PreprocessPolicy& policy, const std::string& dataset_name) {
  grid.validate();
  require(data.labeled(), "run_kfold_platt: dataset must be labeled");
  require(plan.outer_folds >= 2 && plan.inner_folds >= 2, "run_kfold_platt: need at least 2 folds");
  const auto outer = kfold_partition(data.size(), plan.outer_folds, derive_seed(plan.seed, {0}));
  std::vector<FoldOutcome> folds(outer.size());
  parallel_for(outer.size(), plan.threads, [&](std::size_t f) {
    try {
      folds[f] = run_outer_fold(data, grid, plan, policy, outer[f], f);
    } catch (const Error& e) {
      throw e.with_context("fold=" + std::to_string(f));
    }
  });

  ProbabilityReport report;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].note) report.notes.push_back(*folds[f].note);
    auto part = make_report(dataset_name, "platt", std::nullopt, plan.seed, folds[f].ids, folds[f].labels,
                            folds[f].probabilities);
    for (auto& row : part.rows) {
      row.fold = static_cast<int>(f);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace ebbsvm
