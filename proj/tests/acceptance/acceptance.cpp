// Acceptance run: one PASS/FAIL line per criterion, detail lines start with '#'.
//
//   acceptance [--only=1,3,...] [--strict]
//
// Exits 0 once every selected criterion has been evaluated, whatever the
// verdicts; --strict exits 1 when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <ebbsvm/cost_sensitive.hpp>
#include <ebbsvm/experiment.hpp>
#include <ebbsvm/platt.hpp>
#include <ebbsvm/report.hpp>

#include "support.hpp"

using namespace ebbsvm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string summary;
};

void detail(const std::string& line) { std::cout << "# " << line << '\n' << std::flush; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- criterion 1 -----------------------------------------------------------

Verdict solver_oracle() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(20240601, {1}));
  double worst_gap = 0, worst_kkt = 0;
  int solves = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto m = 2 + static_cast<Eigen::Index>(rng.uniform_index(7));
    const auto n = 2 + static_cast<Eigen::Index>(rng.uniform_index(2));
    Eigen::MatrixXd x(m, n);
    Eigen::VectorXd y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      y(i) = i == 0 ? 1 : (i == 1 ? -1 : (rng.uniform01() < 0.5 ? 1 : -1));
      for (Eigen::Index j = 0; j < n; ++j) x(i, j) = rng.normal() + 0.5 * y(i);
    }
    for (double C : {0.5, 1.0, 4.0}) {
      SolverOptions options;
      options.tolerance = 1e-6;
      const auto model = train_svm<double>(x, y, C, KernelSpec::linear(), options);
      worst_gap = std::max(worst_gap, std::abs(model.diagnostics.dual_objective - testing::dual_oracle(x, y, C)));
      worst_kkt = std::max(worst_kkt, model.diagnostics.kkt_violation);
      ++solves;
    }
  }
  const double elapsed = seconds_since(t0);
  Verdict v;
  v.pass = worst_gap <= 1e-6 && worst_kkt <= 1e-3 && elapsed < 60;
  v.summary = std::to_string(solves) + " solves, max |dual - oracle| " + fmt("%.2e", worst_gap) + ", max KKT " +
              fmt("%.2e", worst_kkt) + ", " + fmt("%.1f", elapsed) + " s";
  return v;
}

// ---- criteria 2, 4 and part of 7 --------------------------------------------

constexpr double kTolerance2 = 0.05;

struct DatasetRow {
  std::string name;
  double reference_mse;
};

const std::vector<DatasetRow> kReproduction{
    {"wisconsin", 0.018}, {"banknote", 0.011}, {"german", 0.203}, {"housing", 0.078}};

const std::vector<double> kTargets{0.0, 0.5, 0.7, 0.9, 1.0};

struct AlgebraTally {
  std::size_t runs = 0;
  std::size_t rows = 0;
  double worst_complement = 0;
  double worst_rho = 0;
  double worst_decomposition = 0;
  double worst_convex = 0;
  std::size_t violations = 0;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void check_decomposition(const ProbabilityReport& report, AlgebraTally& tally) {
  const auto s = summarize(report);
  double all = 0, pos = 0, neg = 0;
  std::size_t np = 0;
  for (const auto& r : report.rows) {
    const double e = (r.label - r.probability) * (r.label - r.probability);
    all += e;
    if (r.label == 1) pos += e, ++np;
    else neg += e;
  }
  const double n = static_cast<double>(report.rows.size());
  const double wp = static_cast<double>(np) / n;
  // Recomputation from rows and the class-conditional identity.
  double err = std::abs(s.all - all / n);
  if (np > 0 && np < report.rows.size())
    err = std::max(err, std::abs(s.all - (wp * pos / static_cast<double>(np) +
                                          (1 - wp) * neg / (n - static_cast<double>(np)))));
  tally.worst_decomposition = std::max(tally.worst_decomposition, err);
  if (err > 1e-12) ++tally.violations;
}

/// Complement, weight and convex-combination checks for one probability vector.
void check_probabilities(const EnsembleBank& bank, const ReliabilityWeights& w, const Eigen::MatrixXd& x,
                         const Eigen::VectorXd& p, std::span<const double> thresholds, AlgebraTally& tally) {
  ++tally.runs;
  const double rho_sum = std::accumulate(w.rho.begin(), w.rho.end(), 0.0);
  tally.worst_rho = std::max(tally.worst_rho, std::abs(rho_sum - 1));
  if (std::abs(rho_sum - 1) > 1e-12) ++tally.violations;
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(x.rows(), 1.0), hi = Eigen::VectorXd::Zero(x.rows());
  for (auto j : w.retained) {
    const Eigen::MatrixXd s = score_matrix(bank, j, x);
    const double t = thresholds.empty() ? 0.0 : thresholds[j];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double q = positive_fraction(s.row(i), t);
      lo(i) = std::min(lo(i), q);
      hi(i) = std::max(hi(i), q);
    }
  }
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    ++tally.rows;
    const double complement = std::abs(p(i) + (1 - p(i)) - 1);
    const double outside = std::max({0.0, lo(i) - p(i), p(i) - hi(i), -p(i), p(i) - 1});
    tally.worst_complement = std::max(tally.worst_complement, complement);
    tally.worst_convex = std::max(tally.worst_convex, outside);
    if (complement > 1e-12 || outside > 1e-12) ++tally.violations;
  }
}

struct ReproductionOutcome {
  Verdict reproduction;
  Verdict monotone;
};

ReproductionOutcome reproduction(AlgebraTally& tally) {
  const auto t0 = Clock::now();
  ReproductionOutcome out;
  std::vector<std::string> missing, outside, not_monotone;

  for (const auto& ds : kReproduction) {
    const fs::path manifest = fs::path(EBBSVM_DATA_DIR) / (ds.name + ".manifest");
    if (!fs::exists(manifest)) {
      detail(ds.name + ": data file not available (" + manifest.string() + ")");
      missing.push_back(ds.name);
      continue;
    }
    const auto td = Clock::now();
    ExperimentConfig config;
    config.dataset = manifest;
    config.method = Method::cebb1;
    config.set("preset", "desk");
    config.target_tpr = kTargets;
    config.seeds = {1, 2, 3, 4, 5};
    config.validate();
    const auto result = run_experiment(config);

    std::vector<double> ebb_mse;
    std::vector<std::vector<double>> pos_mse(kTargets.size()), neg_mse(kTargets.size());
    bool monotone = true, lambda0_equal = true;
    for (const auto& run : result.runs) {
      const auto& bank = run.banks.front();
      const auto& w = run.weights.front();
      const auto& v = run.split->validation;
      const Eigen::VectorXd p = ensemble_probabilities(bank, w, v.x);
      check_probabilities(bank, w, v.x, p, {}, tally);
      const auto ebb = make_report(result.dataset_name, "ebb", std::nullopt, run.seed, v.ids, v.y, p);
      check_decomposition(ebb, tally);
      ebb_mse.push_back(mse(ebb));

      std::optional<double> prev_pos, prev_neg;
      for (std::size_t k = 0; k < kTargets.size(); ++k) {
        const auto& rep = run.reports[k];
        check_decomposition(rep, tally);
        Eigen::VectorXd q(static_cast<Eigen::Index>(rep.rows.size()));
        for (std::size_t i = 0; i < rep.rows.size(); ++i) q(static_cast<Eigen::Index>(i)) = rep.rows[i].probability;
        check_probabilities(bank, w, v.x, q, run.calibrations[k].thresholds, tally);
        if (kTargets[k] == 0.0 && q != p) lambda0_equal = false;
        const double mp = mse(rep, ClassFilter::positives), mn = mse(rep, ClassFilter::negatives);
        pos_mse[k].push_back(mp);
        neg_mse[k].push_back(mn);
        if (prev_pos && (mp > *prev_pos || mn < *prev_neg)) monotone = false;
        prev_pos = mp;
        prev_neg = mn;
      }
    }
    const double med = median(ebb_mse);
    std::ostringstream seeds;
    for (double m : ebb_mse) seeds << ' ' << fmt("%.4f", m);
    detail(ds.name + ": EBB MSE per seed" + seeds.str() + "; median " + fmt("%.4f", med) + " vs " +
           fmt("%.3f", ds.reference_mse) + " (" + fmt("%.0f", seconds_since(td)) + " s)");
    std::ostringstream table;
    for (std::size_t k = 0; k < kTargets.size(); ++k)
      table << ' ' << fmt("%.1f", kTargets[k]) << ':' << fmt("%.4f", median(pos_mse[k])) << '/'
            << fmt("%.4f", median(neg_mse[k]));
    detail(ds.name + ": CEBB1 median positive/negative MSE by target" + table.str());
    if (std::abs(med - ds.reference_mse) > kTolerance2) outside.push_back(ds.name);
    if (!monotone || !lambda0_equal)
      not_monotone.push_back(ds.name + (lambda0_equal ? "" : " (target 0 differs from EBB)"));
  }

  const double elapsed = seconds_since(t0);
  const std::size_t evaluated = kReproduction.size() - missing.size();
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s;
  };
  out.reproduction.pass = missing.empty() && outside.empty();
  out.reproduction.summary = std::to_string(evaluated - outside.size()) + " of " +
                             std::to_string(kReproduction.size()) + " datasets within +-0.05 of the reference";
  if (!outside.empty()) out.reproduction.summary += "; outside: " + join(outside);
  if (!missing.empty()) out.reproduction.summary += "; not available: " + join(missing);
  out.reproduction.summary += ", " + fmt("%.0f", elapsed) + " s";

  out.monotone.pass = missing.empty() && not_monotone.empty();
  out.monotone.summary = std::to_string(evaluated - not_monotone.size()) + " of " +
                         std::to_string(kReproduction.size()) + " datasets monotone with target 0 equal to EBB";
  if (!not_monotone.empty()) out.monotone.summary += "; violations: " + join(not_monotone);
  if (!missing.empty()) out.monotone.summary += "; not available: " + join(missing);
  return out;
}

// ---- criterion 3 -----------------------------------------------------------

std::string report_without_method(const ProbabilityReport& report) {
  auto copy = report;
  for (auto& r : copy.rows) r.method.clear();
  std::ostringstream s;
  write_report_csv(copy, s);
  return s.str();
}

Verdict degeneracy(AlgebraTally& tally) {
  const auto t0 = Clock::now();
  const auto root = testing::scratch_dir("acceptance-degeneracy");
  Rng rng(derive_seed(20240601, {3}));
  int identical = 0;
  for (int k = 0; k < 20; ++k) {
    const auto dir = root / ("config-" + std::to_string(k));
    fs::create_directories(dir);
    const std::size_t m = 40 + rng.uniform_index(120), n = 2 + rng.uniform_index(5);
    const auto manifest = testing::write_blob_manifest(dir, m, n, 0.1 + 0.6 * rng.uniform01(), rng.next());
    ExperimentConfig config;
    config.dataset = manifest;
    config.replicates = 5 + rng.uniform_index(20);
    const int lo = -3 + static_cast<int>(rng.uniform_index(3));
    config.grid = ParameterGrid::powers_of_two(lo, lo + 1 + static_cast<int>(rng.uniform_index(4)));
    config.metric = k % 4 == 3 ? Metric::gmean : Metric::accuracy;
    config.seeds = {rng.next() % 100000, rng.next() % 100000};
    config.validation_fraction = 0.2;

    auto ebb = config;
    ebb.method = Method::ebb;
    ebb.epsilon = 0;
    ebb.validate();
    auto best = config;
    best.method = Method::ebb_best_theta;
    best.validate();
    const auto a = run_experiment(ebb);
    const auto b = run_experiment(best);
    for (const auto& run : a.runs) {
      const auto& v = run.split->validation;
      check_probabilities(run.banks.front(), run.weights.front(), v.x,
                          ensemble_probabilities(run.banks.front(), run.weights.front(), v.x), {}, tally);
    }
    for (const auto& g : group_report(a.combined)) check_decomposition(g, tally);
    identical += report_without_method(a.combined) == report_without_method(b.combined);
  }
  fs::remove_all(root);
  Verdict v;
  v.pass = identical == 20;
  v.summary = std::to_string(identical) + " of 20 configurations bit-identical, " + fmt("%.1f", seconds_since(t0)) + " s";
  return v;
}

// ---- criterion 5 -----------------------------------------------------------

Verdict csvm_exactness() {
  const auto t0 = Clock::now();
  const auto cases = testing::read_csvm_cases(fs::path(EBBSVM_TEST_DATA) / "csvm_oracle_cases.txt");
  double worst = 0, worst_plain = 0;
  int infeasible_counts = 0, not_optimal = 0;
  for (const auto& c : cases) {
    const auto data = Dataset::from_matrix(c.x, c.y);
    CsvmSpec spec;
    spec.C = c.C;
    spec.targets = {{Metric::tpr, c.tpr}};
    const auto r = train_csvm(data, spec);
    worst = std::max(worst, std::abs(r.certificate.objective - c.objective));
    if (r.certificate.status != "optimal") ++not_optimal;
    std::size_t pos = 0, met = 0;
    for (Eigen::Index i = 0; i < c.y.size(); ++i)
      if (c.y(i) > 0) ++pos, met += r.zeta[static_cast<std::size_t>(i)] && r.slack(i) <= 1e-6;
    if (met < static_cast<std::size_t>(std::ceil(c.tpr * static_cast<double>(pos) - 1e-9))) ++infeasible_counts;

    CsvmSpec plain;
    plain.C = c.C;
    const auto unconstrained = train_csvm(data, plain);
    const auto svm = train_svm(data, c.C / 2, KernelSpec::linear(), 1e-9);
    worst_plain = std::max(worst_plain, std::abs(unconstrained.certificate.objective - 2 * svm.diagnostics.primal_objective));
  }
  const double elapsed = seconds_since(t0);
  Verdict v;
  v.pass = cases.size() == 100 && worst <= 1e-6 && worst_plain <= 1e-6 && infeasible_counts == 0 &&
           not_optimal == 0 && elapsed < 300;
  v.summary = std::to_string(cases.size()) + " instances, max |B&B - enumeration| " + fmt("%.2e", worst) +
              ", max |no-target - SVM| " + fmt("%.2e", worst_plain) + ", " + std::to_string(infeasible_counts) +
              " count violations, " + fmt("%.2f", elapsed) + " s";
  return v;
}

// ---- criterion 6 -----------------------------------------------------------

Verdict platt_optimality() {
  Rng rng(derive_seed(20240601, {6}));
  int beaten = 0;
  double worst_fd = 0, worst_b = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto n = 10 + static_cast<Eigen::Index>(rng.uniform_index(90));
    Eigen::VectorXd f(n), y(n);
    const double spread = 0.2 + 3 * rng.uniform01();
    for (Eigen::Index i = 0; i < n; ++i) {
      y(i) = i < 2 ? (i == 0 ? 1 : -1) : (rng.uniform01() < 0.5 ? 1 : -1);
      f(i) = spread * rng.normal() + y(i) * rng.uniform01();
    }
    const auto fit = fit_platt(f, y);
    const double value = platt_objective(f, y, fit.A, fit.B);
    double grid_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 200; ++i)
      for (int j = 0; j <= 200; ++j) grid_min = std::min(grid_min, platt_objective(f, y, -20 + 0.2 * i, -20 + 0.2 * j));
    beaten += value <= grid_min;

    const double a = 4 * rng.normal(), b = 4 * rng.normal(), h = 1e-6;
    const auto g = platt_gradient(f, y, a, b);
    const double ga = (platt_objective(f, y, a + h, b) - platt_objective(f, y, a - h, b)) / (2 * h);
    const double gb = (platt_objective(f, y, a, b + h) - platt_objective(f, y, a, b - h)) / (2 * h);
    worst_fd = std::max({worst_fd, std::abs(g(0) - ga) / std::abs(g(0)), std::abs(g(1) - gb) / std::abs(g(1))});

    Eigen::VectorXd sf(2 * n), sy(2 * n);
    sf << f, -f;
    sy << y, -y;
    worst_b = std::max(worst_b, std::abs(fit_platt(sf, sy).B));
  }
  Verdict v;
  v.pass = beaten == 50 && worst_fd <= 1e-4 && worst_b <= 1e-6;
  v.summary = std::to_string(beaten) + " of 50 fits at or below the grid minimum, max relative gradient error " +
              fmt("%.2e", worst_fd) + ", max |B| on symmetric data " + fmt("%.2e", worst_b);
  return v;
}

// ---- criterion 8 -----------------------------------------------------------

Verdict bootstrap_statistics() {
  double total = 0;
  for (std::uint64_t s = 0; s < 200; ++s)
    total += static_cast<double>(bootstrap_sample(1000, derive_seed(20240601, {8, s})).unique_count()) / 1000.0;
  const double mean = total / 200;
  Verdict v;
  v.pass = mean >= 0.62 && mean <= 0.645;
  v.summary = "mean unique fraction " + fmt("%.4f", mean) + " over 200 samples of size 1000";
  return v;
}

void print(int id, const char* name, const Verdict& v) {
  std::cout << (v.pass ? "PASS" : "FAIL") << ' ' << id << ' ' << name << ": " << v.summary << '\n' << std::flush;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--strict") strict = true;
    else if (arg.rfind("--only=", 0) == 0) {
      for (const auto& part : split(arg.substr(7), ',')) only.insert(std::stoi(part));
    } else {
      std::cerr << "usage: acceptance [--only=1,2,...] [--strict]\n";
      return 2;
    }
  }
  auto selected = [&](int id) { return only.empty() || only.count(id); };

  bool all_pass = true;
  auto record = [&](int id, const char* name, const Verdict& v) {
    print(id, name, v);
    all_pass &= v.pass;
  };
  try {
    AlgebraTally tally;
    if (selected(1)) record(1, "solver-oracle-equivalence", solver_oracle());
    std::optional<ReproductionOutcome> repro;
    if (selected(2) || selected(4) || selected(7)) repro = reproduction(tally);
    if (selected(2)) record(2, "ebb-reproduction", repro->reproduction);
    if (selected(3) || selected(7)) {
      const auto v = degeneracy(tally);
      if (selected(3)) record(3, "degeneracy-identity", v);
    }
    if (selected(4)) record(4, "cebb1-monotone", repro->monotone);
    if (selected(5)) record(5, "csvm-exactness", csvm_exactness());
    if (selected(6)) record(6, "platt-optimality", platt_optimality());
    if (selected(7)) {
      Verdict v;
      v.pass = tally.violations == 0 && tally.runs > 0;
      v.summary = std::to_string(tally.runs) + " probability vectors, " + std::to_string(tally.rows) +
                  " rows; max |sum rho - 1| " + fmt("%.1e", tally.worst_rho) + ", max convex-bound excess " +
                  fmt("%.1e", tally.worst_convex) + ", max decomposition error " +
                  fmt("%.1e", tally.worst_decomposition);
      record(7, "probability-algebra", v);
    }
    if (selected(8)) record(8, "bootstrap-statistics", bootstrap_statistics());
  } catch (const Error& e) {
    std::cerr << "acceptance aborted: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return 3;
  }
  return strict && !all_pass ? 1 : 0;
}
