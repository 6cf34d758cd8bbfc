#include <doctest.h>

#include <cmath>
#include <numeric>

#include <ebbsvm/bank_io.hpp>
#include <ebbsvm/ensemble.hpp>
#include <ebbsvm/experiment.hpp>

#include "support.hpp"

using namespace ebbsvm;

namespace {

/// Bank whose replicate (t, b) scores every input as intercepts[t][b].
EnsembleBank constant_bank(const std::vector<std::vector<double>>& intercepts) {
  EnsembleBank bank;
  bank.dimension = 1;
  std::vector<double> costs;
  for (std::size_t t = 0; t < intercepts.size(); ++t) costs.push_back(std::ldexp(1.0, static_cast<int>(t)));
  bank.grid = ParameterGrid::from_costs(costs);
  bank.replicates = intercepts.front().size();
  for (const auto& row : intercepts) {
    std::vector<Replicate> reps;
    for (double b : row) {
      Replicate r;
      r.model.weights = Eigen::VectorXd::Zero(1);
      r.model.intercept = b;
      reps.push_back(r);
    }
    bank.models.push_back(reps);
  }
  return bank;
}

void set_oob(EnsembleBank& bank, std::size_t t, const std::vector<double>& perf) {
  for (std::size_t b = 0; b < perf.size(); ++b) bank.models[t][b].oob_performance = perf[b];
}

const Eigen::VectorXd origin = Eigen::VectorXd::Zero(1);

}  // namespace

TEST_CASE("mean performance averages replicate scores") {
  auto bank = constant_bank({{0, 0}, {0, 0, 0, 0}, {0, 0}});
  set_oob(bank, 0, {0.8, 0.6});
  set_oob(bank, 1, {0.9, 0.8, 0.7, 0.6});
  set_oob(bank, 2, {1, 1});
  const auto means = mean_performance(bank);
  CHECK(means[0] == doctest::Approx(0.7));
  CHECK(means[1] == doctest::Approx(0.75));
  CHECK(means[2] == 1.0);
}

TEST_CASE("replicates without an OOB value do not enter the mean") {
  auto bank = constant_bank({{0, 0, 0}, {0}});
  set_oob(bank, 0, {0.8, 0.6});
  const auto means = mean_performance(bank);
  CHECK(means[0] == doctest::Approx(0.7));
  CHECK(std::isnan(means[1]));
}

TEST_CASE("reliability weights") {
  SUBCASE("single theta") {
    const std::vector<double> m{0.4};
    const auto w = reliability_weights(m, 0.0);
    CHECK(w.rho == std::vector<double>{1.0});
  }
  SUBCASE("both retained") {
    const std::vector<double> m{0.8, 0.7};
    const auto w = reliability_weights(m, 0.2);
    CHECK(w.retained == std::vector<std::size_t>{0, 1});
    CHECK(w.rho[0] == doctest::Approx(8.0 / 15));
    CHECK(w.rho[1] == doctest::Approx(7.0 / 15));
  }
  SUBCASE("narrow epsilon") {
    const std::vector<double> m{0.8, 0.7};
    const auto w = reliability_weights(m, 0.05);
    CHECK(w.retained == std::vector<std::size_t>{0});
    CHECK(w.rho == std::vector<double>{1.0, 0.0});
  }
  SUBCASE("NaN never qualifies") {
    const std::vector<double> m{std::nan(""), 0.5, 0.5};
    const auto w = reliability_weights(m, 1.0);
    CHECK(w.retained == std::vector<std::size_t>{1, 2});
  }
  SUBCASE("epsilon zero equals the argmax weights") {
    const std::vector<double> m{0.6, 0.9, 0.9, 0.3};
    const auto a = reliability_weights(m, 0.0);
    const auto b = best_theta_weights(m);
    CHECK(a.retained == b.retained);
    CHECK(a.rho == b.rho);
  }
  CHECK_THROWS_AS(reliability_weights(std::vector<double>{0.5}, -1.0), Error);
}

TEST_CASE("weights sum to one over random means") {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> m(1 + rng.uniform_index(11));
    for (auto& v : m) v = rng.uniform01();
    const auto w = reliability_weights(m, rng.uniform01() * 0.3);
    CHECK(std::abs(std::accumulate(w.rho.begin(), w.rho.end(), 0.0) - 1) <= 1e-12);
    CHECK_FALSE(w.retained.empty());
    for (double r : w.rho) CHECK(r >= 0);
  }
}

TEST_CASE("per-theta probability counts scores at or above the threshold") {
  const auto bank = constant_bank({{1, -1, 2, -3}, {1, 1, 1, 1}});
  CHECK(per_theta_probability(bank, 0, origin) == 0.5);
  CHECK(per_theta_probability(bank, 0, origin, -2) == 0.75);
  CHECK(per_theta_probability(bank, 1, origin) == 1.0);
  CHECK(per_theta_probability(constant_bank({{0}}), 0, origin) == 1.0);
}

TEST_CASE("ensemble probability is the weighted sum over J") {
  ReliabilityWeights w;
  w.retained = {0, 1};
  SUBCASE("symmetric") {
    w.rho = {0.5, 0.5};
    const auto bank = constant_bank({{1, -1, -1, -1, -1}, {1, 1, 1, 1, -1}});
    CHECK(ensemble_probability(bank, w, origin) == doctest::Approx(0.5));
  }
  SUBCASE("weighted") {
    w.rho = {8.0 / 15, 7.0 / 15};
    std::vector<double> a(20, -1), b(20, -1);
    std::fill(a.begin(), a.begin() + 15, 1.0);
    std::fill(b.begin(), b.begin() + 6, 1.0);
    CHECK(ensemble_probability(constant_bank({a, b}), w, origin) == doctest::Approx(0.54).epsilon(1e-12));
  }
  SUBCASE("singleton") {
    ReliabilityWeights one;
    one.retained = {0};
    one.rho = {1.0};
    std::vector<double> s(50, -1);
    std::fill(s.begin(), s.begin() + 31, 1.0);
    CHECK(ensemble_probability(constant_bank({s}), one, origin) == 0.62);
  }
}

TEST_CASE("failed replicates are excluded from the vote") {
  auto bank = constant_bank({{1, -1, -1, 5}});
  bank.models[0][3].failed = true;
  CHECK(per_theta_probability(bank, 0, origin) == doctest::Approx(1.0 / 3));
  CHECK(score_matrix(bank, 0, origin.transpose()).cols() == 3);
}

TEST_CASE("train_ensemble on a tiny separable set") {
  const auto d = testing::blobs(12, 2, 3.0, 1);
  const auto grid = ParameterGrid::from_costs(std::vector<double>{1.0});
  const auto bank = train_ensemble(d, grid, 1, Metric::accuracy, 5);
  REQUIRE(bank.models.size() == 1);
  REQUIRE(bank.models[0].size() == 1);
  const auto& rep = bank.models[0][0];
  CHECK_FALSE(rep.failed);
  CHECK(rep.seed == derive_seed(5, {0, 0, rep.attempts - 1}));
  const auto draw = bootstrap_sample(d, rep.seed);
  CHECK(rep.out_of_bag == draw.out_of_bag);
  if (rep.oob_performance) {
    const auto oob = d.subset(rep.out_of_bag);
    CHECK(*rep.oob_performance == performance(scores(rep.model, oob.x), oob.y, Metric::accuracy));
  }
}

TEST_CASE("train_ensemble is deterministic and thread-count independent") {
  const auto d = testing::blobs(60, 3, 0.6, 2);
  const auto grid = ParameterGrid::powers_of_two(-2, 2);
  EnsembleOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const auto a = train_ensemble(d, grid, 7, Metric::accuracy, 99, svm_learner(), one);
  const auto b = train_ensemble(d, grid, 7, Metric::accuracy, 99, svm_learner(), many);
  CHECK(a.models.size() * a.models[0].size() == 35);
  for (std::size_t t = 0; t < grid.size(); ++t)
    for (std::size_t r = 0; r < 7; ++r) {
      CHECK(a.models[t][r].oob_performance == b.models[t][r].oob_performance);
      CHECK(a.models[t][r].model.weights == b.models[t][r].model.weights);
    }
}

TEST_CASE("OOB performance is measured on rows outside the bootstrap sample") {
  const auto d = testing::blobs(40, 2, 0.8, 6);
  const auto bank = train_ensemble(d, ParameterGrid::powers_of_two(0, 1), 5, Metric::accuracy, 4);
  for (const auto& row : bank.models)
    for (const auto& rep : row) {
      const auto draw = bootstrap_sample(d, rep.seed);
      for (auto o : rep.out_of_bag)
        CHECK(std::find(draw.in_bag.begin(), draw.in_bag.end(), o) == draw.in_bag.end());
    }
}

TEST_CASE("single-class draws are retried with fresh seeds") {
  // One positive among 30 rows: most draws miss it.
  auto d = testing::blobs(30, 2, 1.0, 3);
  for (Eigen::Index i = 1; i < d.rows(); ++i) d.y(i) = -1;
  d.y(0) = 1;
  EnsembleOptions options;
  options.max_retries = 40;
  const auto bank = train_ensemble(d, ParameterGrid::from_costs(std::vector<double>{1.0}), 8, Metric::accuracy, 1,
                                   svm_learner(), options);
  bool retried = false;
  for (const auto& rep : bank.models[0]) retried |= rep.attempts > 1;
  CHECK(retried);
}

TEST_CASE("a theta whose replicates all fail is an error") {
  auto d = testing::blobs(30, 2, 1.0, 3);
  for (Eigen::Index i = 1; i < d.rows(); ++i) d.y(i) = -1;
  d.y(0) = 1;
  EnsembleOptions options;
  options.max_retries = 0;
  try {
    train_ensemble(d, ParameterGrid::from_costs(std::vector<double>{1.0}), 1, Metric::accuracy, 2, svm_learner(),
                   options);
    // The single draw may include row 0; then nothing fails.
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::training_failed);
  }
}

TEST_CASE("replicate standardization folds back into the original coordinates") {
  auto d = testing::blobs(50, 2, 0.7, 10);
  d.x.col(1) = d.x.col(1) * 100.0 + Eigen::VectorXd::Constant(50, 7.0);
  const auto grid = ParameterGrid::from_costs(std::vector<double>{1.0});
  const auto bank = train_ensemble(d, grid, 1, Metric::accuracy, 3);
  const auto& rep = bank.models[0][0];
  const auto draw = bootstrap_sample(d, rep.seed);
  auto sample = d.subset(draw.in_bag);
  const auto s = column_scaling(d, draw.in_bag);
  sample.x = (sample.x.rowwise() - s.mean.transpose()).array().rowwise() / s.scale.transpose().array();
  const auto direct = train_svm(sample, 1.0);
  const Eigen::VectorXd z = (d.x.row(5).transpose() - s.mean).cwiseQuotient(s.scale);
  CHECK(score(rep.model, d.x.row(5).transpose()) == doctest::Approx(score(direct, z)).epsilon(1e-9));
}

TEST_CASE("bank round-trips through its directory form") {
  const auto d = testing::blobs(30, 2, 0.8, 7);
  const auto bank = train_ensemble(d, ParameterGrid::powers_of_two(-1, 1), 4, Metric::gmean, 12);
  const auto dir = testing::scratch_dir("bank");
  save_bank(bank, dir);
  const auto back = load_bank(dir);
  CHECK(back.metric == Metric::gmean);
  CHECK(back.training_ids == bank.training_ids);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t b = 0; b < 4; ++b) {
      CHECK(back.models[t][b].model.weights == bank.models[t][b].model.weights);
      CHECK(back.models[t][b].out_of_bag == bank.models[t][b].out_of_bag);
      CHECK(back.models[t][b].oob_performance == bank.models[t][b].oob_performance);
    }
  CHECK(mean_performance(back) == mean_performance(bank));
  std::filesystem::remove(dir / "bank.manifest");
  CHECK_THROWS_AS(load_bank(dir), Error);
}

TEST_CASE("score distribution export") {
  const auto bank = constant_bank({{0.5, -0.1, 1.2}});
  const auto data = Dataset::from_matrix(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
  const auto dist = export_score_distribution(bank, 0, data, 0);
  CHECK(dist.score == std::vector<double>{0.5, -0.1, 1.2});
  CHECK(dist.proportion == doctest::Approx(2.0 / 3));
  std::ostringstream out;
  write_score_distribution(dist, out);
  const auto text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK_THROWS_AS(export_score_distribution(bank, 0, data, 3), Error);
}

TEST_CASE("exported proportions equal the per-theta probability") {
  const auto d = testing::blobs(40, 3, 0.4, 21);
  const auto bank = train_ensemble(d, ParameterGrid::powers_of_two(-1, 1), 9, Metric::accuracy, 8);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < 40; i += 7) {
      const auto dist = export_score_distribution(bank, t, d, d.ids[i]);
      CHECK(std::abs(dist.proportion - per_theta_probability(bank, t, d.x.row(static_cast<Eigen::Index>(i)).transpose())) <= 1e-12);
      std::vector<double> shifts;
      for (int k = -20; k <= 20; ++k) shifts.push_back(0.25 * k);
      const auto sweep = threshold_sweep(dist, shifts);
      for (std::size_t k = 1; k < sweep.size(); ++k) CHECK(sweep[k].second <= sweep[k - 1].second);
      for (const auto& [thr, frac] : sweep) {
        const auto hits = std::count_if(dist.score.begin(), dist.score.end(), [&](double s) { return s >= thr; });
        CHECK(frac == static_cast<double>(hits) / static_cast<double>(dist.score.size()));
      }
    }
}
