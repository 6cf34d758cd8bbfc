#pragma once

// Shared generators and brute-force oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <ebbsvm/dataset.hpp>
#include <ebbsvm/random.hpp>

namespace testing {

using ebbsvm::Rng;

/// Two Gaussian blobs centred at +-shift along every axis; both classes present.
inline ebbsvm::Dataset blobs(std::size_t m, std::size_t n, double shift, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(m, n);
  Eigen::VectorXd y(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double label = (i % 2 == 0) ? 1.0 : -1.0;
    y(i) = label;
    for (std::size_t j = 0; j < n; ++j) x(i, j) = rng.normal() + label * shift;
  }
  return ebbsvm::Dataset::from_matrix(std::move(x), std::move(y));
}

/// Euclidean projection onto {a : y'a = 0, 0 <= a <= c} by bisection on the multiplier.
inline Eigen::VectorXd project(const Eigen::VectorXd& v, const Eigen::VectorXd& y, double c) {
  auto at = [&](double nu) { return (v - nu * y).cwiseMax(0.0).cwiseMin(c); };
  auto g = [&](double nu) { return y.dot(at(nu)); };
  double lo = -1.0, hi = 1.0;
  while (g(lo) < 0) lo *= 2;
  while (g(hi) > 0) hi *= 2;
  for (int it = 0; it < 100 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0 ? lo : hi) = mid;
  }
  return at(0.5 * (lo + hi));
}

/// Primal soft-margin objective at w with the best bias, found by scanning the
/// breakpoints of the piecewise-linear hinge sum.
inline double primal_at(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double c, const Eigen::VectorXd& w) {
  const Eigen::VectorXd f = x * w;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    const double b = y(k) - f(k);
    double hinge = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) hinge += std::max(0.0, 1 - y(i) * (f(i) + b));
    best = std::min(best, hinge);
  }
  return 0.5 * w.squaredNorm() + c * best;
}

/// Accelerated projected gradient with adaptive restart on min a'Qa/2 - sum(a),
/// stopped once the duality gap is below 1e-10. Returns the maximized dual
/// value sum(a) - a'Qa/2.
inline double dual_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double c) {
  const Eigen::MatrixXd q = (y * y.transpose()).cwiseProduct(x * x.transpose());
  const double lipschitz = std::max(1e-12, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(q).eigenvalues().maxCoeff());
  const auto m = x.rows();
  auto objective = [&](const Eigen::VectorXd& a) { return 0.5 * a.dot(q * a) - a.sum(); };
  Eigen::VectorXd a = Eigen::VectorXd::Zero(m), z = a;
  double t = 1, f = objective(a);
  for (int it = 0; it < 2000000; ++it) {
    const Eigen::VectorXd next = project(z - (q * z - Eigen::VectorXd::Ones(m)) / lipschitz, y, c);
    const double fn = objective(next);
    if (fn > f && t > 1) {  // restart the momentum
      z = a;
      t = 1;
      continue;
    }
    const double tn = 0.5 * (1 + std::sqrt(1 + 4 * t * t));
    z = next + ((t - 1) / tn) * (next - a);
    a = next;
    f = fn;
    t = tn;
    if (it % 50 == 0) {
      const Eigen::VectorXd w = x.transpose() * a.cwiseProduct(y);
      if (primal_at(x, y, c, w) + f < 1e-10) break;
    }
  }
  return -f;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ebbsvm-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

/// CSV + manifest for blob data with numeric columns f0..f{n-1} and label "pos"/"neg".
inline std::filesystem::path write_blob_manifest(const std::filesystem::path& dir, std::size_t m, std::size_t n,
                                                 double shift, std::uint64_t seed) {
  const auto data = blobs(m, n, shift, seed);
  std::ofstream csv(dir / "blobs.csv");
  for (std::size_t j = 0; j < n; ++j) csv << 'f' << j << ',';
  csv << "label\n";
  csv.precision(17);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) csv << data.x(i, j) << ',';
    csv << (data.y(i) > 0 ? "pos" : "neg") << '\n';
  }
  write_text(dir / "blobs.manifest", "name = blobs\ncsv = blobs.csv\nlabel_column = label\npositive_label = pos\n");
  return dir / "blobs.manifest";
}

/// One frozen constrained-SVM case with its exhaustive-enumeration optimum.
struct CsvmCase {
  int id = 0;
  double C = 0;
  double tpr = 0;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  double objective = 0;
};

inline std::vector<CsvmCase> read_csvm_cases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<CsvmCase> cases;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("case ", 0) != 0) continue;
    CsvmCase c;
    int m = 0, n = 0;
    if (std::sscanf(line.c_str(), "case %d m=%d n=%d C=%lf tpr=%lf", &c.id, &m, &n, &c.C, &c.tpr) != 5)
      throw std::runtime_error("bad case header: " + line);
    c.x.resize(m, n);
    c.y.resize(m);
    for (int i = 0; i < m; ++i) {
      std::getline(in, line);
      std::istringstream row(line);
      row >> c.y(i);
      for (int j = 0; j < n; ++j) row >> c.x(i, j);
    }
    std::getline(in, line);
    c.objective = std::stod(line.substr(line.find(' ') + 1));
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace testing
