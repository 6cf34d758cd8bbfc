#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include <ebbsvm/dataset.hpp>
#include <ebbsvm/ensemble.hpp>
#include <ebbsvm/error.hpp>
#include <ebbsvm/report.hpp>
#include <ebbsvm/svm.hpp>

namespace ebbsvm {

/// P(y = +1 | f) = 1 / (1 + exp(A f + B)).
template <typename Scalar>
struct PlattSigmoid {
  Scalar A = 0;
  Scalar B = 0;
};

template <typename Scalar>
Scalar platt_probability(const PlattSigmoid<Scalar>& s, Scalar f) {
  const Scalar z = s.A * f + s.B;
  if (z >= 0) {
    const Scalar e = std::exp(-z);
    return e / (Scalar(1) + e);
  }
  return Scalar(1) / (Scalar(1) + std::exp(z));
}

namespace detail {

template <typename Scalar>
VectorX<Scalar> platt_targets(const VectorX<Scalar>& labels) {
  Scalar pos = 0, neg = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) (labels(i) > 0 ? pos : neg) += 1;
  const Scalar hi = (pos + 1) / (pos + 2);
  const Scalar lo = Scalar(1) / (neg + 2);
  VectorX<Scalar> t(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i) t(i) = labels(i) > 0 ? hi : lo;
  return t;
}

template <typename Scalar>
Scalar platt_loss(const VectorX<Scalar>& f, const VectorX<Scalar>& t, Scalar A, Scalar B) {
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const Scalar z = f(i) * A + B;
    sum += z >= 0 ? t(i) * z + std::log1p(std::exp(-z)) : (t(i) - 1) * z + std::log1p(std::exp(z));
  }
  return sum;
}

}  // namespace detail

/// Negative log-likelihood of (A, B) against the smoothed targets
/// t+ = (N+ + 1) / (N+ + 2), t- = 1 / (N- + 2). fit_platt minimizes this.
template <typename Scalar>
Scalar platt_objective(const VectorX<Scalar>& scores, const VectorX<Scalar>& labels, Scalar A, Scalar B) {
  return detail::platt_loss(scores, detail::platt_targets(labels), A, B);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> platt_gradient(const VectorX<Scalar>& scores, const VectorX<Scalar>& labels, Scalar A,
                                           Scalar B) {
  const auto t = detail::platt_targets(labels);
  Eigen::Matrix<Scalar, 2, 1> g = Eigen::Matrix<Scalar, 2, 1>::Zero();
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const Scalar d = t(i) - platt_probability(PlattSigmoid<Scalar>{A, B}, scores(i));
    g(0) += scores(i) * d;
    g(1) += d;
  }
  return g;
}

struct PlattOptions {
  int max_iterations = 1000;
  double gradient_tolerance = 1e-8;
  double min_step = 1e-14;
};

/// Newton iteration with backtracking line search (the Lin, Lin and Weng
/// refinement of Platt's method), started at A = 0, B = log((N- + 1) / (N+ + 1)).
template <typename Scalar>
PlattSigmoid<Scalar> fit_platt(const VectorX<Scalar>& scores, const VectorX<Scalar>& labels,
                               const PlattOptions& options = {}) {
  require(scores.size() == labels.size(), "fit_platt: score and label counts differ");
  std::size_t pos = 0, neg = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) (labels(i) > 0 ? pos : neg)++;
  if (!pos || !neg) fail(ErrorKind::degenerate_data, "fit_platt: both classes are required");
  if (!scores.allFinite()) fail(ErrorKind::degenerate_data, "fit_platt: non-finite score");

  const auto t = detail::platt_targets(labels);
  const Scalar sigma = Scalar(1e-12);
  Scalar A = 0;
  Scalar B = std::log((Scalar(neg) + 1) / (Scalar(pos) + 1));
  Scalar fval = detail::platt_loss(scores, t, A, B);
  for (int it = 0; it < options.max_iterations; ++it) {
    Scalar h11 = sigma, h22 = sigma, h21 = 0, g1 = 0, g2 = 0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      const Scalar p = platt_probability(PlattSigmoid<Scalar>{A, B}, scores(i));
      const Scalar q = Scalar(1) - p;
      const Scalar d2 = p * q;
      h11 += scores(i) * scores(i) * d2;
      h22 += d2;
      h21 += scores(i) * d2;
      const Scalar d1 = t(i) - p;
      g1 += scores(i) * d1;
      g2 += d1;
    }
    if (std::hypot(g1, g2) <= options.gradient_tolerance) break;
    const Scalar det = h11 * h22 - h21 * h21;
    const Scalar dA = -(h22 * g1 - h21 * g2) / det;
    const Scalar dB = -(-h21 * g1 + h11 * g2) / det;
    const Scalar gd = g1 * dA + g2 * dB;
    Scalar step = 1;
    bool moved = false;
    while (step >= options.min_step) {
      const Scalar nA = A + step * dA, nB = B + step * dB;
      const Scalar nf = detail::platt_loss(scores, t, nA, nB);
      if (nf < fval + Scalar(1e-4) * step * gd) {
        A = nA, B = nB, fval = nf;
        moved = true;
        break;
      }
      step /= 2;
    }
    if (!moved) break;
  }
  return {A, B};
}

struct CvPlan {
  std::size_t outer_folds = 10;
  std::size_t inner_folds = 10;
  std::uint64_t seed = 1;
  double tolerance = 1e-3;
  unsigned threads = 0;
};

/// Outer k-fold CV. In each outer fold an inner k-fold CV on the outer-train
/// part picks the accuracy-best theta; the sigmoid is fit on the pooled inner
/// held-out scores of that theta and applied to an SVM trained on the whole
/// outer-train part. Preprocessing is refit on every training portion.
ProbabilityReport run_kfold_platt(const RawTable& data, const ParameterGrid& grid, const CvPlan& plan,
                                  const PreprocessPolicy& policy = {}, const std::string& dataset_name = "data");

}  // namespace ebbsvm
