#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include <ebbsvm/dataset.hpp>
#include <ebbsvm/error.hpp>

namespace ebbsvm {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class KernelKind { linear };

/// Kernel choice. Only the linear kernel is trained; parameterized kernels
/// would add their parameters here.
struct KernelSpec {
  KernelKind kind = KernelKind::linear;

  static KernelSpec linear() { return {}; }
  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view text);

struct SolverOptions {
  /// Stop when the maximal KKT violation m(alpha) - M(alpha) drops below this.
  double tolerance = 1e-3;
  long long max_iterations = 10'000'000;
  bool shrinking = true;
  /// Called after every iteration with the current dual objective.
  std::function<void(long long, double)> observer;
};

template <typename Scalar>
struct SolverDiagnostics {
  long long iterations = 0;
  Scalar kkt_violation = 0;
  /// Dual objective sum(alpha) - alpha' Q alpha / 2, a lower bound on the primal.
  Scalar dual_objective = 0;
  /// Primal objective |w|^2 / 2 + sum_i C_i xi_i at the returned (w, b).
  Scalar primal_objective = 0;
  bool converged = true;
};

template <typename Scalar>
struct DualSolution {
  VectorX<Scalar> alpha;
  Scalar bias = 0;
  SolverDiagnostics<Scalar> diagnostics;
};

/// Kernel matrix held in memory.
template <typename Scalar>
class PrecomputedKernel {
 public:
  explicit PrecomputedKernel(MatrixX<Scalar> gram) : gram_(std::move(gram)) {}

  Eigen::Index size() const { return gram_.rows(); }
  Scalar diagonal(Eigen::Index i) const { return gram_(i, i); }
  auto column(Eigen::Index i, int /*slot*/) const { return gram_.col(i); }

 private:
  MatrixX<Scalar> gram_;
};

/// Linear kernel columns computed on demand as X x_i.
template <typename Scalar>
class LinearKernelColumns {
 public:
  explicit LinearKernelColumns(const MatrixX<Scalar>& x)
      : x_(x), diag_(x.rowwise().squaredNorm()), slots_{VectorX<Scalar>(x.rows()), VectorX<Scalar>(x.rows())} {}

  Eigen::Index size() const { return x_.rows(); }
  Scalar diagonal(Eigen::Index i) const { return diag_(i); }
  const VectorX<Scalar>& column(Eigen::Index i, int slot) const {
    slots_[slot].noalias() = x_ * x_.row(i).transpose();
    return slots_[slot];
  }

 private:
  const MatrixX<Scalar>& x_;
  VectorX<Scalar> diag_;
  mutable VectorX<Scalar> slots_[2];
};

/// Solves  min_a  a'Qa/2 - sum(a)  s.t.  y'a = 0,  0 <= a_i <= upper_i,
/// with Q_ij = y_i y_j K_ij, by two-coordinate decomposition. The first index
/// is the maximal violator; the second maximizes the second-order decrease.
/// Bounded variables that are unlikely to move are shrunk from the working
/// set as in LIBSVM; optimality is always confirmed on the full set.
template <typename Scalar, typename Kernel>
DualSolution<Scalar> solve_dual(const Kernel& kernel, const VectorX<Scalar>& y, const VectorX<Scalar>& upper,
                                const SolverOptions& options) {
  using Index = Eigen::Index;
  const Index m = kernel.size();
  require(y.size() == m && upper.size() == m, "solve_dual: size mismatch");
  constexpr Scalar tau = Scalar(1e-12);
  constexpr Scalar inf = std::numeric_limits<Scalar>::infinity();
  const Scalar eps = static_cast<Scalar>(options.tolerance);

  VectorX<Scalar> alpha = VectorX<Scalar>::Zero(m);
  VectorX<Scalar> grad = VectorX<Scalar>::Constant(m, Scalar(-1));
  // Gradient contribution of variables at their upper bound.
  VectorX<Scalar> grad_bar = VectorX<Scalar>::Zero(m);
  VectorX<Scalar> qd(m);
  for (Index t = 0; t < m; ++t) qd(t) = kernel.diagonal(t);
  std::vector<Index> active(static_cast<std::size_t>(m));
  for (Index t = 0; t < m; ++t) active[static_cast<std::size_t>(t)] = t;
  bool unshrunk = false;

  auto at_upper = [&](Index t) { return alpha(t) >= upper(t); };
  auto at_lower = [&](Index t) { return alpha(t) <= Scalar(0); };

  auto reconstruct = [&] {
    if (active.size() == static_cast<std::size_t>(m)) return;
    std::vector<char> is_active(static_cast<std::size_t>(m), 0);
    for (Index t : active) is_active[static_cast<std::size_t>(t)] = 1;
    std::vector<Index> inactive;
    for (Index t = 0; t < m; ++t)
      if (!is_active[static_cast<std::size_t>(t)]) inactive.push_back(t), grad(t) = grad_bar(t) - Scalar(1);
    for (Index i : active) {
      if (at_upper(i) || at_lower(i)) continue;
      const auto k_i = kernel.column(i, 0);
      const Scalar s = alpha(i) * y(i);
      for (Index t : inactive) grad(t) += s * y(t) * k_i(t);
    }
    active.resize(static_cast<std::size_t>(m));
    for (Index t = 0; t < m; ++t) active[static_cast<std::size_t>(t)] = t;
  };

  // Returns false when the active set satisfies the stopping rule.
  Scalar violation = 0;
  auto select = [&](Index& out_i, Index& out_j) {
    Scalar gmax = -inf;
    Index i = -1;
    for (Index t : active) {
      if (y(t) > 0) {
        if (!at_upper(t) && -grad(t) >= gmax) gmax = -grad(t), i = t;
      } else {
        if (!at_lower(t) && grad(t) >= gmax) gmax = grad(t), i = t;
      }
    }
    Scalar gmax2 = -inf;
    Index j = -1;
    if (i >= 0) {
      const auto k_i = kernel.column(i, 0);
      Scalar best = inf;
      for (Index t : active) {
        Scalar grad_diff;
        if (y(t) > 0) {
          if (at_lower(t)) continue;
          if (grad(t) >= gmax2) gmax2 = grad(t);
          grad_diff = gmax + grad(t);
        } else {
          if (at_upper(t)) continue;
          if (-grad(t) >= gmax2) gmax2 = -grad(t);
          grad_diff = gmax - grad(t);
        }
        if (grad_diff > 0) {
          Scalar quad = qd(i) + qd(t) - Scalar(2) * k_i(t);
          if (quad <= 0) quad = tau;
          const Scalar gain = -(grad_diff * grad_diff) / quad;
          if (gain <= best) best = gain, j = t;
        }
      }
    }
    violation = (i >= 0 && gmax2 > -inf) ? gmax + gmax2 : Scalar(0);
    out_i = i;
    out_j = j;
    return !(i < 0 || j < 0 || violation < eps);
  };

  auto shrinkable = [&](Index t, Scalar g1, Scalar g2) {
    if (at_upper(t)) return y(t) > 0 ? -grad(t) > g1 : -grad(t) > g2;
    if (at_lower(t)) return y(t) > 0 ? grad(t) > g2 : grad(t) > g1;
    return false;
  };

  auto shrink = [&] {
    Scalar g1 = -inf, g2 = -inf;
    for (Index t : active) {
      if (y(t) > 0) {
        if (!at_upper(t)) g1 = std::max(g1, -grad(t));
        if (!at_lower(t)) g2 = std::max(g2, grad(t));
      } else {
        if (!at_upper(t)) g2 = std::max(g2, -grad(t));
        if (!at_lower(t)) g1 = std::max(g1, grad(t));
      }
    }
    if (!unshrunk && g1 + g2 <= eps * 10) {
      unshrunk = true;
      reconstruct();
    }
    std::erase_if(active, [&](Index t) { return shrinkable(t, g1, g2); });
  };

  auto exact_dual = [&] {
    Scalar quad = 0;
    for (Index i = 0; i < m; ++i) {
      if (alpha(i) == 0) continue;
      const auto k_i = kernel.column(i, 0);
      Scalar s = 0;
      for (Index t = 0; t < m; ++t) s += alpha(t) * y(t) * k_i(t);
      quad += alpha(i) * y(i) * s;
    }
    return alpha.sum() - quad / 2;
  };

  SolverDiagnostics<Scalar> diag;
  long long iter = 0;
  const long long period = std::min<long long>(m, 1000);
  long long counter = period + 1;
  while (true) {
    if (options.shrinking && --counter == 0) {
      counter = period;
      shrink();
    }
    Index i, j;
    if (!select(i, j)) {
      reconstruct();
      if (!select(i, j)) break;
      counter = 1;
    }
    if (iter >= options.max_iterations) {
      diag.converged = false;
      break;
    }
    ++iter;

    const auto k_i = kernel.column(i, 0);
    const auto k_j = kernel.column(j, 1);
    const Scalar c_i = upper(i);
    const Scalar c_j = upper(j);
    const Scalar old_i = alpha(i);
    const Scalar old_j = alpha(j);
    const bool was_upper_i = at_upper(i), was_upper_j = at_upper(j);
    Scalar a_i = old_i;
    Scalar a_j = old_j;
    Scalar quad = qd(i) + qd(j) - Scalar(2) * k_i(j);
    if (quad <= 0) quad = tau;

    if (y(i) != y(j)) {
      const Scalar delta = (-grad(i) - grad(j)) / quad;
      const Scalar diff = a_i - a_j;
      a_i += delta;
      a_j += delta;
      if (diff > 0) {
        if (a_j < 0) a_j = 0, a_i = diff;
      } else {
        if (a_i < 0) a_i = 0, a_j = -diff;
      }
      if (diff > c_i - c_j) {
        if (a_i > c_i) a_i = c_i, a_j = c_i - diff;
      } else {
        if (a_j > c_j) a_j = c_j, a_i = c_j + diff;
      }
    } else {
      const Scalar delta = (grad(i) - grad(j)) / quad;
      const Scalar sum = a_i + a_j;
      a_i -= delta;
      a_j += delta;
      if (sum > c_i) {
        if (a_i > c_i) a_i = c_i, a_j = sum - c_i;
      } else {
        if (a_j < 0) a_j = 0, a_i = sum;
      }
      if (sum > c_j) {
        if (a_j > c_j) a_j = c_j, a_i = sum - c_j;
      } else {
        if (a_i < 0) a_i = 0, a_j = sum;
      }
    }
    alpha(i) = a_i;
    alpha(j) = a_j;

    const Scalar step_i = y(i) * (a_i - old_i);
    const Scalar step_j = y(j) * (a_j - old_j);
    if (active.size() == static_cast<std::size_t>(m)) {
      grad.array() += y.array() * (k_i.array() * step_i + k_j.array() * step_j);
    } else {
      for (Index t : active) grad(t) += y(t) * (k_i(t) * step_i + k_j(t) * step_j);
    }
    if (was_upper_i != at_upper(i)) {
      const Scalar s = (was_upper_i ? -c_i : c_i) * y(i);
      grad_bar.array() += s * y.array() * k_i.array();
    }
    if (was_upper_j != at_upper(j)) {
      const Scalar s = (was_upper_j ? -c_j : c_j) * y(j);
      grad_bar.array() += s * y.array() * k_j.array();
    }

    if (options.observer) options.observer(iter, static_cast<double>(exact_dual()));
  }
  reconstruct();

  // Bias: average over free vectors, else the midpoint of the feasible interval.
  Scalar ub = inf;
  Scalar lb = -inf;
  Scalar sum_free = 0;
  Index n_free = 0;
  for (Index t = 0; t < m; ++t) {
    const Scalar yg = y(t) * grad(t);
    if (at_upper(t)) {
      if (y(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (y(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  Scalar rho;
  if (n_free > 0) rho = sum_free / static_cast<Scalar>(n_free);
  else if (std::isfinite(ub) && std::isfinite(lb)) rho = (ub + lb) / 2;
  else rho = std::isfinite(ub) ? ub : (std::isfinite(lb) ? lb : Scalar(0));

  diag.iterations = iter;
  diag.kkt_violation = violation;
  diag.dual_objective = Scalar(0.5) * alpha.sum() - Scalar(0.5) * alpha.dot(grad);
  return {std::move(alpha), -rho, diag};
}

/// Fitted soft-margin linear SVM; score(x) = weights . x + intercept.
template <typename Scalar>
struct SvmModel {
  VectorX<Scalar> weights;
  Scalar intercept = 0;
  /// One coefficient per training row (duplicates included); empty after reload.
  VectorX<Scalar> dual_coefficients;
  Scalar C = 1;
  KernelSpec kernel;
  SolverDiagnostics<Scalar> diagnostics;

  Eigen::Index dimension() const { return weights.size(); }
};

using LinearSvm = SvmModel<double>;

/// Rows above this size use on-demand kernel columns instead of a full Gram matrix.
inline constexpr Eigen::Index kGramRowLimit = 4000;

namespace detail {

template <typename Scalar>
void check_training_data(const MatrixX<Scalar>& x, const VectorX<Scalar>& y) {
  if (x.rows() == 0) fail(ErrorKind::degenerate_data, "train_svm: empty training set");
  require(y.size() == x.rows(), "train_svm: label count differs from row count");
  if (!x.allFinite()) fail(ErrorKind::degenerate_data, "train_svm: non-finite attribute value");
  bool has_pos = false;
  bool has_neg = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) == Scalar(1)) has_pos = true;
    else if (y(i) == Scalar(-1)) has_neg = true;
    else fail(ErrorKind::invalid_argument, "train_svm: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg)
    fail(ErrorKind::degenerate_data, "train_svm: all labels identical, the dual has no feasible direction");
}

}  // namespace detail

/// Linear SVM with a per-row box on the dual coefficients (C_i = upper_i).
/// Primal: min |w|^2/2 + sum_i upper_i xi_i.
template <typename Scalar>
SvmModel<Scalar> fit_linear_dual(const MatrixX<Scalar>& x, const VectorX<Scalar>& y, const VectorX<Scalar>& upper,
                                 const SolverOptions& options) {
  detail::check_training_data(x, y);
  require(upper.size() == x.rows(), "fit_linear_dual: bound count differs from row count");
  require((upper.array() > 0).all(), "fit_linear_dual: bounds must be positive");

  DualSolution<Scalar> sol;
  if (x.rows() <= kGramRowLimit) {
    MatrixX<Scalar> gram(x.rows(), x.rows());
    gram.setZero();
    gram.template selfadjointView<Eigen::Lower>().rankUpdate(x);
    gram.template triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    sol = solve_dual<Scalar>(PrecomputedKernel<Scalar>(std::move(gram)), y, upper, options);
  } else {
    sol = solve_dual<Scalar>(LinearKernelColumns<Scalar>(x), y, upper, options);
  }

  SvmModel<Scalar> model;
  model.weights = x.transpose() * (sol.alpha.array() * y.array()).matrix();
  model.intercept = sol.bias;
  model.dual_coefficients = std::move(sol.alpha);
  model.diagnostics = sol.diagnostics;
  const VectorX<Scalar> slack =
      (Scalar(1) - y.array() * ((x * model.weights).array() + model.intercept)).cwiseMax(Scalar(0));
  model.diagnostics.primal_objective = Scalar(0.5) * model.weights.squaredNorm() + upper.dot(slack);
  return model;
}

/// Soft-margin SVM dual with box [0, C].
template <typename Scalar>
SvmModel<Scalar> train_svm(const MatrixX<Scalar>& x, const VectorX<Scalar>& y, Scalar C,
                           KernelSpec kernel = KernelSpec::linear(), const SolverOptions& options = {}) {
  if (!(C > 0) || !std::isfinite(static_cast<double>(C))) fail(ErrorKind::invalid_argument, "train_svm: C must be positive");
  require(kernel.kind == KernelKind::linear, "train_svm: only the linear kernel is supported");
  auto model = fit_linear_dual<Scalar>(x, y, VectorX<Scalar>::Constant(x.rows(), C), options);
  model.C = C;
  model.kernel = kernel;
  return model;
}

inline LinearSvm train_svm(const Dataset& train, double C, KernelSpec kernel = KernelSpec::linear(),
                           double tolerance = 1e-3) {
  SolverOptions options;
  options.tolerance = tolerance;
  return train_svm<double>(train.x, train.y, C, kernel, options);
}

template <typename Scalar, typename Derived>
Scalar score(const SvmModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != model.weights.size())
    fail(ErrorKind::invalid_argument, "score: expected " + std::to_string(model.weights.size()) +
                                          " attributes, got " + std::to_string(x.size()));
  return model.weights.dot(x.derived().template cast<Scalar>()) + model.intercept;
}

/// Scores for every row of `x`.
template <typename Scalar>
VectorX<Scalar> scores(const SvmModel<Scalar>& model, const MatrixX<Scalar>& x) {
  if (x.cols() != model.weights.size())
    fail(ErrorKind::invalid_argument, "scores: expected " + std::to_string(model.weights.size()) + " attributes");
  return (x * model.weights).array() + model.intercept;
}

/// Hard label: +1 iff score >= 0, so a score of exactly zero is positive.
template <typename Scalar>
constexpr int label_of(Scalar score_value) {
  return score_value >= Scalar(0) ? 1 : -1;
}

template <typename Scalar, typename Derived>
int predict(const SvmModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x) {
  return label_of(score(model, x));
}

enum class Metric { accuracy, tpr, tnr, gmean };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view text);

/// Performance of thresholded scores (+1 iff score >= 0) against +-1 labels.
/// Empty when the classes the metric needs are absent.
std::optional<double> try_performance(const Eigen::VectorXd& score_values, const Eigen::VectorXd& labels,
                                      Metric metric);
double performance(const Eigen::VectorXd& score_values, const Eigen::VectorXd& labels, Metric metric);

inline double evaluate(const LinearSvm& model, const Dataset& data, Metric metric) {
  if (data.rows() == 0) fail(ErrorKind::degenerate_data, "evaluate: empty dataset");
  return performance(scores(model, data.x), data.y, metric);
}

}  // namespace ebbsvm
