#include <ebbsvm/svm.hpp>

#include <cmath>

namespace ebbsvm {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::linear: return "linear";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(std::string_view text) {
  if (text == "linear") return KernelKind::linear;
  fail(ErrorKind::invalid_argument, "unknown kernel '" + std::string(text) + "'");
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::accuracy: return "accuracy";
    case Metric::tpr: return "tpr";
    case Metric::tnr: return "tnr";
    case Metric::gmean: return "gmean";
  }
  return "unknown";
}

Metric parse_metric(std::string_view text) {
  if (text == "accuracy") return Metric::accuracy;
  if (text == "tpr") return Metric::tpr;
  if (text == "tnr") return Metric::tnr;
  if (text == "gmean") return Metric::gmean;
  fail(ErrorKind::invalid_argument, "unknown metric '" + std::string(text) + "'");
}

std::optional<double> try_performance(const Eigen::VectorXd& score_values, const Eigen::VectorXd& labels,
                                      Metric metric) {
  require(score_values.size() == labels.size(), "performance: score and label counts differ");
  std::size_t pos = 0, neg = 0, true_pos = 0, true_neg = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const int predicted = label_of(score_values(i));
    if (labels(i) > 0) {
      ++pos;
      true_pos += predicted > 0;
    } else {
      ++neg;
      true_neg += predicted < 0;
    }
  }
  const double tpr = pos ? double(true_pos) / double(pos) : 0.0;
  const double tnr = neg ? double(true_neg) / double(neg) : 0.0;
  switch (metric) {
    case Metric::accuracy:
      if (pos + neg == 0) return std::nullopt;
      return double(true_pos + true_neg) / double(pos + neg);
    case Metric::tpr:
      if (!pos) return std::nullopt;
      return tpr;
    case Metric::tnr:
      if (!neg) return std::nullopt;
      return tnr;
    case Metric::gmean:
      if (!pos || !neg) return std::nullopt;
      return std::sqrt(tpr * tnr);
  }
  return std::nullopt;
}

double performance(const Eigen::VectorXd& score_values, const Eigen::VectorXd& labels, Metric metric) {
  auto value = try_performance(score_values, labels, metric);
  if (!value)
    fail(ErrorKind::degenerate_data,
         "evaluate: the class required by metric '" + std::string(to_string(metric)) + "' is empty");
  return *value;
}

}  // namespace ebbsvm
