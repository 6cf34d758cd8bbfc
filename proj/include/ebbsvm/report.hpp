#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ebbsvm {

struct ReportRow {
  std::string dataset;
  std::string method;
  std::optional<double> target_tpr;
  std::uint64_t seed = 0;
  int fold = -1;  // -1 outside cross-validation
  std::size_t instance_id = 0;
  int label = 0;  // 1 for the positive class, else 0
  double probability = 0;
};

struct ProbabilityReport {
  std::vector<ReportRow> rows;
  /// Skipped folds and similar remarks.
  std::vector<std::string> notes;
};

enum class ClassFilter { all, positives, negatives };

/// Mean of (p_i - phat_i)^2 over the filtered rows. Throws when none remain.
double mse(const ProbabilityReport& report, ClassFilter filter = ClassFilter::all);

struct MseSummary {
  std::size_t count = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double all = 0;
  std::optional<double> positive;
  std::optional<double> negative;
};

MseSummary summarize(const ProbabilityReport& report);

/// Rows from +-1 labels and probabilities of the positive class.
ProbabilityReport make_report(const std::string& dataset, const std::string& method, std::optional<double> target_tpr,
                              std::uint64_t seed, const std::vector<std::size_t>& ids, const Eigen::VectorXd& labels,
                              const Eigen::VectorXd& probabilities);

/// Header: dataset,method,target_tpr,seed,fold,instance_id,label,probability.
/// Reals use the shortest round-trip form, so a rewrite is byte-identical.
void write_report_csv(const ProbabilityReport& report, std::ostream& out);
ProbabilityReport read_report_csv(std::istream& in, const std::string& origin = "<stream>");

void write_summary(const MseSummary& summary, std::ostream& out);

/// Splits a report by (method, target_tpr, seed) in first-seen order.
std::vector<ProbabilityReport> group_report(const ProbabilityReport& report);

}  // namespace ebbsvm
