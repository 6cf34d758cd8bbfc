#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

namespace ebbsvm {

/// Outcome record of a constrained SVM solve.
struct CsvmCertificate {
  std::string mode = "exact";       // exact | heuristic
  std::string status = "optimal";   // optimal | time_limit | heuristic
  double objective = 0;             // w'w + C sum(xi) at the incumbent
  double bound = 0;                 // proven lower bound
  double gap = 0;                   // (objective - bound) / max(1, |objective|)
  std::size_t nodes = 0;
  double wall_seconds = 0;
  bool feasible = true;
  /// False when some candidate needed xi_i > M on a row with zeta_i = 0.
  bool big_m_valid = true;
  std::size_t positives_required = 0;
  std::size_t positives_met = 0;
  std::size_t negatives_required = 0;
  std::size_t negatives_met = 0;

  void save(std::ostream& out) const;
  static CsvmCertificate load(std::istream& in, const std::string& origin = "<stream>");
};

}  // namespace ebbsvm
