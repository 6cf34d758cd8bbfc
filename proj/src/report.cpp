#include <ebbsvm/report.hpp>

#include <istream>
#include <ostream>
#include <tuple>

#include <ebbsvm/error.hpp>
#include <ebbsvm/key_value.hpp>

namespace ebbsvm {

namespace {

bool keep(const ReportRow& row, ClassFilter filter) {
  switch (filter) {
    case ClassFilter::all: return true;
    case ClassFilter::positives: return row.label == 1;
    case ClassFilter::negatives: return row.label == 0;
  }
  return false;
}

constexpr const char* kHeader = "dataset,method,target_tpr,seed,fold,instance_id,label,probability";

}  // namespace

double mse(const ProbabilityReport& report, ClassFilter filter) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& row : report.rows) {
    if (!keep(row, filter)) continue;
    const double d = row.label - row.probability;
    sum += d * d;
    ++n;
  }
  if (!n) fail(ErrorKind::degenerate_data, "mse: no rows match the class filter");
  return sum / static_cast<double>(n);
}

MseSummary summarize(const ProbabilityReport& report) {
  MseSummary s;
  s.count = report.rows.size();
  for (const auto& row : report.rows) (row.label == 1 ? s.positives : s.negatives)++;
  s.all = mse(report, ClassFilter::all);
  if (s.positives) s.positive = mse(report, ClassFilter::positives);
  if (s.negatives) s.negative = mse(report, ClassFilter::negatives);
  return s;
}

ProbabilityReport make_report(const std::string& dataset, const std::string& method, std::optional<double> target_tpr,
                              std::uint64_t seed, const std::vector<std::size_t>& ids, const Eigen::VectorXd& labels,
                              const Eigen::VectorXd& probabilities) {
  require(ids.size() == static_cast<std::size_t>(labels.size()) && labels.size() == probabilities.size(),
          "make_report: ids, labels and probabilities differ in length");
  ProbabilityReport report;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    report.rows.push_back({dataset, method, target_tpr, seed, -1, ids[i], labels(k) > 0 ? 1 : 0, probabilities(k)});
  }
  return report;
}

void write_report_csv(const ProbabilityReport& report, std::ostream& out) {
  out << kHeader << '\n';
  for (const auto& r : report.rows) {
    if (r.dataset.find_first_of(",\"\n") != std::string::npos || r.method.find_first_of(",\"\n") != std::string::npos)
      fail(ErrorKind::invalid_argument, "report: dataset and method names may not contain commas or quotes");
    out << r.dataset << ',' << r.method << ',' << (r.target_tpr ? format_double(*r.target_tpr) : "") << ','
        << r.seed << ',' << r.fold << ',' << r.instance_id << ',' << r.label << ',' << format_double(r.probability)
        << '\n';
  }
}

ProbabilityReport read_report_csv(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kHeader) fail(ErrorKind::format, origin + ": missing report header");
  ProbabilityReport report;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) fail(ErrorKind::format, origin + ":" + std::to_string(line_no) + ": expected 8 fields");
    ReportRow r;
    r.dataset = f[0];
    r.method = f[1];
    if (!f[2].empty()) r.target_tpr = parse_double(f[2]);
    r.seed = parse_u64(f[3]);
    r.fold = f[4] == "-1" ? -1 : static_cast<int>(parse_u64(f[4]));
    r.instance_id = parse_u64(f[5]);
    r.label = static_cast<int>(parse_u64(f[6]));
    r.probability = parse_double(f[7]);
    if (r.label > 1 || !(r.probability >= 0 && r.probability <= 1))
      fail(ErrorKind::format, origin + ":" + std::to_string(line_no) + ": label or probability out of range");
    report.rows.push_back(std::move(r));
  }
  return report;
}

void write_summary(const MseSummary& s, std::ostream& out) {
  KeyValueFile kv;
  kv.set("rows", std::to_string(s.count));
  kv.set("positives", std::to_string(s.positives));
  kv.set("negatives", std::to_string(s.negatives));
  kv.set("mse", format_double(s.all));
  kv.set("mse_positive", s.positive ? format_double(*s.positive) : "");
  kv.set("mse_negative", s.negative ? format_double(*s.negative) : "");
  kv.write(out);
}

std::vector<ProbabilityReport> group_report(const ProbabilityReport& report) {
  std::vector<ProbabilityReport> groups;
  std::vector<std::tuple<std::string, std::optional<double>, std::uint64_t>> keys;
  for (const auto& row : report.rows) {
    auto key = std::make_tuple(row.method, row.target_tpr, row.seed);
    std::size_t g = 0;
    while (g < keys.size() && keys[g] != key) ++g;
    if (g == keys.size()) {
      keys.push_back(key);
      groups.emplace_back();
    }
    groups[g].rows.push_back(row);
  }
  return groups;
}

}  // namespace ebbsvm
