#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ebbsvm {

enum class ColumnKind { numeric, categorical };

struct ColumnInfo {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
};

/// Missing cells are std::nullopt.
using Cell = std::optional<std::string>;

/// A table exactly as read from disk: typed columns, raw cells, mapped labels.
/// Labels are +1 / -1, or 0 when the table carries no label column.
struct RawTable {
  std::vector<ColumnInfo> columns;
  std::vector<std::vector<Cell>> rows;
  std::vector<int> labels;
  std::vector<std::size_t> ids;

  std::size_t size() const { return rows.size(); }
  bool labeled() const;
  std::size_t count_label(int label) const;
  RawTable subset(std::span<const std::size_t> positions) const;
};

/// Numeric design matrix with one row per instance.
///
/// `scaled[j]` is true for columns that come from numeric attributes and are
/// therefore z-scored; dummy columns are left as 0/1.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::size_t> ids;
  std::vector<std::string> feature_names;
  std::vector<bool> scaled;

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
  bool labeled() const;
  std::size_t count_label(int label) const;
  Dataset subset(std::span<const std::size_t> positions) const;

  /// Convenience constructor for fully numeric data (every column scaled).
  static Dataset from_matrix(Eigen::MatrixXd x, Eigen::VectorXd y);
};

struct LoadOptions {
  /// Empty: the file has no label column and every label is 0.
  std::string label_column;
  std::string positive_label;
  /// Multiclass files: the most frequent class becomes -1 and all others +1.
  bool collapse_largest_negative = false;
  std::map<std::string, ColumnKind> kind_overrides;
  std::vector<std::string> ignore_columns;
};

RawTable parse_csv(std::istream& in, const LoadOptions& options, const std::string& origin = "<stream>");
RawTable load_csv(const std::filesystem::path& path, const LoadOptions& options);

/// Dataset manifest: label column, positive token and column kinds for a CSV.
struct DatasetManifest {
  std::string name;
  std::filesystem::path csv;
  LoadOptions load;

  static DatasetManifest read(const std::filesystem::path& path);
  void write(std::ostream& out) const;
};

struct PreprocessPolicy {
  /// Numeric gaps are filled with the training median and categorical gaps with
  /// the training mode; categoricals always become one dummy per training level.
  bool standardize = true;
};

/// Imputation, dummy encoding and z-scoring, all fitted on a training table.
class Preprocessor {
 public:
  static Preprocessor fit(const RawTable& train, const PreprocessPolicy& policy = {});

  Dataset apply(const RawTable& table) const;

  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::size_t dimension() const { return feature_names_.size(); }

  void save(std::ostream& out) const;
  static Preprocessor load(std::istream& in);

 private:
  struct Column {
    ColumnInfo info;
    double fill_value = 0.0;
    std::string fill_level;
    std::vector<std::string> levels;
    double mean = 0.0;
    double scale = 1.0;
  };

  bool standardize_ = true;
  std::vector<Column> columns_;
  std::vector<std::string> feature_names_;
  std::vector<bool> scaled_;
};

std::pair<Dataset, Dataset> preprocess(const RawTable& train, const RawTable& other,
                                       const PreprocessPolicy& policy = {});

/// Shuffled disjoint partition into (train, validation) with
/// |validation| = round(fraction * m).
std::pair<RawTable, RawTable> split_outer(const RawTable& table, double validation_fraction,
                                          std::uint64_t seed, bool stratify = false);

/// One bootstrap replicate. Positions index rows of the training set.
struct BootstrapSample {
  std::vector<std::size_t> in_bag;      // mtr draws with replacement, in draw order
  std::vector<std::size_t> out_of_bag;  // ascending, rows never drawn
  std::uint64_t seed = 0;

  std::size_t unique_count() const;
};

BootstrapSample bootstrap_sample(std::size_t training_size, std::uint64_t seed);
inline BootstrapSample bootstrap_sample(const Dataset& train, std::uint64_t seed) {
  return bootstrap_sample(static_cast<std::size_t>(train.rows()), seed);
}

/// k shuffled folds of positions in [0, m); fold f holds shuffled positions
/// [round(f m / k), round((f + 1) m / k)).
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t m, std::size_t k, std::uint64_t seed);

/// Per-column mean and scale (sample standard deviation, 1 when zero) of
/// the selected rows, used to standardize bootstrap replicates.
struct ColumnScaling {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

ColumnScaling column_scaling(const Dataset& data, std::span<const std::size_t> positions);

}  // namespace ebbsvm
