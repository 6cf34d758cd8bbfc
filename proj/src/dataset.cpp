#include <ebbsvm/dataset.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>

#include <ebbsvm/error.hpp>
#include <ebbsvm/key_value.hpp>
#include <ebbsvm/random.hpp>

namespace ebbsvm {

namespace {

// Comma separated with RFC 4180 double quotes; cells are trimmed.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current += c;
    }
  }
  fields.push_back(trim(current));
  return fields;
}

bool is_number(const std::string& text) {
  try {
    return std::isfinite(parse_double(text));
  } catch (const Error&) {
    return false;
  }
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

bool RawTable::labeled() const {
  return !labels.empty() && std::all_of(labels.begin(), labels.end(), [](int l) { return l == 1 || l == -1; });
}

std::size_t RawTable::count_label(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

RawTable RawTable::subset(std::span<const std::size_t> positions) const {
  RawTable out;
  out.columns = columns;
  out.rows.reserve(positions.size());
  out.labels.reserve(positions.size());
  out.ids.reserve(positions.size());
  for (auto p : positions) {
    require(p < rows.size(), "RawTable::subset: position out of range");
    out.rows.push_back(rows[p]);
    out.labels.push_back(labels[p]);
    out.ids.push_back(ids[p]);
  }
  return out;
}

bool Dataset::labeled() const {
  return y.size() > 0 && (y.array().abs() == 1.0).all();
}

std::size_t Dataset::count_label(int label) const {
  return static_cast<std::size_t>((y.array() == static_cast<double>(label)).count());
}

Dataset Dataset::subset(std::span<const std::size_t> positions) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(positions.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(positions.size()));
  out.ids.reserve(positions.size());
  Eigen::Index r = 0;
  for (auto p : positions) {
    require(p < static_cast<std::size_t>(x.rows()), "Dataset::subset: position out of range");
    out.x.row(r) = x.row(static_cast<Eigen::Index>(p));
    out.y(r) = y(static_cast<Eigen::Index>(p));
    out.ids.push_back(ids[p]);
    ++r;
  }
  out.feature_names = feature_names;
  out.scaled = scaled;
  return out;
}

Dataset Dataset::from_matrix(Eigen::MatrixXd x, Eigen::VectorXd y) {
  require(y.size() == x.rows(), "Dataset::from_matrix: label count differs from row count");
  Dataset d;
  d.ids.resize(static_cast<std::size_t>(x.rows()));
  std::iota(d.ids.begin(), d.ids.end(), std::size_t{0});
  for (Eigen::Index j = 0; j < x.cols(); ++j) d.feature_names.push_back("x" + std::to_string(j));
  d.scaled.assign(static_cast<std::size_t>(x.cols()), true);
  d.x = std::move(x);
  d.y = std::move(y);
  return d;
}

RawTable parse_csv(std::istream& in, const LoadOptions& options, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::format, origin + ": missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  auto header = split_csv_line(line);

  std::ptrdiff_t label_index = -1;
  if (!options.label_column.empty()) {
    auto it = std::find(header.begin(), header.end(), options.label_column);
    if (it == header.end())
      fail(ErrorKind::schema, origin + ": label column '" + options.label_column + "' not found");
    label_index = it - header.begin();
  }

  std::vector<std::size_t> attribute_fields;
  RawTable table;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (static_cast<std::ptrdiff_t>(j) == label_index) continue;
    if (std::find(options.ignore_columns.begin(), options.ignore_columns.end(), header[j]) !=
        options.ignore_columns.end())
      continue;
    attribute_fields.push_back(j);
    table.columns.push_back({header[j], ColumnKind::numeric});
  }

  std::vector<std::string> raw_labels;
  std::size_t line_number = 1;
  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorKind::format, origin + ":" + std::to_string(line_number) + ": expected " +
                                  std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
    std::vector<Cell> row;
    row.reserve(attribute_fields.size());
    for (auto j : attribute_fields) {
      if (fields[j].empty())
        row.emplace_back(std::nullopt);
      else
        row.emplace_back(fields[j]);
    }
    table.rows.push_back(std::move(row));
    table.ids.push_back(row_index++);
    if (label_index >= 0) raw_labels.push_back(fields[static_cast<std::size_t>(label_index)]);
  }

  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    auto& column = table.columns[c];
    auto override_it = options.kind_overrides.find(column.name);
    if (override_it != options.kind_overrides.end()) {
      column.kind = override_it->second;
      continue;
    }
    bool numeric = true;
    for (const auto& row : table.rows) {
      if (row[c] && !is_number(*row[c])) {
        numeric = false;
        break;
      }
    }
    column.kind = numeric ? ColumnKind::numeric : ColumnKind::categorical;
  }

  table.labels.assign(table.rows.size(), 0);
  if (label_index >= 0) {
    std::string positive = options.positive_label;
    if (options.collapse_largest_negative) {
      std::map<std::string, std::size_t> counts;
      for (const auto& l : raw_labels) ++counts[l];
      auto largest = std::max_element(counts.begin(), counts.end(),
                                      [](const auto& a, const auto& b) { return a.second < b.second; });
      for (std::size_t i = 0; i < raw_labels.size(); ++i)
        table.labels[i] = raw_labels[i] == largest->first ? -1 : 1;
    } else {
      for (std::size_t i = 0; i < raw_labels.size(); ++i) table.labels[i] = raw_labels[i] == positive ? 1 : -1;
    }
  }
  return table;
}

RawTable load_csv(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  return parse_csv(in, options, path.string());
}

DatasetManifest DatasetManifest::read(const std::filesystem::path& path) {
  auto kv = KeyValueFile::read(path);
  DatasetManifest m;
  m.name = kv.get_or("name", path.stem().string());
  m.csv = kv.get("csv");
  if (m.csv.is_relative()) m.csv = path.parent_path() / m.csv;
  m.load.label_column = kv.get("label_column");
  m.load.positive_label = kv.get_or("positive_label", "");
  m.load.collapse_largest_negative = parse_bool(kv.get_or("collapse_largest_negative", "false"));
  if (m.load.positive_label.empty() && !m.load.collapse_largest_negative)
    fail(ErrorKind::format, path.string() + ": positive_label is required unless collapse_largest_negative = true");
  for (const auto& name : split(kv.get_or("categorical", ""), ','))
    if (!trim(name).empty()) m.load.kind_overrides[trim(name)] = ColumnKind::categorical;
  for (const auto& name : split(kv.get_or("numeric", ""), ','))
    if (!trim(name).empty()) m.load.kind_overrides[trim(name)] = ColumnKind::numeric;
  for (const auto& name : split(kv.get_or("ignore", ""), ','))
    if (!trim(name).empty()) m.load.ignore_columns.push_back(trim(name));
  return m;
}

void DatasetManifest::write(std::ostream& out) const {
  out << "name = " << name << '\n';
  out << "csv = " << csv.string() << '\n';
  out << "label_column = " << load.label_column << '\n';
  if (!load.positive_label.empty()) out << "positive_label = " << load.positive_label << '\n';
  out << "collapse_largest_negative = " << (load.collapse_largest_negative ? "true" : "false") << '\n';
  std::string categorical;
  std::string numeric;
  for (const auto& [name, kind] : load.kind_overrides) {
    auto& target = kind == ColumnKind::categorical ? categorical : numeric;
    if (!target.empty()) target += ",";
    target += name;
  }
  if (!categorical.empty()) out << "categorical = " << categorical << '\n';
  if (!numeric.empty()) out << "numeric = " << numeric << '\n';
  std::string ignore;
  for (const auto& name : load.ignore_columns) ignore += (ignore.empty() ? "" : ",") + name;
  if (!ignore.empty()) out << "ignore = " << ignore << '\n';
}

Preprocessor Preprocessor::fit(const RawTable& train, const PreprocessPolicy& policy) {
  if (train.size() == 0) fail(ErrorKind::degenerate_data, "preprocess: empty training set");
  Preprocessor p;
  p.standardize_ = policy.standardize;
  for (std::size_t c = 0; c < train.columns.size(); ++c) {
    Column col;
    col.info = train.columns[c];
    if (col.info.kind == ColumnKind::numeric) {
      std::vector<double> present;
      for (const auto& row : train.rows)
        if (row[c]) present.push_back(parse_double(*row[c]));
      col.fill_value = median_of(present);
      if (policy.standardize) {
        const double n = static_cast<double>(train.size());
        double sum = 0.0;
        for (const auto& row : train.rows) sum += row[c] ? parse_double(*row[c]) : col.fill_value;
        col.mean = sum / n;
        double ss = 0.0;
        for (const auto& row : train.rows) {
          double v = (row[c] ? parse_double(*row[c]) : col.fill_value) - col.mean;
          ss += v * v;
        }
        double sd = train.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        col.scale = sd > 0.0 ? sd : 1.0;
      }
      p.feature_names_.push_back(col.info.name);
      p.scaled_.push_back(policy.standardize);
    } else {
      std::map<std::string, std::size_t> counts;
      for (const auto& row : train.rows)
        if (row[c]) ++counts[*row[c]];
      std::size_t best = 0;
      for (const auto& [level, count] : counts) {
        col.levels.push_back(level);  // std::map keeps levels sorted
        if (count > best) {
          best = count;
          col.fill_level = level;
        }
      }
      for (const auto& level : col.levels) {
        p.feature_names_.push_back(col.info.name + "=" + level);
        p.scaled_.push_back(false);
      }
    }
    p.columns_.push_back(std::move(col));
  }
  return p;
}

Dataset Preprocessor::apply(const RawTable& table) const {
  if (table.columns.size() != columns_.size())
    fail(ErrorKind::schema, "preprocess: expected " + std::to_string(columns_.size()) + " attribute columns, found " +
                                std::to_string(table.columns.size()));
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (table.columns[c].name != columns_[c].info.name)
      fail(ErrorKind::schema, "preprocess: column " + std::to_string(c) + " is '" + table.columns[c].name +
                                  "', expected '" + columns_[c].info.name + "'");
  }

  Dataset out;
  const auto m = static_cast<Eigen::Index>(table.size());
  out.x = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(feature_names_.size()));
  out.y.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) out.y(i) = table.labels[static_cast<std::size_t>(i)];
  out.ids = table.ids;
  out.feature_names = feature_names_;
  out.scaled = scaled_;

  Eigen::Index j = 0;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& col = columns_[c];
    if (col.info.kind == ColumnKind::numeric) {
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto& cell = table.rows[static_cast<std::size_t>(i)][c];
        double v = cell ? parse_double(*cell) : col.fill_value;
        out.x(i, j) = (v - col.mean) / col.scale;
      }
      ++j;
    } else {
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto& cell = table.rows[static_cast<std::size_t>(i)][c];
        const std::string& level = cell ? *cell : col.fill_level;
        auto it = std::lower_bound(col.levels.begin(), col.levels.end(), level);
        // Levels unseen in training keep an all-zero dummy block.
        if (it != col.levels.end() && *it == level) out.x(i, j + (it - col.levels.begin())) = 1.0;
      }
      j += static_cast<Eigen::Index>(col.levels.size());
    }
  }
  return out;
}

void Preprocessor::save(std::ostream& out) const {
  KeyValueFile kv;
  kv.set("format", "ebbsvm-preprocessor 1");
  kv.set("standardize", standardize_ ? "true" : "false");
  kv.set("columns", std::to_string(columns_.size()));
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& col = columns_[c];
    const std::string prefix = "column." + std::to_string(c) + ".";
    kv.set(prefix + "name", col.info.name);
    if (col.info.kind == ColumnKind::numeric) {
      kv.set(prefix + "kind", "numeric");
      kv.set(prefix + "fill", format_hex(col.fill_value));
      kv.set(prefix + "mean", format_hex(col.mean));
      kv.set(prefix + "scale", format_hex(col.scale));
    } else {
      kv.set(prefix + "kind", "categorical");
      kv.set(prefix + "fill", col.fill_level);
      kv.set(prefix + "levels", std::to_string(col.levels.size()));
      for (std::size_t l = 0; l < col.levels.size(); ++l)
        kv.set(prefix + "level." + std::to_string(l), col.levels[l]);
    }
  }
  kv.write(out);
}

Preprocessor Preprocessor::load(std::istream& in) {
  auto kv = KeyValueFile::parse(in, "preprocessor");
  if (kv.get("format") != "ebbsvm-preprocessor 1") fail(ErrorKind::format, "unsupported preprocessor format");
  Preprocessor p;
  p.standardize_ = parse_bool(kv.get("standardize"));
  auto count = kv.get_u64("columns");
  for (std::size_t c = 0; c < count; ++c) {
    const std::string prefix = "column." + std::to_string(c) + ".";
    Column col;
    col.info.name = kv.get(prefix + "name");
    if (kv.get(prefix + "kind") == "numeric") {
      col.info.kind = ColumnKind::numeric;
      col.fill_value = kv.get_double(prefix + "fill");
      col.mean = kv.get_double(prefix + "mean");
      col.scale = kv.get_double(prefix + "scale");
      p.feature_names_.push_back(col.info.name);
      p.scaled_.push_back(p.standardize_);
    } else {
      col.info.kind = ColumnKind::categorical;
      col.fill_level = kv.get(prefix + "fill");
      auto levels = kv.get_u64(prefix + "levels");
      for (std::size_t l = 0; l < levels; ++l) {
        col.levels.push_back(kv.get(prefix + "level." + std::to_string(l)));
        p.feature_names_.push_back(col.info.name + "=" + col.levels.back());
        p.scaled_.push_back(false);
      }
    }
    p.columns_.push_back(std::move(col));
  }
  return p;
}

std::pair<Dataset, Dataset> preprocess(const RawTable& train, const RawTable& other, const PreprocessPolicy& policy) {
  if (train.columns.size() != other.columns.size())
    fail(ErrorKind::schema, "preprocess: training and other tables have different column counts");
  for (std::size_t c = 0; c < train.columns.size(); ++c)
    if (train.columns[c].name != other.columns[c].name)
      fail(ErrorKind::schema, "preprocess: column '" + train.columns[c].name + "' does not match '" +
                                  other.columns[c].name + "'");
  // Column kinds are taken from the training table so both sides encode alike.
  RawTable aligned = other;
  aligned.columns = train.columns;
  auto p = Preprocessor::fit(train, policy);
  return {p.apply(train), p.apply(aligned)};
}

std::pair<RawTable, RawTable> split_outer(const RawTable& table, double validation_fraction, std::uint64_t seed,
                                          bool stratify) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    fail(ErrorKind::invalid_argument, "split_outer: validation fraction must lie in (0, 1)");
  const std::size_t m = table.size();
  if (m < 2 || !table.labeled()) fail(ErrorKind::degenerate_data, "split_outer: need at least 2 labeled rows");
  const auto n_validation = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(m)));
  if (n_validation == 0 || n_validation == m)
    fail(ErrorKind::invalid_argument, "split_outer: fraction leaves one side empty");

  Rng rng(seed);
  std::vector<std::size_t> validation;
  if (!stratify) {
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
    validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_validation));
  } else {
    // Largest-remainder allocation of the validation quota across the two classes.
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < m; ++i) (table.labels[i] == 1 ? pos : neg).push_back(i);
    auto take_pos = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(pos.size())));
    take_pos = std::min({take_pos, pos.size(), n_validation});
    std::size_t take_neg = std::min(n_validation - take_pos, neg.size());
    take_pos = n_validation - take_neg;
    rng.shuffle(std::span(pos));
    rng.shuffle(std::span(neg));
    validation.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(take_pos));
    validation.insert(validation.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(take_neg));
  }
  std::sort(validation.begin(), validation.end());
  std::vector<std::size_t> training;
  training.reserve(m - validation.size());
  std::size_t v = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (v < validation.size() && validation[v] == i)
      ++v;
    else
      training.push_back(i);
  }
  return {table.subset(training), table.subset(validation)};
}

std::size_t BootstrapSample::unique_count() const {
  std::set<std::size_t> unique(in_bag.begin(), in_bag.end());
  return unique.size();
}

BootstrapSample bootstrap_sample(std::size_t training_size, std::uint64_t seed) {
  if (training_size == 0) fail(ErrorKind::degenerate_data, "bootstrap_sample: empty training set");
  Rng rng(seed);
  BootstrapSample sample;
  sample.seed = seed;
  sample.in_bag.resize(training_size);
  std::vector<char> drawn(training_size, 0);
  for (auto& slot : sample.in_bag) {
    slot = rng.uniform_index(training_size);
    drawn[slot] = 1;
  }
  for (std::size_t i = 0; i < training_size; ++i)
    if (!drawn[i]) sample.out_of_bag.push_back(i);
  return sample;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t m, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > m) fail(ErrorKind::invalid_argument, "kfold_partition: need 2 <= k <= m");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> folds(k);
  const double per_fold = static_cast<double>(m) / static_cast<double>(k);
  for (std::size_t f = 0; f < k; ++f) {
    auto a = static_cast<std::size_t>(std::llround(static_cast<double>(f) * per_fold));
    auto b = static_cast<std::size_t>(std::llround(static_cast<double>(f + 1) * per_fold));
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(a), order.begin() + static_cast<std::ptrdiff_t>(b));
    std::sort(folds[f].begin(), folds[f].end());
  }
  return folds;
}

ColumnScaling column_scaling(const Dataset& data, std::span<const std::size_t> positions) {
  const auto n = data.cols();
  ColumnScaling s{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
  const double count = static_cast<double>(positions.size());
  if (positions.empty()) return s;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!data.scaled.empty() && !data.scaled[static_cast<std::size_t>(j)]) continue;
    double sum = 0.0;
    for (auto p : positions) sum += data.x(static_cast<Eigen::Index>(p), j);
    double mean = sum / count;
    double ss = 0.0;
    for (auto p : positions) {
      double d = data.x(static_cast<Eigen::Index>(p), j) - mean;
      ss += d * d;
    }
    double sd = positions.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
    s.mean(j) = mean;
    s.scale(j) = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

}  // namespace ebbsvm
