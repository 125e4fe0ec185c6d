#include "tgn/dataset.hpp"

#include "tgn/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace tgn {

std::string to_string(TaskKind kind) {
  return kind == TaskKind::Regression ? "regression" : "classification";
}

TaskKind task_from_string(const std::string& name) {
  if (name == "regression") return TaskKind::Regression;
  if (name == "classification") return TaskKind::Classification;
  throw ConfigError("unknown task '" + name + "' (expected regression or classification)");
}

std::string to_string(EncodingKind kind) { return kind == EncodingKind::None ? "none" : "one-hot"; }

EncodingKind encoding_from_string(const std::string& name) {
  if (name == "none") return EncodingKind::None;
  if (name == "one-hot" || name == "onehot") return EncodingKind::OneHot;
  throw ConfigError("unknown encoding '" + name + "' (expected none or one-hot)");
}

Table Table::subset(std::span<const Index> row_ids) const {
  Table out;
  out.attribute_names = attribute_names;
  out.task = task;
  out.class_values = class_values;
  const Index n = static_cast<Index>(row_ids.size());
  out.values.resize(n, attributes());
  out.mask.resize(n, attributes());
  out.target.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Index r = row_ids[static_cast<std::size_t>(i)];
    if (r < 0 || r >= rows()) throw ShapeError("subset: row id out of range");
    out.values.row(i) = values.row(r);
    out.mask.row(i) = mask.row(r);
    out.target[i] = target[r];
  }
  return out;
}

void Table::validate() const {
  if (static_cast<Index>(attribute_names.size()) != attributes()) {
    throw ShapeError("table: attribute name count does not match columns");
  }
  if (mask.rows() != rows() || mask.cols() != attributes() || target.size() != rows()) {
    throw ShapeError("table: values, mask and target disagree in shape");
  }
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delimiter) {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

Table parse_table(std::istream& in, const TableSchema& schema, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line, schema.delimiter);
      break;
    }
  }
  if (header.empty()) throw IngestError(source + ": empty file");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);

  const auto target_it = std::find(header.begin(), header.end(), schema.target);
  if (target_it == header.end()) {
    throw IngestError(source + ": unknown target column '" + schema.target + "'");
  }
  const std::size_t target_col = static_cast<std::size_t>(target_it - header.begin());
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != target_col) names.push_back(header[c]);
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> present;
  std::vector<double> targets;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw IngestError(source + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    std::vector<double> row;
    std::vector<bool> ok;
    row.reserve(names.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      const bool missing = std::find(schema.missing_tokens.begin(), schema.missing_tokens.end(),
                                     f) != schema.missing_tokens.end();
      double v = 0.0;
      if (c == target_col) {
        if (missing || !parse_double(f, v)) {
          throw IngestError(source + ":" + std::to_string(line_no) + ": column " +
                            std::to_string(c + 1) + " ('" + header[c] +
                            "'): target must be numeric, got '" + f + "'");
        }
        targets.push_back(v);
        continue;
      }
      if (missing) {
        row.push_back(0.0);
        ok.push_back(false);
      } else if (parse_double(f, v)) {
        row.push_back(v);
        ok.push_back(true);
      } else {
        throw IngestError(source + ":" + std::to_string(line_no) + ": column " +
                          std::to_string(c + 1) + " ('" + header[c] + "'): non-numeric value '" +
                          f + "'");
      }
    }
    rows.push_back(std::move(row));
    present.push_back(std::move(ok));
  }
  if (rows.empty()) throw IngestError(source + ": no data rows");

  Table t;
  t.attribute_names = std::move(names);
  t.task = schema.task;
  const Index n = static_cast<Index>(rows.size());
  const Index m = static_cast<Index>(t.attribute_names.size());
  t.values.resize(n, m);
  t.mask.resize(n, m);
  t.target.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < m; ++k) {
      t.values(i, k) = rows[i][k];
      t.mask(i, k) = present[i][k];
    }
  }
  if (schema.task == TaskKind::Classification) {
    std::vector<double> labels = targets;
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (labels.size() < 2) throw IngestError(source + ": classification target has one class");
    t.class_values = labels;
    for (Index i = 0; i < n; ++i) {
      const auto it = std::lower_bound(labels.begin(), labels.end(), targets[i]);
      t.target[i] = static_cast<double>(it - labels.begin());
    }
  } else {
    for (Index i = 0; i < n; ++i) t.target[i] = targets[i];
  }
  return t;
}

Table load_table(const std::string& path, const TableSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IngestError(path + ": cannot open file");
  return parse_table(in, schema, path);
}

ScalerParams fit_scaler(const Table& table, double epsilon) {
  table.validate();
  ScalerParams s;
  s.epsilon = epsilon;
  const Index m = table.attributes();
  s.min = Vector::Zero(m);
  s.max = Vector::Zero(m);
  s.present_count.assign(static_cast<std::size_t>(m), 0);
  for (Index k = 0; k < m; ++k) {
    double lo = 0.0;
    double hi = 0.0;
    Index count = 0;
    for (Index i = 0; i < table.rows(); ++i) {
      if (!table.mask(i, k)) continue;
      const double v = table.values(i, k);
      if (count == 0) {
        lo = hi = v;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      ++count;
    }
    s.min[k] = lo;
    s.max[k] = hi;
    s.present_count[static_cast<std::size_t>(k)] = count;
  }
  return s;
}

double scale_value(const ScalerParams& scaler, Index k, double raw) {
  const double eps = scaler.epsilon;
  const double range = scaler.max[k] - scaler.min[k];
  if (!(range > 0.0)) return eps;
  const double scaled = eps + (1.0 - eps) * (raw - scaler.min[k]) / range;
  return std::clamp(scaled, eps, 1.0);
}

Table apply_scaler(const Table& table, const ScalerParams& scaler) {
  if (!scaler.fitted()) throw UsageError("apply_scaler: scaler has not been fitted");
  if (scaler.attributes() != table.attributes()) {
    throw UsageError("apply_scaler: scaler fitted on " + std::to_string(scaler.attributes()) +
                     " attributes, table has " + std::to_string(table.attributes()));
  }
  Table out = table;
  for (Index k = 0; k < table.attributes(); ++k) {
    for (Index i = 0; i < table.rows(); ++i) {
      out.values(i, k) = table.mask(i, k) ? scale_value(scaler, k, table.values(i, k)) : 0.0;
    }
  }
  return out;
}

SplitIndices split_indices(Index rows, std::uint64_t seed, const SplitFractions& f) {
  if (f.train < 0 || f.validation < 0 || f.test < 0 ||
      std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  if (rows < 5) throw ConfigError("split requires at least 5 rows");
  std::vector<Index> order(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto count = [rows](double frac) {
    return static_cast<Index>(std::floor(static_cast<double>(rows) * frac + 1e-9));
  };
  const Index n_test = count(f.test);
  const Index n_val = count(f.validation);
  SplitIndices out;
  out.test.assign(order.begin(), order.begin() + n_test);
  out.validation.assign(order.begin() + n_test, order.begin() + n_test + n_val);
  out.train.assign(order.begin() + n_test + n_val, order.end());
  return out;
}

Splits split(const Table& table, std::uint64_t seed, const SplitFractions& fractions) {
  const SplitIndices idx = split_indices(table.rows(), seed, fractions);
  return Splits{table.subset(idx.train), table.subset(idx.validation), table.subset(idx.test)};
}

std::vector<std::vector<Index>> make_batches(Index rows, Index batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<Index> order(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<Index>> batches;
  for (Index start = 0; start < rows; start += batch_size) {
    const Index end = std::min(rows, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

void EncodingSpec::validate(Index attributes) const {
  if (kind == EncodingKind::None && width != 0) throw ConfigError("encoding none requires E = 0");
  if (kind == EncodingKind::OneHot && width != attributes) {
    throw ConfigError("one-hot encoding requires E = M (" + std::to_string(attributes) + ")");
  }
}

Vector one_hot(Index k, Index width) {
  if (k < 0 || k >= width) {
    throw InputError("one_hot: index " + std::to_string(k) + " outside [0, " +
                     std::to_string(width) + ")");
  }
  Vector v = Vector::Zero(width);
  v[k] = 1.0;
  return v;
}

MaskMatrix sample_missingness(Index rows, Index cols, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("missingness probability must lie in [0, 1]");
  MaskMatrix present(rows, cols);
  Rng rng(seed);
  for (Index i = 0; i < rows; ++i) {
    for (Index k = 0; k < cols; ++k) present(i, k) = !rng.bernoulli(p);
  }
  return present;
}

MaskMatrix combine_masks(const MaskMatrix& native, const MaskMatrix& sampled) {
  if (native.rows() != sampled.rows() || native.cols() != sampled.cols()) {
    throw ShapeError("combine_masks: shape mismatch");
  }
  return (native.array() && sampled.array()).matrix();
}

}  // namespace tgn
