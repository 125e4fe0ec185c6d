#pragma once

#include "tgn/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tgn {

enum class TaskKind { Regression, Classification };

std::string to_string(TaskKind kind);
TaskKind task_from_string(const std::string& name);

/// Column-named numeric table with a presence mask.
///
/// `values(i, k)` is meaningless wherever `mask(i, k)` is false; scaled tables
/// store 0 there. For classification the target holds class indices into
/// `class_values`.
struct Table {
  std::vector<std::string> attribute_names;
  Matrix values;
  MaskMatrix mask;
  Vector target;
  TaskKind task = TaskKind::Regression;
  std::vector<double> class_values;  // sorted raw labels, classification only

  Index rows() const { return values.rows(); }
  Index attributes() const { return values.cols(); }
  Index classes() const { return static_cast<Index>(class_values.size()); }
  // Width of the model output: 1 for regression, C for classification.
  Index output_width() const { return task == TaskKind::Regression ? 1 : classes(); }
  Index label(Index row) const { return static_cast<Index>(target[row]); }

  Table subset(std::span<const Index> row_ids) const;
  void validate() const;
};

struct TableSchema {
  std::string target;
  TaskKind task = TaskKind::Regression;
  std::vector<std::string> missing_tokens{"", "NA", "NaN", "?"};
  char delimiter = ',';
};

Table load_table(const std::string& path, const TableSchema& schema);
Table parse_table(std::istream& in, const TableSchema& schema, const std::string& source = "<stream>");

// ---- Scaling ----------------------------------------------------------------

/// Per-attribute range fitted on present values only.
struct ScalerParams {
  Vector min;
  Vector max;
  std::vector<Index> present_count;  // 0 marks a degenerate (all-missing) column
  double epsilon = 1e-6;

  Index attributes() const { return min.size(); }
  bool fitted() const { return min.size() > 0; }
};

ScalerParams fit_scaler(const Table& table, double epsilon = 1e-6);

// eps + (1 - eps) * (x - min) / (max - min), clamped to [eps, 1]. Constant
// columns map to eps. Masked cells become 0.
Table apply_scaler(const Table& table, const ScalerParams& scaler);
double scale_value(const ScalerParams& scaler, Index attribute, double raw);

// ---- Splits and batches -----------------------------------------------------

struct SplitFractions {
  double train = 0.64;
  double validation = 0.16;
  double test = 0.20;
};

struct SplitIndices {
  std::vector<Index> train;
  std::vector<Index> validation;
  std::vector<Index> test;
};

struct Splits {
  Table train;
  Table validation;
  Table test;
};

// Seeded shuffle then contiguous slicing: test first, then validation, rest train.
SplitIndices split_indices(Index rows, std::uint64_t seed, const SplitFractions& fractions = {});
Splits split(const Table& table, std::uint64_t seed, const SplitFractions& fractions = {});

// Epoch-level shuffled index batches; the last batch may be short.
std::vector<std::vector<Index>> make_batches(Index rows, Index batch_size, std::uint64_t seed);

// ---- Encodings and missingness ---------------------------------------------

enum class EncodingKind { None, OneHot };

struct EncodingSpec {
  EncodingKind kind = EncodingKind::OneHot;
  Index width = 0;  // E

  static EncodingSpec none() { return {EncodingKind::None, 0}; }
  static EncodingSpec one_hot(Index attributes) { return {EncodingKind::OneHot, attributes}; }
  void validate(Index attributes) const;
};

std::string to_string(EncodingKind kind);
EncodingKind encoding_from_string(const std::string& name);

Vector one_hot(Index k, Index width);

// Presence mask where each cell is dropped independently with probability p.
MaskMatrix sample_missingness(Index rows, Index cols, double p, std::uint64_t seed);

// Logical AND of presence.
MaskMatrix combine_masks(const MaskMatrix& native, const MaskMatrix& sampled);

}  // namespace tgn
