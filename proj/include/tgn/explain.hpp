#pragma once

#include "tgn/dataset.hpp"
#include "tgn/model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tgn {

/// Decomposition of one prediction: output = rho0 + sum_k contributions.row(k).
struct AttributionReport {
  Vector record;  // scaled
  MaskVector mask;
  Vector rho0;           // C
  Matrix contributions;  // M x C
  Vector output;         // C, pre-softmax for classification
  TaskKind task = TaskKind::Regression;
  std::optional<Index> predicted_class;
  Vector probabilities;  // softmax of output, classification only
  std::vector<std::string> attribute_names;
  std::vector<double> class_values;
};

AttributionReport attribution_report(const ModelParams& params, const Vector& record,
                                     const MaskVector& mask);

// Largest |output - rho0 - sum_k rho_k| / max(1, |output|) over the report's classes.
double local_accuracy_residual(const AttributionReport& report);

struct AxiomReport {
  Index records = 0;
  Index masked_cells = 0;
  double max_local_accuracy_residual = 0.0;
  // Masked attributes whose contribution is not exactly zero (any class).
  Index missingness_violations = 0;
  // Output of the all-missing record compared bitwise with rho0.
  bool all_missing_equals_rho0 = true;

  bool passed(double tolerance) const {
    return missingness_violations == 0 && all_missing_equals_rho0 &&
           max_local_accuracy_residual <= tolerance;
  }
};

// `scaled` is a table already passed through the model's scaler.
AxiomReport verify_axioms(const ModelParams& params, const Table& scaled);

struct SymmetryReport {
  double max_output_difference = 0.0;
  double max_contribution_difference = 0.0;  // after mapping attributes back
};

// Predicts with the original model and with a model whose attribute storage is
// reordered by `perm` on equally reordered records.
SymmetryReport check_permutation_symmetry(const ModelParams& params, const Table& scaled,
                                          std::span<const Index> perm);

// ---- Consistency census -----------------------------------------------------

enum class AuditMode { Conditional, Implication };

std::string to_string(AuditMode mode);
AuditMode audit_mode_from_string(const std::string& name);

/// Which masked variants z of a record x the antecedent is checked on.
/// With samples = 0 the set is {x}; otherwise x plus `samples` variants where
/// each present attribute is dropped with probability `missing_p`. Variants
/// are drawn per record from a stream seeded by (seed, record index), so a
/// larger sample count yields a superset.
struct ZPolicy {
  Index samples = 0;
  double missing_p = 0.5;
  std::uint64_t seed = 0;
};

struct AuditOptions {
  ZPolicy z;
  // Compares every class output with itself (f' = f) under the same enumeration.
  bool self_pairing = false;
  int workers = 1;
};

struct ConsistencyReport {
  Index records = 0;
  Index attributes = 0;
  Index class_pairs = 0;  // C(C-1) ordered pairs
  Index z_samples = 0;
  std::uint64_t total = 0;
  std::uint64_t antecedent_true = 0;
  std::uint64_t consequent_ok = 0;  // among antecedent-true conditions

  // A census with no antecedent-true condition is vacuously met.
  double met_conditional() const;
  double met_implication() const;
  double met(AuditMode mode) const {
    return mode == AuditMode::Conditional ? met_conditional() : met_implication();
  }
};

// Conditions are (record x, attribute k, ordered class pair (c, c')). The
// antecedent holds when f_c'(z) - f_c'(z/k) >= f_c(z) - f_c(z/k) for every z
// in the z-set; the consequent is rho_{c',k}(x) >= rho_{c,k}(x). Outputs are
// pre-softmax. `scaled` is a table already passed through the model's scaler.
ConsistencyReport consistency_audit(const ModelParams& params, const Table& scaled,
                                    const AuditOptions& options = {});

// Tab-separated header line and one value line.
std::string format_audit_report(const ConsistencyReport& report);

// ---- Contribution grid ------------------------------------------------------

// Writes rows x cols contributions for one class to `csv_path` and a signed
// colour image beside it (same stem, .ppm): red for negative, blue for
// positive, intensity relative to the largest magnitude.
Matrix contribution_grid(const AttributionReport& report, Index rows, Index cols, Index class_index);
void export_contribution_grid(const AttributionReport& report, Index rows, Index cols,
                              Index class_index, const std::string& csv_path);

}  // namespace tgn
