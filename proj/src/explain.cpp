#include "tgn/explain.hpp"

#include "tgn/parallel.hpp"
#include "tgn/random.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace tgn {

AttributionReport attribution_report(const ModelParams& params, const Vector& record,
                                     const MaskVector& mask) {
  Prediction p = predict(params, record, mask);
  AttributionReport r;
  r.record = record;
  r.mask = mask;
  r.rho0 = std::move(p.rho0);
  r.contributions = std::move(p.contributions);
  r.output = std::move(p.output);
  r.task = params.info.task;
  r.attribute_names = params.info.attribute_names;
  r.class_values = params.info.class_values;
  if (r.task == TaskKind::Classification) {
    r.probabilities = softmax(r.output);
    Index arg = 0;
    r.probabilities.maxCoeff(&arg);
    r.predicted_class = arg;
  }
  return r;
}

double local_accuracy_residual(const AttributionReport& report) {
  const Vector rebuilt = report.rho0 + report.contributions.colwise().sum().transpose();
  double worst = 0.0;
  for (Index c = 0; c < report.output.size(); ++c) {
    const double scale = std::max(1.0, std::abs(report.output[c]));
    worst = std::max(worst, std::abs(report.output[c] - rebuilt[c]) / scale);
  }
  return worst;
}

AxiomReport verify_axioms(const ModelParams& params, const Table& scaled) {
  const Index m = params.spec.attributes;
  if (scaled.attributes() != m) throw ShapeError("verify_axioms: table width does not match the model");
  AxiomReport rep;
  rep.records = scaled.rows();
  const auto preds = predict_rows(params, scaled.values, scaled.mask);
  for (Index i = 0; i < scaled.rows(); ++i) {
    const Prediction& p = preds[static_cast<std::size_t>(i)];
    const Vector rebuilt = p.rho0 + p.contributions.colwise().sum().transpose();
    for (Index c = 0; c < p.output.size(); ++c) {
      const double scale = std::max(1.0, std::abs(p.output[c]));
      rep.max_local_accuracy_residual =
          std::max(rep.max_local_accuracy_residual, std::abs(p.output[c] - rebuilt[c]) / scale);
    }
    for (Index k = 0; k < m; ++k) {
      if (scaled.mask(i, k)) continue;
      ++rep.masked_cells;
      if ((p.contributions.row(k).array() != 0.0).any()) ++rep.missingness_violations;
    }
  }
  const Prediction empty = predict(params, Vector::Zero(m), MaskVector::Constant(m, false));
  rep.all_missing_equals_rho0 = (empty.output.array() == params.rho0.row(0).transpose().array()).all() &&
                                (empty.contributions.array() == 0.0).all();
  return rep;
}

SymmetryReport check_permutation_symmetry(const ModelParams& params, const Table& scaled,
                                          std::span<const Index> perm) {
  const Index m = params.spec.attributes;
  const ModelParams permuted = permute_attributes(params, perm);
  Matrix values(scaled.rows(), m);
  MaskMatrix mask(scaled.rows(), m);
  for (Index p = 0; p < m; ++p) {
    values.col(p) = scaled.values.col(perm[static_cast<std::size_t>(p)]);
    mask.col(p) = scaled.mask.col(perm[static_cast<std::size_t>(p)]);
  }
  const auto a = predict_rows(params, scaled.values, scaled.mask);
  const auto b = predict_rows(permuted, values, mask);
  SymmetryReport rep;
  for (std::size_t i = 0; i < a.size(); ++i) {
    rep.max_output_difference =
        std::max(rep.max_output_difference, (a[i].output - b[i].output).cwiseAbs().maxCoeff());
    for (Index p = 0; p < m; ++p) {
      const double d = (a[i].contributions.row(perm[static_cast<std::size_t>(p)]) -
                        b[i].contributions.row(p))
                           .cwiseAbs()
                           .maxCoeff();
      rep.max_contribution_difference = std::max(rep.max_contribution_difference, d);
    }
  }
  return rep;
}

// ---- Consistency census -----------------------------------------------------

std::string to_string(AuditMode mode) {
  return mode == AuditMode::Conditional ? "conditional" : "implication";
}

AuditMode audit_mode_from_string(const std::string& name) {
  if (name == "conditional") return AuditMode::Conditional;
  if (name == "implication") return AuditMode::Implication;
  throw ConfigError("unknown audit mode '" + name + "' (expected conditional or implication)");
}

double ConsistencyReport::met_conditional() const {
  if (antecedent_true == 0) return 1.0;
  return static_cast<double>(consequent_ok) / static_cast<double>(antecedent_true);
}

double ConsistencyReport::met_implication() const {
  if (total == 0) return 1.0;
  return static_cast<double>(total - antecedent_true + consequent_ok) / static_cast<double>(total);
}

namespace {

struct Counts {
  std::uint64_t total = 0;
  std::uint64_t antecedent_true = 0;
  std::uint64_t consequent_ok = 0;
};

// Outputs at z (row 0) and at z/k (row k + 1).
Matrix drop_one_outputs(const ModelParams& params, const Vector& z, const MaskVector& mask) {
  const Index m = z.size();
  Matrix values(m + 1, m);
  MaskMatrix masks(m + 1, m);
  for (Index r = 0; r <= m; ++r) {
    values.row(r) = z.transpose();
    masks.row(r) = mask.transpose();
  }
  for (Index k = 0; k < m; ++k) {
    masks(k + 1, k) = false;
    values(k + 1, k) = 0.0;
  }
  const auto preds = predict_rows(params, values, masks);
  Matrix out(m + 1, params.spec.outputs);
  for (Index r = 0; r <= m; ++r) out.row(r) = preds[static_cast<std::size_t>(r)].output.transpose();
  // z/k is z itself when k is already missing.
  for (Index k = 0; k < m; ++k) {
    if (!mask[k]) out.row(k + 1) = out.row(0);
  }
  return out;
}

Counts audit_record(const ModelParams& params, const Vector& x, const MaskVector& mask, Index record,
                    const AuditOptions& opt) {
  const Index m = params.spec.attributes;
  const Index c_count = params.spec.outputs;
  const Prediction px = predict(params, x, mask);

  // dominated(k, c', c) stays true while f_c' - f_c'(./k) >= f_c - f_c(./k) on every z.
  std::vector<char> holds(static_cast<std::size_t>(m * c_count * c_count), 1);
  const auto at = [&](Index k, Index cp, Index c) {
    return static_cast<std::size_t>((k * c_count + cp) * c_count + c);
  };
  const auto fold = [&](const Matrix& outs) {
    for (Index k = 0; k < m; ++k) {
      const RowVector diff = outs.row(0) - outs.row(k + 1);
      for (Index cp = 0; cp < c_count; ++cp) {
        for (Index c = 0; c < c_count; ++c) {
          if (!(diff[cp] >= diff[c])) holds[at(k, cp, c)] = 0;
        }
      }
    }
  };
  fold(drop_one_outputs(params, x, mask));
  if (opt.z.samples > 0) {
    Rng rng(mix_seed(opt.z.seed, static_cast<std::uint64_t>(record)));
    for (Index s = 0; s < opt.z.samples; ++s) {
      Vector z = x;
      MaskVector zm = mask;
      for (Index k = 0; k < m; ++k) {
        const bool drop = rng.bernoulli(opt.z.missing_p);
        if (drop && zm[k]) {
          zm[k] = false;
          z[k] = 0.0;
        }
      }
      fold(drop_one_outputs(params, z, zm));
    }
  }

  Counts counts;
  for (Index k = 0; k < m; ++k) {
    for (Index c = 0; c < c_count; ++c) {
      for (Index cp = 0; cp < c_count; ++cp) {
        if (cp == c) continue;
        const Index other = opt.self_pairing ? c : cp;
        ++counts.total;
        if (!holds[at(k, other, c)]) continue;
        ++counts.antecedent_true;
        if (px.contributions(k, other) >= px.contributions(k, c)) ++counts.consequent_ok;
      }
    }
  }
  return counts;
}

}  // namespace

ConsistencyReport consistency_audit(const ModelParams& params, const Table& scaled,
                                    const AuditOptions& options) {
  if (params.info.task != TaskKind::Classification) {
    throw AuditError("consistency audit needs a classification model");
  }
  const Index c_count = params.spec.outputs;
  if (c_count < 2) throw AuditError("consistency audit needs at least two classes");
  if (scaled.rows() < 1) throw AuditError("consistency audit needs at least one record");
  if (scaled.attributes() != params.spec.attributes) {
    throw ShapeError("consistency audit: table width does not match the model");
  }
  if (options.z.samples < 0) throw ConfigError("z-set sample count must be >= 0");
  if (!(options.z.missing_p >= 0.0 && options.z.missing_p <= 1.0)) {
    throw ConfigError("z-set missing probability must lie in [0, 1]");
  }

  std::vector<Counts> per_record(static_cast<std::size_t>(scaled.rows()));
  parallel_for(per_record.size(), options.workers, [&](std::size_t i) {
    const Index r = static_cast<Index>(i);
    per_record[i] = audit_record(params, scaled.values.row(r).transpose(),
                                 scaled.mask.row(r).transpose(), r, options);
  });

  ConsistencyReport rep;
  rep.records = scaled.rows();
  rep.attributes = params.spec.attributes;
  rep.class_pairs = c_count * (c_count - 1);
  rep.z_samples = options.z.samples;
  for (const Counts& c : per_record) {
    rep.total += c.total;
    rep.antecedent_true += c.antecedent_true;
    rep.consequent_ok += c.consequent_ok;
  }
  return rep;
}

std::string format_audit_report(const ConsistencyReport& r) {
  std::ostringstream os;
  os << "records\tattributes\tclass_pairs\ttotal\tantecedent_true\tconsequent_ok\t"
        "met_conditional\tmet_implication\n";
  os << std::setprecision(17) << r.records << '\t' << r.attributes << '\t' << r.class_pairs << '\t'
     << r.total << '\t' << r.antecedent_true << '\t' << r.consequent_ok << '\t' << r.met_conditional()
     << '\t' << r.met_implication() << '\n';
  return os.str();
}

// ---- Contribution grid ------------------------------------------------------

Matrix contribution_grid(const AttributionReport& report, Index rows, Index cols, Index class_index) {
  const Index m = report.contributions.rows();
  if (rows < 1 || cols < 1 || rows * cols != m) {
    throw ShapeError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " does not hold " +
                     std::to_string(m) + " attributes");
  }
  if (class_index < 0 || class_index >= report.contributions.cols()) {
    throw ShapeError("class index " + std::to_string(class_index) + " out of range");
  }
  Matrix grid(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) grid(r, c) = report.contributions(r * cols + c, class_index);
  }
  return grid;
}

void export_contribution_grid(const AttributionReport& report, Index rows, Index cols,
                              Index class_index, const std::string& csv_path) {
  const Matrix grid = contribution_grid(report, rows, cols, class_index);
  std::ofstream csv(csv_path);
  if (!csv) throw Error("cannot write " + csv_path);
  csv << std::setprecision(17);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) csv << (c ? "," : "") << grid(r, c);
    csv << '\n';
  }

  std::filesystem::path img(csv_path);
  img.replace_extension(".ppm");
  std::ofstream ppm(img);
  if (!ppm) throw Error("cannot write " + img.string());
  const double peak = grid.cwiseAbs().maxCoeff();
  ppm << "P3\n" << cols << ' ' << rows << "\n255\n";
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const double v = peak > 0.0 ? grid(r, c) / peak : 0.0;
      const int red = v < 0.0 ? static_cast<int>(std::lround(-v * 255.0)) : 0;
      const int blue = v > 0.0 ? static_cast<int>(std::lround(v * 255.0)) : 0;
      ppm << red << " 0 " << blue << (c + 1 < cols ? " " : "\n");
    }
  }
}

}  // namespace tgn
