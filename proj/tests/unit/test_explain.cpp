#include <doctest.h>

#include "helpers.hpp"
#include "tgn/explain.hpp"

#include <fstream>
#include <sstream>

using namespace tgn;

namespace {

ModelParams classifier(Index m, Index classes, std::uint64_t seed, bool inflow = false) {
  ModelSpec s;
  s.attributes = m;
  s.encoding = EncodingSpec::one_hot(m);
  s.graphs = 2;
  s.distance_hidden = {6, 4};
  s.filters = 2;
  s.filter_hidden = {5};
  s.outputs = classes;
  if (inflow) s.node_features = {NodeFeature::SumOutflow, NodeFeature::SumInflow};
  ModelParams p = init_model(s, seed);
  p.rho0 = testing::random_matrix(1, classes, mix_seed(seed, 5));
  p.info.task = TaskKind::Classification;
  for (Index c = 0; c < classes; ++c) p.info.class_values.push_back(static_cast<double>(c));
  for (Index k = 0; k < m; ++k) p.info.attribute_names.push_back("a" + std::to_string(k));
  return p;
}

// Direct count over (record, attribute, ordered class pair) using only x and x/k.
ConsistencyReport brute_force_census(const ModelParams& p, const Table& t) {
  ConsistencyReport r;
  const Index m = t.attributes();
  const Index cc = p.spec.outputs;
  for (Index i = 0; i < t.rows(); ++i) {
    const Vector x = t.values.row(i).transpose();
    const MaskVector mask = t.mask.row(i).transpose();
    const Prediction full = predict_reference(p, x, mask);
    for (Index k = 0; k < m; ++k) {
      Vector xk = x;
      MaskVector mk = mask;
      xk[k] = 0.0;
      mk[k] = false;
      const Prediction drop = predict_reference(p, xk, mk);
      for (Index c = 0; c < cc; ++c) {
        for (Index cp = 0; cp < cc; ++cp) {
          if (c == cp) continue;
          ++r.total;
          const double dcp = full.output[cp] - drop.output[cp];
          const double dc = full.output[c] - drop.output[c];
          if (dcp < dc) continue;
          ++r.antecedent_true;
          if (full.contributions(k, cp) >= full.contributions(k, c)) ++r.consequent_ok;
        }
      }
    }
  }
  return r;
}

}  // namespace

TEST_SUITE("explain") {

TEST_CASE("attribution report decomposes the output") {
  const ModelParams p = classifier(5, 3, 1);
  const Table t = testing::random_table(1, 5, 2, 0.7);
  const AttributionReport r = attribution_report(p, t.values.row(0).transpose(), t.mask.row(0).transpose());
  CHECK(local_accuracy_residual(r) < 1e-12);
  REQUIRE(r.predicted_class.has_value());
  Index best = 0;
  r.output.maxCoeff(&best);
  CHECK(*r.predicted_class == best);
  CHECK(r.probabilities.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.attribute_names.size() == 5);
  CHECK(r.rho0 == p.rho0.row(0).transpose());
}

TEST_CASE("axioms hold on random models") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const ModelParams p = classifier(6, 3, seed, seed % 2 == 0);
    const Table t = testing::random_table(25, 6, mix_seed(seed, 8), 0.6);
    const AxiomReport r = verify_axioms(p, t);
    CHECK(r.records == 25);
    CHECK(r.masked_cells == 25 * 6 - t.mask.count());
    CHECK(r.missingness_violations == 0);
    CHECK(r.all_missing_equals_rho0);
    CHECK(r.max_local_accuracy_residual < 1e-12);
    CHECK(r.passed(1e-10));
  }
}

TEST_CASE("a filter bias breaks the missingness axiom") {
  ModelParams p = classifier(4, 2, 3);
  p.filters[0].layers.back().bias = Matrix::Constant(1, 2, 0.25);
  p.filters[0].bias_mode = BiasMode::Learned;
  const Table t = testing::random_table(10, 4, 4, 0.5);
  bool detected = false;
  try {
    const AxiomReport r = verify_axioms(p, t);
    detected = r.missingness_violations > 0 && !r.all_missing_equals_rho0 && !r.passed(1e-10);
  } catch (const ConfigError&) {
    detected = true;
  }
  CHECK(detected);
}

TEST_CASE("permutation symmetry report") {
  const ModelParams p = classifier(5, 2, 6, true);
  const Table t = testing::random_table(12, 5, 7, 0.8);
  const std::vector<Index> perm{4, 2, 0, 1, 3};
  const SymmetryReport s = check_permutation_symmetry(p, t, perm);
  CHECK(s.max_output_difference < 1e-12);
  CHECK(s.max_contribution_difference < 1e-12);
}

TEST_CASE("census matches a brute-force count and obeys the count law") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const ModelParams p = classifier(5, 4, seed, seed == 2);
    const Table t = testing::random_table(15, 5, mix_seed(seed, 9), 0.8);
    const ConsistencyReport a = consistency_audit(p, t);
    const ConsistencyReport b = brute_force_census(p, t);
    CHECK(a.total == 15u * 5u * 12u);
    CHECK(a.class_pairs == 12);
    CHECK(a.total == b.total);
    CHECK(a.antecedent_true == b.antecedent_true);
    CHECK(a.consequent_ok == b.consequent_ok);
    AuditOptions two;
    two.workers = 2;
    const ConsistencyReport c = consistency_audit(p, t, two);
    CHECK(c.antecedent_true == a.antecedent_true);
    CHECK(c.consequent_ok == a.consequent_ok);
  }
}

TEST_CASE("self-pairing and zero weights give full consistency") {
  const ModelParams p = classifier(4, 3, 11);
  const Table t = testing::random_table(10, 4, 12, 0.9);
  AuditOptions self;
  self.self_pairing = true;
  const ConsistencyReport s = consistency_audit(p, t, self);
  CHECK(s.antecedent_true == s.total);
  CHECK(s.met_conditional() == 1.0);
  CHECK(s.met_implication() == 1.0);

  ModelParams z = p;
  for (Matrix* m : z.parameters()) m->setZero();
  z.rho0 = p.rho0;
  const ConsistencyReport r = consistency_audit(z, t);
  CHECK(r.met_conditional() == 1.0);
  CHECK(r.met_implication() == 1.0);
}

TEST_CASE("vacuous and implication rates") {
  ConsistencyReport r;
  CHECK(r.met_conditional() == 1.0);
  r.total = 10;
  r.antecedent_true = 4;
  r.consequent_ok = 3;
  CHECK(r.met_conditional() == 0.75);
  CHECK(r.met_implication() == 0.9);
  CHECK(r.met(AuditMode::Implication) == 0.9);
  CHECK(audit_mode_from_string("implication") == AuditMode::Implication);
  CHECK_THROWS_AS(audit_mode_from_string("strict"), ConfigError);
  const std::string text = format_audit_report(r);
  CHECK(text.rfind("records\tattributes\tclass_pairs\ttotal", 0) == 0);
  CHECK(text.find("\t0.75\t0.9") != std::string::npos);
}

TEST_CASE("larger z-sets only remove antecedents") {
  const ModelParams p = classifier(6, 3, 21);
  const Table t = testing::random_table(12, 6, 22, 0.9);
  std::uint64_t previous = std::numeric_limits<std::uint64_t>::max();
  for (Index samples : {0, 2, 8, 16}) {
    AuditOptions o;
    o.z.samples = samples;
    o.z.seed = 5;
    const ConsistencyReport r = consistency_audit(p, t, o);
    CHECK(r.antecedent_true <= previous);
    previous = r.antecedent_true;
  }
}

TEST_CASE("audit refuses regression and single-class models") {
  ModelParams p = classifier(3, 2, 31);
  const Table t = testing::random_table(4, 3, 32);
  ModelParams reg = p;
  reg.info.task = TaskKind::Regression;
  CHECK_THROWS_AS(consistency_audit(reg, t), AuditError);
  const Table empty = t.subset(std::vector<Index>{});
  CHECK_THROWS_AS(consistency_audit(p, empty), AuditError);
  ModelParams one = classifier(3, 1, 33);
  CHECK_THROWS_AS(consistency_audit(one, t), AuditError);
}

TEST_CASE("grid values plus rho0 give the class logit") {
  const ModelParams p = classifier(6, 3, 43, true);
  const Table t = testing::random_table(5, 6, 44, 0.7);
  for (Index i = 0; i < t.rows(); ++i) {
    const AttributionReport r = attribution_report(p, t.values.row(i).transpose(), t.mask.row(i).transpose());
    for (Index c = 0; c < 3; ++c) {
      const double total = contribution_grid(r, 3, 2, c).sum() + r.rho0[c];
      CHECK(std::abs(total - r.output[c]) <= 1e-9 * std::max(1.0, std::abs(r.output[c])));
    }
  }
  const AttributionReport empty =
      attribution_report(p, Vector::Zero(6), MaskVector::Constant(6, false));
  CHECK((contribution_grid(empty, 2, 3, 1).array() == 0.0).all());
}

TEST_CASE("contribution grid export reconstructs the contributions") {
  testing::TempDir dir;
  const ModelParams p = classifier(6, 2, 41);
  const Table t = testing::random_table(1, 6, 42);
  const AttributionReport r = attribution_report(p, t.values.row(0).transpose(), t.mask.row(0).transpose());
  export_contribution_grid(r, 2, 3, 1, dir.file("g.csv"));
  std::ifstream csv(dir.file("g.csv"));
  std::string line;
  Index row = 0;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string cell;
    Index col = 0;
    while (std::getline(ss, cell, ',')) {
      CHECK(std::stod(cell) == r.contributions(row * 3 + col, 1));
      ++col;
    }
    CHECK(col == 3);
    ++row;
  }
  CHECK(row == 2);
  std::ifstream ppm(dir.file("g.ppm"));
  std::string magic;
  Index w = 0, h = 0, depth = 0;
  ppm >> magic >> w >> h >> depth;
  CHECK(magic == "P3");
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(depth == 255);
  CHECK_THROWS_AS(contribution_grid(r, 4, 2, 0), ShapeError);
  CHECK_THROWS_AS(contribution_grid(r, 2, 3, 2), ShapeError);
}

}  // TEST_SUITE
