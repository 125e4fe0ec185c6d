#include <doctest.h>

#include "helpers.hpp"
#include "tgn/baseline.hpp"

#include <cmath>

using namespace tgn;

TEST_SUITE("baseline") {

TEST_CASE("layer shapes with biases") {
  DenseSpec s;
  s.attributes = 13;
  s.hidden = {24, 8};
  s.outputs = 1;
  const DenseParams p = init_dense(s, 3);
  REQUIRE(p.network.layers.size() == 3);
  CHECK(p.network.layers[0].weight.rows() == 13);
  CHECK(p.network.layers[0].weight.cols() == 24);
  CHECK(p.network.layers[1].weight.cols() == 8);
  CHECK(p.network.layers[2].weight.cols() == 1);
  for (const auto& l : p.network.layers) CHECK(l.bias.has_value());
  CHECK(p.parameter_count() == 13 * 24 + 24 + 24 * 8 + 8 + 8 + 1);
  CHECK(p.penalized() == std::vector<std::size_t>{0, 2, 4});

  DenseSpec bad = s;
  bad.hidden = {0};
  CHECK_THROWS_AS(init_dense(bad, 1), ConfigError);
}

TEST_CASE("hand-computed forward with masked input fed as zero") {
  DenseSpec s;
  s.attributes = 2;
  s.hidden = {1};
  DenseParams p = init_dense(s, 1);
  p.network.layers[0].weight << 1.0, 2.0;
  *p.network.layers[0].bias << 0.5;
  p.network.layers[1].weight << 3.0;
  *p.network.layers[1].bias << -1.0;
  Vector x(2);
  x << 0.2, 0.4;
  MaskVector m(2);
  m << true, true;
  CHECK(dense_predict(p, x, m)[0] == doctest::Approx(3.0 * std::tanh(1.5) - 1.0).epsilon(1e-14));
  m << true, false;
  CHECK(dense_predict(p, x, m)[0] == doctest::Approx(3.0 * std::tanh(0.7) - 1.0).epsilon(1e-14));
  Vector short_x(1);
  MaskVector short_m(1);
  CHECK_THROWS_AS(dense_predict(p, short_x, short_m), ShapeError);
}

TEST_CASE("gradients match finite differences") {
  DenseSpec s;
  s.attributes = 4;
  s.hidden = {5, 3};
  s.outputs = 3;
  DenseParams p = init_dense(s, 9);
  const Matrix x = testing::random_matrix(6, 4, 10, 1e-6, 1.0);
  const MaskMatrix mask = testing::random_mask(6, 4, 0.7, 11);
  const std::vector<Index> labels{0, 2, 1, 1, 0, 2};
  const Objective obj = [&](ad::Tape& tape, std::span<const ad::Var> v) {
    return ad::softmax_cross_entropy(dense_forward_batch(tape, p, v, x, mask), labels);
  };
  CHECK(finite_diff_check(obj, p.parameter_values(), 1e-6) < 1e-6);

  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Matrix& m : p.parameter_values()) vars.push_back(tape.variable(m));
  const Matrix batch = dense_forward_batch(tape, p, vars, x, mask).value();
  const Matrix rows = dense_predict_rows(p, x, mask);
  CHECK((batch - rows).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("save and load round trip") {
  testing::TempDir dir;
  DenseSpec s;
  s.attributes = 3;
  s.hidden = {4};
  s.outputs = 2;
  DenseParams p = init_dense(s, 5);
  p.scaler = fit_scaler(testing::random_table(8, 3, 6));
  p.info.attribute_names = {"a", "b", "c"};
  save_dense(p, dir.file("d.json"));
  const DenseParams q = load_dense(dir.file("d.json"));
  const auto a = p.parameter_values();
  const auto b = q.parameter_values();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK_THROWS_AS(load_model(dir.file("d.json")), LoadError);
}

}  // TEST_SUITE
