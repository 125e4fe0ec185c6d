#include <doctest.h>

#include "helpers.hpp"
#include "tgn/trainer.hpp"

#include <cmath>

using namespace tgn;

namespace {

Table linear_table(Index rows, std::uint64_t seed) {
  Table t = testing::random_table(rows, 3, seed);
  t.values *= 10.0;
  t.target = t.values.col(0) / 10.0;
  return t;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.graphs = 2;
  m.distance_hidden = {8, 4};
  m.filters = 2;
  m.filter_hidden = {8};
  m.dense_hidden = {8};
  return m;
}

TrainConfig quick(int epochs, double lr = 0.01) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.early_stopping = false;
  c.learning_rate = lr;
  c.seed = 3;
  return c;
}

bool same_values(const AnyModel& a, const AnyModel& b) {
  const auto va = std::visit([](const auto& p) { return p.parameter_values(); }, a);
  const auto vb = std::visit([](const auto& p) { return p.parameter_values(); }, b);
  if (va.size() != vb.size()) return false;
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i] != vb[i]) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("early stopping on a flat history stops after patience") {
  const std::vector<double> flat(200, 1.0);
  CHECK_FALSE(early_stop(flat, 0.01, 200).stop);
  const std::vector<double> flat201(201, 1.0);
  const EarlyStopDecision d = early_stop(flat201, 0.01, 200);
  CHECK(d.stop);
  CHECK(d.best_epoch == 1);

  EarlyStopping es(0.01, 200);
  int stopped_at = 0;
  for (int epoch = 1; epoch <= 500 && stopped_at == 0; ++epoch) {
    if (es.update(1.0)) stopped_at = epoch;
  }
  CHECK(stopped_at == 201);
}

TEST_CASE("early stopping improvement threshold and argmin") {
  const std::vector<double> h{1.0, 0.5, 0.6, 0.6};
  const EarlyStopDecision d = early_stop(h, 0.01, 2);
  CHECK(d.stop);
  CHECK(d.best_epoch == 2);

  // 0.995 is below 1.0 but not by more than min_delta; it is still the argmin.
  const std::vector<double> small{1.0, 0.995, 0.996};
  const EarlyStopDecision s = early_stop(small, 0.01, 2);
  CHECK(s.stop);
  CHECK(s.best_epoch == 2);

  const std::vector<double> slow{1.0, 0.995, 0.989, 0.985};
  CHECK_FALSE(early_stop(slow, 0.01, 2).stop);
}

TEST_CASE("regression and classification metrics") {
  Vector p(2), t(2);
  p << 0.0, 0.0;
  t << 2.0, 0.0;
  CHECK(rmse(p, t) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  Vector s(4);
  s << 0.1, 0.4, 0.35, 0.8;
  CHECK(auc_binary(s, {false, false, true, true}) == doctest::Approx(0.75));
  CHECK(auc_binary(s, {false, true, false, true}) == 1.0);
  CHECK(auc_binary(Vector::Constant(4, 0.5), {false, true, false, true}) == 0.5);
  CHECK_THROWS_AS(auc_binary(s, {true, true, true, true}), MetricError);

  Rng rng(17);
  Vector r(20000);
  std::vector<bool> pos(20000);
  for (Index i = 0; i < r.size(); ++i) {
    r[i] = rng.uniform(0.0, 1.0);
    pos[static_cast<std::size_t>(i)] = rng.bernoulli(0.5);
  }
  const double random_auc = auc_binary(r, pos);
  CHECK(random_auc >= 0.47);
  CHECK(random_auc <= 0.53);

  Matrix logits(4, 3);
  logits << 5, 0, 0,
            0, 5, 0,
            0, 0, 5,
            5, 0, 0;
  Vector labels(4);
  labels << 0, 1, 2, 1;
  CHECK(accuracy(logits, labels) == 0.75);
  Vector perfect(4);
  perfect << 0, 1, 2, 0;
  CHECK(auc_macro(logits, perfect) == 1.0);

  Vector single(4);
  single << 0, 0, 0, 0;
  CHECK_THROWS_AS(auc_macro(logits, single), MetricError);
}

TEST_CASE("population mean and standard deviation") {
  const std::vector<double> one{4.2};
  CHECK(mean_std(one).first == 4.2);
  CHECK(mean_std(one).second == 0.0);
  const std::vector<double> three{1.0, 2.0, 3.0};
  CHECK(mean_std(three).first == 2.0);
  CHECK(mean_std(three).second == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
}

TEST_CASE("grid expansion order and size") {
  HyperGrid g;
  g.graphs = {2, 4};
  g.filters = {2, 4};
  g.distance_hidden = {{16, 8}, {32, 16}, {8}};
  g.l2 = {0.0, 0.01};
  g.learning_rate = {1e-3, 1e-2};
  const auto cells = expand_grid(g, tiny_model(), quick(1));
  REQUIRE(cells.size() == 48);
  CHECK(cells[0].train.learning_rate == 1e-3);
  CHECK(cells[1].train.learning_rate == 1e-2);
  CHECK(cells[2].train.l2 == 0.01);
  CHECK(cells[47].model.graphs == 4);
  CHECK(cells[47].model.distance_hidden == std::vector<Index>{8});
  for (std::size_t i = 0; i < cells.size(); ++i) CHECK(cells[i].index == i);

  const auto single = expand_grid(HyperGrid{}, tiny_model(), quick(1));
  REQUIRE(single.size() == 1);
  CHECK(single[0].model.graphs == 2);
}

TEST_CASE("synthetic identity target is learned") {
  const Splits s = split(linear_table(250, 5), 1);
  const TrainResult r = train(tiny_model(), s, quick(400, 0.01));
  CHECK(evaluate(r.model, s.test, Metric::Rmse) < 0.1);
  CHECK(r.history.epochs.size() == 400);
  CHECK(r.history.best_epoch >= 1);
  CHECK(predict_table(r.model, s.test).rows() == s.test.rows());
}

TEST_CASE("constant target") {
  Table t = linear_table(120, 6);
  t.target.setConstant(5.0);
  const Splits s = split(t, 2);
  const TrainResult r = train(tiny_model(), s, quick(100, 0.01));
  CHECK(evaluate(r.model, s.test, Metric::Rmse) < 0.05);
}

TEST_CASE("training is deterministic and augmented with p = 0 equals classic") {
  const Splits s = split(linear_table(80, 7), 3);
  const TrainResult a = train(tiny_model(), s, quick(15));
  const TrainResult b = train(tiny_model(), s, quick(15));
  CHECK(same_values(a.model, b.model));
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    CHECK(a.history.epochs[i].train_loss == b.history.epochs[i].train_loss);
  }
  TrainConfig aug = quick(15);
  aug.strategy = Strategy::Augmented;
  aug.missing_p = 0.0;
  const TrainResult c = train(tiny_model(), s, aug);
  CHECK(same_values(a.model, c.model));

  aug.missing_p = 0.5;
  const TrainResult d = train(tiny_model(), s, aug);
  CHECK_FALSE(same_values(a.model, d.model));
}

TEST_CASE("minibatches are used for larger training sets") {
  const Splits s = split(linear_table(400, 8), 4);
  TrainConfig c = quick(3);
  c.batch_size = 32;
  const TrainResult r = train(tiny_model(), s, c);
  CHECK(r.history.epochs.size() == 3);
  CHECK(std::isfinite(r.history.best_validation_loss));
}

TEST_CASE("early stopping restores the best epoch") {
  const Splits s = split(linear_table(80, 9), 5);
  TrainConfig c = quick(300, 0.05);
  c.early_stopping = true;
  c.patience = 5;
  c.min_delta = 0.01;
  const TrainResult r = train(tiny_model(), s, c);
  CHECK(r.history.stopped_early);
  CHECK(r.history.epochs.size() < 300);
  const double restored = data_loss(r.model, s.validation);
  CHECK(restored == doctest::Approx(r.history.best_validation_loss).epsilon(1e-9));
}

TEST_CASE("classification with the dense baseline") {
  Table t = testing::random_table(150, 4, 10, 1.0, TaskKind::Classification, 3);
  for (Index i = 0; i < t.rows(); ++i) t.target[i] = t.values(i, 0) < 0.33 ? 0 : (t.values(i, 0) < 0.66 ? 1 : 2);
  const Splits s = split(t, 6);
  ModelConfig m = tiny_model();
  m.kind = ModelKind::Dense;
  const TrainResult r = train(m, s, quick(200, 0.02));
  CHECK(std::holds_alternative<DenseParams>(r.model));
  CHECK(evaluate(r.model, s.test, Metric::Accuracy) > 0.8);
  CHECK(evaluate(r.model, s.test, Metric::AucMacro) > 0.9);
  CHECK_THROWS_AS(evaluate(r.model, s.test, Metric::Rmse), MetricError);
}

TEST_CASE("grid search ranks cells and drops diverging ones") {
  const Splits s = split(linear_table(60, 11), 7);
  HyperGrid g;
  g.learning_rate = {1e-2, 1e200};
  g.graphs = {1, 2};
  const GridResult r = grid_search(g, tiny_model(), quick(5), s, 1);
  CHECK(r.ranked.size() == 2);
  CHECK(r.failed.size() == 2);
  for (const auto& e : r.failed) CHECK(e.cell.train.learning_rate == 1e200);
  CHECK(r.ranked[0].validation_loss <= r.ranked[1].validation_loss);
  CHECK_FALSE(r.failed[0].error.empty());
}

TEST_CASE("invalid configurations and empty splits") {
  TrainConfig c = quick(1);
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = quick(1);
  c.missing_p = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  Splits s = split(linear_table(40, 12), 1);
  s.validation = s.validation.subset(std::vector<Index>{});
  CHECK_THROWS_AS(train(tiny_model(), s, quick(1)), ConfigError);
}

TEST_CASE("trials use consecutive seeds") {
  ExperimentSpec spec;
  spec.data = linear_table(60, 13);
  spec.candidates = {{tiny_model(), quick(3)}};
  spec.base_seed = 40;
  const TrialSummary a = run_trials(spec, 2);
  REQUIRE(a.trials.size() == 2);
  CHECK(a.trials[0].seed == 40);
  CHECK(a.trials[1].seed == 41);
  const TrialSummary b = run_trials(spec, 1, 1, 1);
  CHECK(b.trials[0].seed == 41);
  CHECK(b.trials[0].metric == a.trials[1].metric);
  const auto ms = mean_std(a.values());
  CHECK(a.mean == ms.first);
  CHECK(a.stddev == ms.second);
}

}  // TEST_SUITE
