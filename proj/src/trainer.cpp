#include "tgn/trainer.hpp"

#include "tgn/parallel.hpp"
#include "tgn/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tgn {

std::string to_string(ModelKind k) { return k == ModelKind::TableGraphNet ? "tablegraphnet" : "dense"; }
std::string to_string(Strategy s) { return s == Strategy::Classic ? "classic" : "augmented"; }
std::string to_string(Metric m) {
  switch (m) {
    case Metric::Rmse:
      return "rmse";
    case Metric::AucMacro:
      return "auc-macro";
    case Metric::Accuracy:
      return "accuracy";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "tablegraphnet") return ModelKind::TableGraphNet;
  if (name == "dense") return ModelKind::Dense;
  throw ConfigError("unknown model kind '" + name + "' (expected tablegraphnet or dense)");
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "classic") return Strategy::Classic;
  if (name == "augmented") return Strategy::Augmented;
  throw ConfigError("unknown strategy '" + name + "' (expected classic or augmented)");
}

Metric metric_from_string(const std::string& name) {
  if (name == "rmse") return Metric::Rmse;
  if (name == "auc-macro" || name == "auc") return Metric::AucMacro;
  if (name == "accuracy") return Metric::Accuracy;
  throw ConfigError("unknown metric '" + name + "' (expected rmse, auc-macro or accuracy)");
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (min_delta < 0.0) throw ConfigError("min_delta must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(decay_rate > 0.0)) throw ConfigError("decay rate must be positive");
  if (!(decay_period > 0.0)) throw ConfigError("decay period must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (l2 < 0.0) throw ConfigError("L2 coefficient must be >= 0");
  if (!(missing_p >= 0.0 && missing_p <= 1.0)) throw ConfigError("missing_p must lie in [0, 1]");
}

// ---- Model plumbing ---------------------------------------------------------

namespace {

std::vector<Matrix> values_of(const AnyModel& m) {
  return std::visit([](const auto& p) { return p.parameter_values(); }, m);
}

void assign_values(AnyModel& m, std::span<const Matrix> values) {
  std::visit([&](auto& p) { p.assign(values); }, m);
}

std::vector<Matrix*> refs_of(AnyModel& m) {
  return std::visit([](auto& p) { return p.parameters(); }, m);
}

std::vector<std::size_t> penalized_of(const AnyModel& m) {
  return std::visit([](const auto& p) { return p.penalized(); }, m);
}

Index outputs_of(const AnyModel& m) {
  return std::visit(
      [](const auto& p) -> Index {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ModelParams>) {
          return p.spec.outputs;
        } else {
          return p.spec.outputs;
        }
      },
      m);
}

ad::Var forward_any(ad::Tape& tape, const AnyModel& m, std::span<const ad::Var> vars,
                    const Matrix& records, const MaskMatrix& masks) {
  if (const auto* tg = std::get_if<ModelParams>(&m)) {
    return forward_batch(tape, *tg, vars, records, masks).output;
  }
  return dense_forward_batch(tape, std::get<DenseParams>(m), vars, records, masks);
}

ad::Var loss_on(ad::Var output, const Table& t, std::span<const Index> rows) {
  if (t.task == TaskKind::Regression) {
    Matrix target(static_cast<Index>(rows.size()), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) target(static_cast<Index>(i), 0) = t.target[rows[i]];
    return ad::mse_loss(output, target);
  }
  std::vector<Index> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = t.label(rows[i]);
  return ad::softmax_cross_entropy(output, labels);
}

double loss_from_outputs(const Matrix& outputs, const Table& t) {
  if (t.task == TaskKind::Regression) {
    return (outputs.col(0) - t.target).squaredNorm() / static_cast<double>(t.rows());
  }
  double total = 0.0;
  for (Index i = 0; i < t.rows(); ++i) {
    total += softmax_cross_entropy(outputs.row(i).transpose(), t.label(i));
  }
  return total / static_cast<double>(t.rows());
}

// Output bias start: target mean for regression, log class frequencies
// (add-one smoothed) for classification.
Matrix initial_bias(const Table& train) {
  if (train.task == TaskKind::Regression) {
    Matrix b(1, 1);
    b(0, 0) = train.target.mean();
    return b;
  }
  const Index c = train.classes();
  Matrix b = Matrix::Ones(1, c);
  for (Index i = 0; i < train.rows(); ++i) b(0, train.label(i)) += 1.0;
  const double total = b.sum();
  return (b.array() / total).log().matrix();
}

}  // namespace

AnyModel build_model(const ModelConfig& config, const Table& train, double l2, std::uint64_t seed) {
  const Index m = train.attributes();
  const Index c = train.output_width();
  TableInfo info{train.attribute_names, train.task, train.class_values};
  if (config.kind == ModelKind::TableGraphNet) {
    ModelSpec spec;
    spec.attributes = m;
    spec.encoding = config.encoding == EncodingKind::OneHot ? EncodingSpec::one_hot(m)
                                                             : EncodingSpec::none();
    spec.graphs = config.graphs;
    spec.distance_hidden = config.distance_hidden;
    spec.filters = config.filters;
    spec.filter_hidden = config.filter_hidden;
    spec.outputs = c;
    spec.node_features = config.node_features;
    spec.l2 = l2;
    ModelParams p = init_model(spec, seed);
    p.rho0 = initial_bias(train);
    p.info = std::move(info);
    return p;
  }
  DenseSpec spec;
  spec.attributes = m;
  spec.hidden = config.dense_hidden;
  spec.outputs = c;
  spec.l2 = l2;
  DenseParams p = init_dense(spec, seed);
  *p.network.layers.back().bias = initial_bias(train);
  p.info = std::move(info);
  return p;
}

const ScalerParams& scaler_of(const AnyModel& model) {
  return std::visit([](const auto& p) -> const ScalerParams& { return p.scaler; }, model);
}

std::size_t parameter_count(const AnyModel& model) {
  return std::visit([](const auto& p) { return p.parameter_count(); }, model);
}

TaskKind task_of(const AnyModel& model) {
  return std::visit([](const auto& p) { return p.info.task; }, model);
}

Table scale_for(const AnyModel& model, const Table& raw) { return apply_scaler(raw, scaler_of(model)); }

Matrix predict_table(const AnyModel& model, const Table& raw) {
  const Table scaled = scale_for(model, raw);
  if (const auto* tg = std::get_if<ModelParams>(&model)) {
    const auto preds = predict_rows(*tg, scaled.values, scaled.mask);
    Matrix out(scaled.rows(), tg->spec.outputs);
    for (Index i = 0; i < scaled.rows(); ++i) out.row(i) = preds[static_cast<std::size_t>(i)].output.transpose();
    return out;
  }
  return dense_predict_rows(std::get<DenseParams>(model), scaled.values, scaled.mask);
}

double data_loss(const AnyModel& model, const Table& raw) {
  if (raw.rows() == 0) throw ConfigError("data_loss: empty table");
  return loss_from_outputs(predict_table(model, raw), raw);
}

// ---- Training ---------------------------------------------------------------

TrainResult train(const ModelConfig& config, const Splits& data, const TrainConfig& tc,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  tc.validate();
  if (data.train.rows() == 0) throw ConfigError("training split is empty");
  if (data.validation.rows() == 0) throw ConfigError("validation split is empty");
  if (data.train.attributes() != data.validation.attributes()) {
    throw ShapeError("train and validation splits have different attribute counts");
  }

  const ScalerParams scaler = fit_scaler(data.train);
  const Table train_t = apply_scaler(data.train, scaler);
  const Table val_t = apply_scaler(data.validation, scaler);

  AnyModel model = build_model(config, train_t, tc.l2, mix_seed(tc.seed, 1));
  std::visit([&](auto& p) { p.scaler = scaler; }, model);

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = tc.learning_rate;
  adam_cfg.decay_rate = tc.decay_rate;
  adam_cfg.decay_period = tc.decay_period;
  std::vector<Matrix*> refs = refs_of(model);
  AdamState adam = AdamState::zeros_like(std::span<Matrix* const>(refs), adam_cfg);
  const std::vector<std::size_t> penalized = penalized_of(model);

  const Index n = train_t.rows();
  const Index batch = n < tc.full_batch_below ? n : tc.batch_size;

  TrainResult result;
  TrainHistory& hist = result.history;
  std::vector<Matrix> best_values = values_of(model);
  EarlyStopping stopper(tc.min_delta, tc.patience);

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    MaskMatrix masks = train_t.mask;
    if (tc.strategy == Strategy::Augmented) {
      const MaskMatrix drop = sample_missingness(n, train_t.attributes(), tc.missing_p,
                                                 mix_seed(tc.seed, 2000000 + static_cast<std::uint64_t>(epoch)));
      masks = combine_masks(train_t.mask, drop);
    }
    const double rate = adam.effective_rate();
    double loss_sum = 0.0;
    for (const auto& rows : make_batches(n, batch, mix_seed(tc.seed, 1000000 + static_cast<std::uint64_t>(epoch)))) {
      const Index b = static_cast<Index>(rows.size());
      Matrix x(b, train_t.attributes());
      MaskMatrix mk(b, train_t.attributes());
      for (Index i = 0; i < b; ++i) {
        x.row(i) = train_t.values.row(rows[static_cast<std::size_t>(i)]);
        mk.row(i) = masks.row(rows[static_cast<std::size_t>(i)]);
      }
      ad::Tape tape;
      std::vector<ad::Var> vars;
      vars.reserve(refs.size());
      for (const Matrix* p : refs) vars.push_back(tape.variable(*p));
      ad::Var output = forward_any(tape, model, vars, x, mk);
      ad::Var loss = loss_on(output, train_t, rows);
      const double batch_loss = loss.scalar();
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      loss_sum += batch_loss * static_cast<double>(b);
      ad::Var objective = loss;
      if (tc.l2 > 0.0) {
        std::vector<ad::Var> weights;
        for (std::size_t i : penalized) weights.push_back(vars[i]);
        objective = ad::add(loss, l2_penalty(weights, tc.l2));
      }
      tape.backward(objective);
      std::vector<Matrix> grads;
      grads.reserve(vars.size());
      for (const ad::Var& v : vars) grads.push_back(tape.grad(v));
      adam_step(std::span<Matrix* const>(refs), grads, adam);
    }

    const Matrix val_out = [&] {
      if (const auto* tg = std::get_if<ModelParams>(&model)) {
        const auto preds = predict_rows(*tg, val_t.values, val_t.mask);
        Matrix out(val_t.rows(), outputs_of(model));
        for (Index i = 0; i < val_t.rows(); ++i) out.row(i) = preds[static_cast<std::size_t>(i)].output.transpose();
        return out;
      }
      return dense_predict_rows(std::get<DenseParams>(model), val_t.values, val_t.mask);
    }();
    const double val_loss = loss_from_outputs(val_out, val_t);
    if (!std::isfinite(val_loss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(n), val_loss, rate};
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool stop = stopper.update(val_loss);
    if (stopper.best_epoch() == epoch) best_values = values_of(model);
    if (tc.early_stopping && stop) {
      hist.stopped_early = true;
      break;
    }
  }
  hist.best_epoch = stopper.best_epoch();
  hist.best_validation_loss = stopper.best_loss();
  assign_values(model, best_values);
  result.model = std::move(model);
  return result;
}

// ---- Early stopping ---------------------------------------------------------

EarlyStopping::EarlyStopping(double min_delta, int patience)
    : min_delta_(min_delta), patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (min_delta < 0.0) throw ConfigError("min_delta must be >= 0");
}

bool EarlyStopping::update(double loss) {
  ++epoch_;
  if (loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch_;
  }
  improved_last_ = loss < reference_ - min_delta_;
  if (improved_last_) {
    reference_ = loss;
    wait_ = 0;
  } else {
    ++wait_;
  }
  return wait_ >= patience_;
}

EarlyStopDecision early_stop(std::span<const double> history, double min_delta, int patience) {
  if (history.empty()) throw UsageError("early_stop: empty history");
  EarlyStopping s(min_delta, patience);
  EarlyStopDecision d;
  for (double loss : history) {
    if (s.update(loss)) {
      d.stop = true;
      break;
    }
  }
  d.best_epoch = s.best_epoch();
  return d;
}

// ---- Metrics ----------------------------------------------------------------

double rmse(const Vector& prediction, const Vector& target) { return std::sqrt(mse(prediction, target)); }

double accuracy(const Matrix& logits, const Vector& labels) {
  if (logits.rows() != labels.size() || logits.rows() == 0) throw MetricError("accuracy: shape mismatch");
  Index hits = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (arg == static_cast<Index>(labels[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

double auc_binary(const Vector& scores, const std::vector<bool>& positive) {
  const std::size_t n = positive.size();
  if (static_cast<std::size_t>(scores.size()) != n) throw MetricError("auc: length mismatch");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[static_cast<Index>(a)] < scores[static_cast<Index>(b)]; });
  // Mann-Whitney U with mid-ranks for ties; equals the trapezoidal ROC area.
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[static_cast<Index>(order[j + 1])] == scores[static_cast<Index>(order[i])]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (positive[order[t]]) {
        rank_sum += mid;
        ++pos;
      }
    }
    i = j + 1;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc: needs both positive and negative records");
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double auc_macro(const Matrix& logits, const Vector& labels) {
  if (logits.rows() != labels.size()) throw MetricError("auc: shape mismatch");
  Matrix prob(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) prob.row(i) = softmax(logits.row(i).transpose()).transpose();
  double total = 0.0;
  int used = 0;
  for (Index c = 0; c < logits.cols(); ++c) {
    std::vector<bool> positive(static_cast<std::size_t>(labels.size()));
    std::size_t pos = 0;
    for (Index i = 0; i < labels.size(); ++i) {
      positive[static_cast<std::size_t>(i)] = static_cast<Index>(labels[i]) == c;
      pos += positive[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    if (pos == 0 || pos == positive.size()) continue;
    total += auc_binary(prob.col(c), positive);
    ++used;
  }
  if (used == 0) throw MetricError("auc: table has a single class");
  return total / used;
}

double evaluate(const AnyModel& model, const Table& raw, Metric metric) {
  if (raw.rows() == 0) throw MetricError("evaluate: empty table");
  const TaskKind task = task_of(model);
  if (task != raw.task) throw MetricError("evaluate: model and table tasks differ");
  if ((metric == Metric::Rmse) != (task == TaskKind::Regression)) {
    throw MetricError("metric " + to_string(metric) + " does not apply to " + to_string(task));
  }
  const Matrix out = predict_table(model, raw);
  switch (metric) {
    case Metric::Rmse:
      return rmse(out.col(0), raw.target);
    case Metric::AucMacro:
      return auc_macro(out, raw.target);
    case Metric::Accuracy:
      return accuracy(out, raw.target);
  }
  return 0.0;
}

// ---- Grid search ------------------------------------------------------------

namespace {

std::string join(const std::vector<Index>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + ")";
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string describe(const ModelConfig& m, const TrainConfig& t) {
  std::string s = to_string(m.kind);
  if (m.kind == ModelKind::TableGraphNet) {
    s += " G=" + std::to_string(m.graphs) + " dist=" + join(m.distance_hidden) +
         " F=" + std::to_string(m.filters) + " filt=" + join(m.filter_hidden);
  } else {
    s += " hidden=" + join(m.dense_hidden);
  }
  return s + " l2=" + fmt(t.l2) + " lr=" + fmt(t.learning_rate);
}

std::vector<GridCell> expand_grid(const HyperGrid& g, const ModelConfig& bm, const TrainConfig& bt) {
  const auto or_base = [](const auto& axis, const auto& base) {
    using T = std::decay_t<decltype(base)>;
    return axis.empty() ? std::vector<T>{base} : std::vector<T>(axis.begin(), axis.end());
  };
  const auto graphs = or_base(g.graphs, bm.graphs);
  const auto filters = or_base(g.filters, bm.filters);
  const auto dist = or_base(g.distance_hidden, bm.distance_hidden);
  const auto filt = or_base(g.filter_hidden, bm.filter_hidden);
  const auto dense = or_base(g.dense_hidden, bm.dense_hidden);
  const auto l2 = or_base(g.l2, bt.l2);
  const auto lr = or_base(g.learning_rate, bt.learning_rate);
  std::vector<GridCell> cells;
  for (Index gr : graphs)
    for (Index f : filters)
      for (const auto& d : dist)
        for (const auto& fh : filt)
          for (const auto& dh : dense)
            for (double l : l2)
              for (double r : lr) {
                GridCell c;
                c.index = cells.size();
                c.model = bm;
                c.model.graphs = gr;
                c.model.filters = f;
                c.model.distance_hidden = d;
                c.model.filter_hidden = fh;
                c.model.dense_hidden = dh;
                c.train = bt;
                c.train.l2 = l;
                c.train.learning_rate = r;
                c.label = describe(c.model, c.train);
                cells.push_back(std::move(c));
              }
  return cells;
}

GridResult grid_search(const HyperGrid& grid, const ModelConfig& base_model,
                       const TrainConfig& base_train, const Splits& data, int workers) {
  const auto cells = expand_grid(grid, base_model, base_train);
  if (cells.empty()) throw ConfigError("grid is empty");
  std::vector<LeaderboardEntry> entries(cells.size());
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    LeaderboardEntry& e = entries[i];
    e.cell = cells[i];
    try {
      TrainResult r = train(cells[i].model, data, cells[i].train);
      e.validation_loss = r.history.best_validation_loss;
      e.best_epoch = r.history.best_epoch;
      e.parameters = parameter_count(r.model);
    } catch (const TrainingError& err) {
      e.error = err.what();
    }
  });
  GridResult result;
  for (auto& e : entries) (e.error.empty() ? result.ranked : result.failed).push_back(std::move(e));
  std::stable_sort(result.ranked.begin(), result.ranked.end(),
                   [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
                     if (a.validation_loss != b.validation_loss) return a.validation_loss < b.validation_loss;
                     if (a.parameters != b.parameters) return a.parameters < b.parameters;
                     return a.cell.index < b.cell.index;
                   });
  return result;
}

// ---- Trials -----------------------------------------------------------------

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

std::vector<double> TrialSummary::values() const {
  std::vector<double> v;
  for (const auto& t : trials) v.push_back(t.metric);
  return v;
}

TrialSummary run_trials(const ExperimentSpec& spec, int n_trials, int workers, int first_trial) {
  if (n_trials < 1) throw ConfigError("trial count must be >= 1");
  if (spec.candidates.empty()) throw ConfigError("experiment has no candidate configurations");
  TrialSummary summary;
  summary.metric = spec.metric;
  summary.trials.resize(static_cast<std::size_t>(n_trials));
  parallel_for(static_cast<std::size_t>(n_trials), workers, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    TrialResult& tr = summary.trials[i];
    tr.seed = spec.base_seed + static_cast<std::uint64_t>(first_trial) + i;
    const Splits splits = split(spec.data, tr.seed, spec.fractions);
    std::optional<TrainResult> best;
    for (std::size_t c = 0; c < spec.candidates.size(); ++c) {
      TrainConfig tc = spec.candidates[c].train;
      tc.seed = tr.seed;
      TrainResult r = train(spec.candidates[c].model, splits, tc);
      if (!best || r.history.best_validation_loss < best->history.best_validation_loss) {
        best = std::move(r);
        tr.candidate = c;
      }
    }
    tr.validation_loss = best->history.best_validation_loss;
    tr.best_epoch = best->history.best_epoch;
    tr.epochs_run = static_cast<int>(best->history.epochs.size());
    tr.history = best->history;
    tr.metric = evaluate(best->model, splits.test, spec.metric);
    tr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });
  const auto v = summary.values();
  std::tie(summary.mean, summary.stddev) = mean_std(v);
  return summary;
}

}  // namespace tgn
