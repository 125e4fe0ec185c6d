#pragma once

#include "tgn/baseline.hpp"
#include "tgn/dataset.hpp"
#include "tgn/model.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tgn {

enum class ModelKind { TableGraphNet, Dense };
enum class Strategy { Classic, Augmented };
enum class Metric { Rmse, AucMacro, Accuracy };

std::string to_string(ModelKind k);
std::string to_string(Strategy s);
std::string to_string(Metric m);
ModelKind model_kind_from_string(const std::string& name);
Strategy strategy_from_string(const std::string& name);
Metric metric_from_string(const std::string& name);

using AnyModel = std::variant<ModelParams, DenseParams>;

/// Architecture choices that do not depend on the data. Attribute count,
/// encoding width and output width are filled in from the training table.
struct ModelConfig {
  ModelKind kind = ModelKind::TableGraphNet;
  EncodingKind encoding = EncodingKind::OneHot;
  Index graphs = 1;
  std::vector<Index> distance_hidden{16, 8};
  Index filters = 1;
  std::vector<Index> filter_hidden{16};
  std::vector<NodeFeature> node_features{NodeFeature::SumOutflow};
  std::vector<Index> dense_hidden{16};
};

struct TrainConfig {
  int max_epochs = 10000;
  bool early_stopping = true;
  double min_delta = 0.01;
  int patience = 200;
  double learning_rate = 1e-3;
  double decay_rate = 1.0;
  double decay_period = 1000.0;
  Index batch_size = 32;
  // Training sets smaller than this are trained full-batch.
  Index full_batch_below = 200;
  double l2 = 0.0;
  Strategy strategy = Strategy::Classic;
  double missing_p = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

struct TrainResult {
  AnyModel model;
  TrainHistory history;
};

AnyModel build_model(const ModelConfig& config, const Table& train, double l2, std::uint64_t seed);

// Fits the scaler on the training split, trains with Adam on loss + L2 and
// returns the parameters of the best validation epoch. Splits are raw.
TrainResult train(const ModelConfig& config, const Splits& data, const TrainConfig& train_config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// ---- Early stopping ---------------------------------------------------------

struct EarlyStopDecision {
  bool stop = false;
  int best_epoch = 0;  // 1-based argmin of the validation history
};

// An epoch improves when its loss is below the last improving loss by more
// than min_delta; training stops after `patience` non-improving epochs.
EarlyStopDecision early_stop(std::span<const double> validation_history, double min_delta,
                             int patience);

class EarlyStopping {
 public:
  EarlyStopping(double min_delta, int patience);
  // Feeds one epoch; returns true when training should stop.
  bool update(double validation_loss);
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  bool improved_last() const { return improved_last_; }

 private:
  double min_delta_;
  int patience_;
  double reference_ = std::numeric_limits<double>::infinity();
  double best_loss_ = std::numeric_limits<double>::infinity();
  int wait_ = 0;
  int epoch_ = 0;
  int best_epoch_ = 0;
  bool improved_last_ = false;
};

// ---- Prediction and metrics -------------------------------------------------

// Model outputs on a raw table (scaled with the model's own scaler), N x C.
Matrix predict_table(const AnyModel& model, const Table& raw);
Table scale_for(const AnyModel& model, const Table& raw);
const ScalerParams& scaler_of(const AnyModel& model);
std::size_t parameter_count(const AnyModel& model);
TaskKind task_of(const AnyModel& model);

double rmse(const Vector& prediction, const Vector& target);
double accuracy(const Matrix& logits, const Vector& labels);
// Area under the ROC curve with ties counted as one half.
double auc_binary(const Vector& scores, const std::vector<bool>& positive);
// Unweighted mean of one-vs-rest AUCs over classes that have both positive
// and negative records. Scores are softmax probabilities of the logits.
double auc_macro(const Matrix& logits, const Vector& labels);

double evaluate(const AnyModel& model, const Table& raw, Metric metric);
// Mean data loss (MSE or cross-entropy) on a raw table.
double data_loss(const AnyModel& model, const Table& raw);

// ---- Grid search ------------------------------------------------------------

struct HyperGrid {
  std::vector<Index> graphs;
  std::vector<Index> filters;
  std::vector<std::vector<Index>> distance_hidden;
  std::vector<std::vector<Index>> filter_hidden;
  std::vector<std::vector<Index>> dense_hidden;
  std::vector<double> l2;
  std::vector<double> learning_rate;
};

struct GridCell {
  std::size_t index = 0;
  ModelConfig model;
  TrainConfig train;
  std::string label;
};

// Cartesian product in axis order graphs, filters, distance_hidden,
// filter_hidden, dense_hidden, l2, learning_rate (last varies fastest).
// Empty axes keep the base value.
std::vector<GridCell> expand_grid(const HyperGrid& grid, const ModelConfig& base_model,
                                  const TrainConfig& base_train);

struct LeaderboardEntry {
  GridCell cell;
  double validation_loss = std::numeric_limits<double>::infinity();
  std::size_t parameters = 0;
  int best_epoch = 0;
  std::string error;  // non-empty for failed cells
};

struct GridResult {
  std::vector<LeaderboardEntry> ranked;
  std::vector<LeaderboardEntry> failed;
};

GridResult grid_search(const HyperGrid& grid, const ModelConfig& base_model,
                       const TrainConfig& base_train, const Splits& data, int workers = 1);

std::string describe(const ModelConfig& model, const TrainConfig& train);

// ---- Multi-trial runner -----------------------------------------------------

struct Candidate {
  ModelConfig model;
  TrainConfig train;
};

struct ExperimentSpec {
  Table data;  // raw
  std::vector<Candidate> candidates;  // best validation loss wins per trial
  SplitFractions fractions;
  Metric metric = Metric::Rmse;
  std::uint64_t base_seed = 0;
};

struct TrialResult {
  std::uint64_t seed = 0;
  double metric = 0.0;
  double validation_loss = 0.0;
  std::size_t candidate = 0;
  int best_epoch = 0;
  int epochs_run = 0;
  double seconds = 0.0;
  TrainHistory history;
};

struct TrialSummary {
  Metric metric = Metric::Rmse;
  std::vector<TrialResult> trials;
  double mean = 0.0;
  double stddev = 0.0;  // population

  std::vector<double> values() const;
};

// Population mean and standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

// Trial i uses seed base_seed + i for its split and initialisation.
TrialSummary run_trials(const ExperimentSpec& spec, int n_trials, int workers = 1,
                        int first_trial = 0);

}  // namespace tgn
