// Command-line front end: train, evaluate, explain, audit, gridsearch, benchmark.

#include "tgn/experiment.hpp"
#include "tgn/runtime.hpp"
#include "tgn/serialize.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 0;
  bool no_timestamp = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "experiment config file");
  app->add_option("--set", c.overrides, "override a config key: section.key=value")->take_all();
  app->add_option("--seed", c.seed, "global seed (experiment.seed)");
  app->add_option("-o,--out", c.out, "output directory (experiment.output_dir)");
  app->add_option("-w,--workers", c.workers, "worker threads (experiment.workers)");
  app->add_flag("--no-timestamp", c.no_timestamp, "omit the creation time from output headers");
}

tgn::ExperimentConfig resolve(const Common& c) {
  tgn::ExperimentConfig cfg =
      c.config_path.empty() ? tgn::ExperimentConfig{} : tgn::ExperimentConfig::load(c.config_path);
  for (const auto& o : c.overrides) cfg.set(o);
  if (c.seed) cfg.set("experiment", "seed", std::to_string(*c.seed));
  if (!c.out.empty()) cfg.set("experiment", "output_dir", c.out);
  if (c.workers > 0) cfg.set("experiment", "workers", std::to_string(c.workers));
  return cfg;
}

tgn::OutputHeader header(const tgn::ExperimentConfig& cfg, const Common& c, const std::string& kind,
                         std::uint64_t seed) {
  return {kind, cfg.hash(), seed, !c.no_timestamp};
}

std::string out_path(const tgn::ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir()) / name).string();
}

void emit(const tgn::ExperimentConfig& cfg, const Common& c, const std::string& kind, std::uint64_t seed,
          const std::string& name, const std::string& body) {
  const std::string path = out_path(cfg, name);
  tgn::write_text_file(path, header(cfg, c, kind, seed).text() + body);
  std::cout << "wrote " << path << '\n';
}

tgn::Table load_data(const tgn::ExperimentConfig& cfg) { return tgn::load_table(cfg.data_path(), cfg.schema()); }

std::uint64_t trial_seed(const tgn::ExperimentConfig& cfg, int trial) {
  return cfg.seed() + static_cast<std::uint64_t>(trial);
}

tgn::AnyModel load_any(const std::string& path) {
  if (tgn::io::model_kind(path) == "dense") return tgn::load_dense(path);
  return tgn::load_model(path);
}

void save_any(const tgn::AnyModel& model, const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  if (const auto* tg = std::get_if<tgn::ModelParams>(&model)) {
    tgn::save_model(*tg, path);
  } else {
    tgn::save_dense(std::get<tgn::DenseParams>(model), path);
  }
}

const tgn::Table& pick_split(const tgn::Splits& s, const tgn::Table& all, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "validation") return s.validation;
  if (name == "test") return s.test;
  if (name == "all") return all;
  throw tgn::UsageError("unknown split '" + name + "' (expected train, validation, test or all)");
}

const tgn::ModelParams& require_graph_model(const tgn::AnyModel& m, const std::string& what) {
  const auto* tg = std::get_if<tgn::ModelParams>(&m);
  if (!tg) throw tgn::UsageError(what + " needs a tablegraphnet model; the dense baseline makes no attribution claims");
  return *tg;
}

// Parses "v1,v2,..." with empty fields or NA/NaN/? as missing.
std::pair<tgn::Vector, tgn::MaskVector> parse_row(const std::string& text, tgn::Index m) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (static_cast<tgn::Index>(fields.size()) != m) {
    throw tgn::InputError("row has " + std::to_string(fields.size()) + " values, model expects " +
                          std::to_string(m));
  }
  tgn::Vector v = tgn::Vector::Zero(m);
  tgn::MaskVector mask = tgn::MaskVector::Constant(m, true);
  for (tgn::Index k = 0; k < m; ++k) {
    const std::string& f = fields[static_cast<std::size_t>(k)];
    if (f.empty() || f == "NA" || f == "NaN" || f == "?") {
      mask[k] = false;
      continue;
    }
    try {
      std::size_t used = 0;
      v[k] = std::stod(f, &used);
      if (used != f.size()) throw std::invalid_argument(f);
    } catch (const std::exception&) {
      throw tgn::InputError("row value " + std::to_string(k + 1) + " ('" + f + "') is not numeric");
    }
  }
  return {v, mask};
}

std::vector<tgn::Index> parse_grid_shape(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw tgn::UsageError("grid shape must look like ROWSxCOLS");
  try {
    return {std::stol(text.substr(0, x)), std::stol(text.substr(x + 1))};
  } catch (const std::exception&) {
    throw tgn::UsageError("grid shape must look like ROWSxCOLS");
  }
}

// Best validation loss among the configured candidates for one seed.
tgn::TrainResult train_candidates(const tgn::ExperimentConfig& cfg, const tgn::Splits& splits,
                                  std::uint64_t seed, bool verbose) {
  const auto candidates = cfg.candidates();
  std::optional<tgn::TrainResult> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    tgn::TrainConfig tc = candidates[i].train;
    tc.seed = seed;
    if (verbose) std::cout << "training " << tgn::describe(candidates[i].model, tc) << '\n';
    tgn::TrainResult r = tgn::train(candidates[i].model, splits, tc);
    if (verbose) {
      std::cout << "  best epoch " << r.history.best_epoch << " of " << r.history.epochs.size()
                << ", validation loss " << r.history.best_validation_loss << '\n';
    }
    if (!best || r.history.best_validation_loss < best->history.best_validation_loss) best = std::move(r);
  }
  return std::move(*best);
}

}  // namespace

int main(int argc, char** argv) {
  tgn::configure_allocator();
  CLI::App app{"TableGraphNet: additive per-attribute attribution models for tabular data"};
  app.require_subcommand(1);

  Common common;
  int trial = 0;
  std::string model_path;
  std::string split_name = "test";
  std::optional<tgn::Index> record_index;
  std::string row_text;
  std::string grid_shape;
  tgn::Index class_index = -1;
  std::optional<tgn::Index> audit_records;

  auto* train_cmd = app.add_subcommand("train", "fit a model and save it with its training history");
  add_common(train_cmd, common);
  train_cmd->add_option("--trial", trial, "trial index; the split and initialisation use seed + trial");

  auto* eval_cmd = app.add_subcommand("evaluate", "compute the configured metric on a split");
  add_common(eval_cmd, common);
  eval_cmd->add_option("-m,--model", model_path, "model file")->required();
  eval_cmd->add_option("--split", split_name, "train | validation | test | all");
  eval_cmd->add_option("--trial", trial, "trial index used to rebuild the split");

  auto* explain_cmd = app.add_subcommand("explain", "attribution report for one record");
  add_common(explain_cmd, common);
  explain_cmd->add_option("-m,--model", model_path, "model file")->required();
  auto* rec_opt = explain_cmd->add_option("--record", record_index, "record index within --split");
  auto* row_opt = explain_cmd->add_option("--row", row_text, "raw comma-separated values; empty fields are missing");
  rec_opt->excludes(row_opt);
  explain_cmd->add_option("--split", split_name, "train | validation | test | all");
  explain_cmd->add_option("--trial", trial, "trial index used to rebuild the split");
  explain_cmd->add_option("--grid", grid_shape, "also export a ROWSxCOLS contribution grid");
  explain_cmd->add_option("--class", class_index, "class index for the grid (default: predicted class)");

  auto* audit_cmd = app.add_subcommand("audit", "axiom checks and the consistency census");
  add_common(audit_cmd, common);
  audit_cmd->add_option("-m,--model", model_path, "model file")->required();
  audit_cmd->add_option("--split", split_name, "train | validation | test | all");
  audit_cmd->add_option("--trial", trial, "trial index used to rebuild the split");
  audit_cmd->add_option("--records", audit_records, "audit the first N records (audit.records)");

  auto* grid_cmd = app.add_subcommand("gridsearch", "train every grid cell and rank by validation loss");
  add_common(grid_cmd, common);
  grid_cmd->add_option("--trial", trial, "trial index used for the split");

  auto* bench_cmd = app.add_subcommand("benchmark", "multi-trial test metric with mean and std");
  add_common(bench_cmd, common);

  auto* ref_cmd = app.add_subcommand("config", "print every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (ref_cmd->parsed()) {
      std::cout << tgn::config_reference();
      return 0;
    }
    const tgn::ExperimentConfig cfg = resolve(common);

    if (train_cmd->parsed()) {
      const std::uint64_t seed = trial_seed(cfg, trial);
      const tgn::Table data = load_data(cfg);
      const tgn::Splits splits = tgn::split(data, seed, cfg.fractions());
      tgn::TrainResult r = train_candidates(cfg, splits, seed, true);
      const std::string model_file = out_path(cfg, "model.json");
      save_any(r.model, model_file);
      std::cout << "wrote " << model_file << '\n';
      emit(cfg, common, "history", seed, "history.tsv", tgn::format_history(r.history));
      std::cout << "test " << tgn::to_string(cfg.metric()) << ' '
                << tgn::evaluate(r.model, splits.test, cfg.metric()) << '\n';
      return 0;
    }

    if (grid_cmd->parsed()) {
      const std::uint64_t seed = trial_seed(cfg, trial);
      const tgn::Table data = load_data(cfg);
      const tgn::Splits splits = tgn::split(data, seed, cfg.fractions());
      tgn::TrainConfig base = cfg.train();
      base.seed = seed;
      const tgn::GridResult g = tgn::grid_search(cfg.grid(), cfg.model(), base, splits, cfg.workers());
      for (const auto& f : g.failed) std::cerr << "cell " << f.cell.index << " failed: " << f.error << '\n';
      emit(cfg, common, "leaderboard", seed, "leaderboard.tsv", tgn::format_leaderboard(g));
      if (!g.ranked.empty()) std::cout << "best: " << g.ranked.front().cell.label << '\n';
      return 0;
    }

    if (bench_cmd->parsed()) {
      tgn::ExperimentSpec spec;
      spec.data = load_data(cfg);
      spec.candidates = cfg.candidates();
      spec.fractions = cfg.fractions();
      spec.metric = cfg.metric();
      spec.base_seed = cfg.seed();
      const tgn::TrialSummary s = tgn::run_trials(spec, cfg.trials(), cfg.workers());
      emit(cfg, common, "trials", cfg.seed(), "summary.tsv", tgn::format_trials(s));
      emit(cfg, common, "timings", cfg.seed(), "timings.tsv", tgn::format_timings(s));
      for (std::size_t i = 0; i < s.trials.size(); ++i) {
        emit(cfg, common, "history", s.trials[i].seed, "history_trial" + std::to_string(i) + ".tsv",
             tgn::format_history(s.trials[i].history));
      }
      std::cout << tgn::to_string(s.metric) << ' ' << s.mean << " +- " << s.stddev << '\n';
      return 0;
    }

    // Commands that apply a saved model.
    const tgn::AnyModel model = load_any(model_path);
    const std::uint64_t seed = trial_seed(cfg, trial);
    const auto data_split = [&] {
      const tgn::Table data = load_data(cfg);
      const tgn::Splits splits = tgn::split(data, seed, cfg.fractions());
      return pick_split(splits, data, split_name);
    };

    if (eval_cmd->parsed()) {
      const tgn::Table t = data_split();
      const double v = tgn::evaluate(model, t, cfg.metric());
      std::ostringstream body;
      body.precision(17);
      body << "split\trecords\tmetric\tvalue\n"
           << split_name << '\t' << t.rows() << '\t' << tgn::to_string(cfg.metric()) << '\t' << v << '\n';
      emit(cfg, common, "evaluation", seed, "evaluation.tsv", body.str());
      std::cout << tgn::to_string(cfg.metric()) << ' ' << v << '\n';
      return 0;
    }

    const tgn::ModelParams& tg = require_graph_model(model, explain_cmd->parsed() ? "explain" : "audit");

    if (explain_cmd->parsed()) {
      tgn::Vector x;
      tgn::MaskVector mask;
      if (!row_text.empty() || row_opt->count() > 0) {
        auto [raw, m] = parse_row(row_text, tg.spec.attributes);
        x = tgn::Vector::Zero(raw.size());
        for (tgn::Index k = 0; k < raw.size(); ++k) {
          if (m[k]) x[k] = tgn::scale_value(tg.scaler, k, raw[k]);
        }
        mask = m;
      } else {
        if (!record_index) throw tgn::UsageError("explain needs --record or --row");
        const tgn::Table t = tgn::apply_scaler(data_split(), tg.scaler);
        if (*record_index < 0 || *record_index >= t.rows()) {
          throw tgn::UsageError("record index " + std::to_string(*record_index) + " outside [0, " +
                                std::to_string(t.rows()) + ")");
        }
        x = t.values.row(*record_index).transpose();
        mask = t.mask.row(*record_index).transpose();
      }
      const tgn::AttributionReport rep = tgn::attribution_report(tg, x, mask);
      emit(cfg, common, "attribution", seed, "attribution.tsv", tgn::format_attribution(rep));
      if (!grid_shape.empty()) {
        const auto shape = parse_grid_shape(grid_shape);
        const tgn::Index cls = class_index >= 0 ? class_index : rep.predicted_class.value_or(0);
        const std::string path = out_path(cfg, "grid_class" + std::to_string(cls) + ".csv");
        fs::create_directories(cfg.output_dir());
        tgn::export_contribution_grid(rep, shape[0], shape[1], cls, path);
        std::cout << "wrote " << path << '\n';
      }
      return 0;
    }

    if (audit_cmd->parsed()) {
      tgn::Table t = tgn::apply_scaler(data_split(), tg.scaler);
      const tgn::Index limit = audit_records.value_or(cfg.audit_records());
      if (limit > 0 && limit < t.rows()) {
        std::vector<tgn::Index> ids(static_cast<std::size_t>(limit));
        for (tgn::Index i = 0; i < limit; ++i) ids[static_cast<std::size_t>(i)] = i;
        t = t.subset(ids);
      }
      const tgn::AxiomReport ax = tgn::verify_axioms(tg, t);
      emit(cfg, common, "axioms", seed, "axioms.tsv", tgn::format_axioms(ax));
      if (tg.info.task == tgn::TaskKind::Classification) {
        const tgn::ConsistencyReport rep = tgn::consistency_audit(tg, t, cfg.audit_options());
        emit(cfg, common, "audit", seed, "audit.tsv", tgn::format_audit_report(rep));
        std::cout << "consistency (" << tgn::to_string(cfg.audit_mode()) << ") "
                  << rep.met(cfg.audit_mode()) << " over " << rep.total << " conditions\n";
      } else {
        std::cout << "regression model: consistency census skipped\n";
      }
      return ax.passed(1e-9) ? 0 : 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "tablegraphnet: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
