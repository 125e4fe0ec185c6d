#pragma once

#include "tgn/explain.hpp"
#include "tgn/trainer.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tgn {

/// Line-oriented experiment configuration.
///
///     # comment
///     [data]
///     path = data/boston_housing.csv
///     target = MEDV
///
/// Sections and keys are listed by `config_reference()`. Candidate sections
/// are named `[candidate NAME]` and accept any `model.*` or `train.*` key.
class ExperimentConfig {
 public:
  ExperimentConfig();

  static ExperimentConfig parse(std::istream& in, const std::string& source = "<config>");
  static ExperimentConfig load(const std::string& path);

  // `section.key=value`; candidate keys are `candidate.NAME.model.graphs=8`.
  void set(const std::string& assignment);
  void set(const std::string& section, const std::string& key, const std::string& value);
  std::string get(const std::string& section, const std::string& key) const;

  // Canonical text of every effective value, sorted by section then key.
  std::string canonical() const;
  // FNV-1a 64 of canonical() without output_dir and workers, as 16 hex digits.
  std::string hash() const;

  TableSchema schema() const;
  std::string data_path() const;
  SplitFractions fractions() const;
  ModelConfig model() const;
  TrainConfig train() const;
  HyperGrid grid() const;
  // Candidate sections if any; otherwise every grid cell; otherwise the base config.
  std::vector<Candidate> candidates() const;
  Metric metric() const;
  int trials() const;
  std::uint64_t seed() const;
  std::string output_dir() const;
  int workers() const;
  AuditMode audit_mode() const;
  AuditOptions audit_options() const;
  Index audit_records() const;  // 0 = every test record

 private:
  using Section = std::map<std::string, std::string>;
  std::map<std::string, Section> sections_;
  std::map<std::string, Section> candidates_;

  void set_checked(const std::string& section, const std::string& key, const std::string& value,
                   const std::string& where);
  std::string canonical_text(bool with_runtime) const;
  ModelConfig model_from(const Section* overrides) const;
  TrainConfig train_from(const Section* overrides) const;
};

// Reference text listing sections, keys and defaults.
std::string config_reference();

std::uint64_t fnv1a64(const std::string& text);

// ---- Result files -----------------------------------------------------------

struct OutputHeader {
  std::string kind;  // e.g. "history", "leaderboard"
  std::string config_hash;
  std::uint64_t seed = 0;
  bool timestamp = true;

  // '#'-prefixed lines naming the producer, config hash and seed.
  std::string text() const;
};

void write_text_file(const std::string& path, const std::string& body);

std::string format_history(const TrainHistory& history);
std::string format_leaderboard(const GridResult& result);
std::string format_trials(const TrialSummary& summary);
std::string format_timings(const TrialSummary& summary);
std::string format_attribution(const AttributionReport& report);
std::string format_axioms(const AxiomReport& report);

}  // namespace tgn
