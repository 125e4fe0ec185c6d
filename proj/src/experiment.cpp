#include "tgn/experiment.hpp"

#include "tgn/random.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tgn {

namespace {

struct KeyDoc {
  const char* section;
  const char* key;
  const char* fallback;
  const char* doc;
};

// clang-format off
constexpr KeyDoc kKeys[] = {
    {"data", "path", "", "delimited text file with a header row"},
    {"data", "target", "", "target column name"},
    {"data", "task", "regression", "regression | classification"},
    {"data", "delimiter", ",", "single field separator character"},
    {"data", "missing", "NA|NaN|?", "'|'-separated tokens read as missing (empty cells always are)"},
    {"data", "test_fraction", "0.2", "share of records held out for testing"},
    {"data", "validation_fraction", "0.16", "share of records used for early stopping"},
    {"model", "kind", "tablegraphnet", "tablegraphnet | dense"},
    {"model", "encoding", "one-hot", "attribute encoding: one-hot | none"},
    {"model", "graphs", "1", "number of distance networks G"},
    {"model", "distance_hidden", "16,8", "hidden sizes of each distance network"},
    {"model", "filters", "1", "number of contribution filters F"},
    {"model", "filter_hidden", "16", "hidden sizes of each contribution filter"},
    {"model", "node_features", "sum-outflow", "comma list of sum-outflow, sum-inflow"},
    {"model", "dense_hidden", "16", "hidden sizes of the dense baseline"},
    {"train", "max_epochs", "10000", ""},
    {"train", "early_stopping", "true", ""},
    {"train", "min_delta", "0.01", "required validation improvement"},
    {"train", "patience", "200", "epochs without improvement before stopping"},
    {"train", "learning_rate", "0.001", "Adam base rate"},
    {"train", "decay_rate", "1", "rate multiplier per decay period"},
    {"train", "decay_period", "1000", "optimizer steps per decay period"},
    {"train", "batch_size", "32", ""},
    {"train", "full_batch_below", "200", "training sets smaller than this use one batch"},
    {"train", "l2", "0", "weight penalty coefficient"},
    {"train", "strategy", "classic", "classic | augmented"},
    {"train", "missing_p", "0.5", "drop probability for augmented training"},
    {"grid", "graphs", "", "comma list"},
    {"grid", "filters", "", "comma list"},
    {"grid", "distance_hidden", "", "';'-separated architectures, e.g. 16;24,8"},
    {"grid", "filter_hidden", "", "';'-separated architectures"},
    {"grid", "dense_hidden", "", "';'-separated architectures"},
    {"grid", "l2", "", "comma list"},
    {"grid", "learning_rate", "", "comma list"},
    {"experiment", "trials", "5", ""},
    {"experiment", "metric", "rmse", "rmse | auc-macro | accuracy"},
    {"experiment", "seed", "0", "global seed; trial i uses seed + i"},
    {"experiment", "output_dir", "", "defaults to $TGN_OUTPUT_DIR, then ./results"},
    {"experiment", "workers", "1", "parallel trials, grid cells or audit partitions"},
    {"audit", "mode", "conditional", "conditional | implication"},
    {"audit", "z_samples", "0", "extra masked variants per record (0: z = x only)"},
    {"audit", "z_missing_p", "0.5", "drop probability for sampled variants"},
    {"audit", "records", "0", "audit the first N test records (0: all)"},
    {"audit", "self_pairing", "false", "compare every class output with itself"},
};
// clang-format on

const KeyDoc* find_key(const std::string& section, const std::string& key) {
  for (const auto& k : kKeys) {
    if (section == k.section && key == k.key) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T value{};
  in >> value;
  if (in.fail() || !(in >> std::ws).eof()) {
    throw ConfigError("key '" + key + "': cannot read '" + text + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<Index> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<Index> sizes;
  if (trim(text).empty()) return sizes;
  for (const auto& p : split_on(text, ',')) sizes.push_back(parse_number<Index>(key, p));
  return sizes;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  for (const auto& p : split_on(text, ',')) out.push_back(parse_number<T>(key, p));
  return out;
}

std::vector<std::vector<Index>> parse_architectures(const std::string& key, const std::string& text) {
  std::vector<std::vector<Index>> out;
  if (trim(text).empty()) return out;
  for (const auto& p : split_on(text, ';')) out.push_back(parse_sizes(key, p));
  return out;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : kKeys) sections_[k.section][k.key] = k.fallback;
}

void ExperimentConfig::set_checked(const std::string& section, const std::string& key,
                                   const std::string& value, const std::string& where) {
  if (section.rfind("candidate ", 0) == 0 || section.rfind("candidate.", 0) == 0) {
    const std::string name = trim(section.substr(10));
    if (name.empty()) throw ConfigError(where + "candidate section needs a name");
    const auto dot = key.find('.');
    const std::string base = dot == std::string::npos ? "" : key.substr(0, dot);
    if ((base != "model" && base != "train") || !find_key(base, key.substr(dot + 1))) {
      throw ConfigError(where + "unknown key '" + key + "' in [candidate " + name + "]");
    }
    candidates_[name][key] = value;
    return;
  }
  if (!sections_.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
  if (!find_key(section, key)) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
  sections_[section][key] = value;
}

ExperimentConfig ExperimentConfig::parse(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::string line;
  std::string section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = source + ":" + std::to_string(number) + ": ";
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (t[i] == '#' && (t[i - 1] == ' ' || t[i - 1] == '\t')) {
        t = trim(t.substr(0, i));
        break;
      }
    }
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (!cfg.sections_.count(section) && section.rfind("candidate ", 0) != 0) {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside any section");
    cfg.set_checked(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)), where);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in, path);
}

void ExperimentConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' needs section.key=value");
  const std::string lhs = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (lhs.rfind("candidate.", 0) == 0) {
    const auto dot = lhs.find('.', 10);
    if (dot == std::string::npos) throw ConfigError("override '" + assignment + "' names no key");
    set_checked("candidate " + lhs.substr(10, dot - 10), lhs.substr(dot + 1), value, "--set: ");
    return;
  }
  const auto dot = lhs.find('.');
  if (dot == std::string::npos) throw ConfigError("override '" + assignment + "' needs section.key=value");
  set_checked(lhs.substr(0, dot), lhs.substr(dot + 1), value, "--set: ");
}

void ExperimentConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  set_checked(section, key, value, "");
}

std::string ExperimentConfig::get(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end() || !s->second.count(key)) {
    throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  }
  return s->second.at(key);
}

namespace {

// Keys that only say where and how fast to run; they never change results.
bool runtime_only(const std::string& section, const std::string& key) {
  return section == "experiment" && (key == "output_dir" || key == "workers");
}

}  // namespace

std::string ExperimentConfig::canonical_text(bool with_runtime) const {
  std::ostringstream os;
  for (const auto& [section, keys] : sections_) {
    os << '[' << section << "]\n";
    for (const auto& [key, value] : keys) {
      if (with_runtime || !runtime_only(section, key)) os << key << " = " << value << '\n';
    }
  }
  for (const auto& [name, keys] : candidates_) {
    os << "[candidate " << name << "]\n";
    for (const auto& [key, value] : keys) os << key << " = " << value << '\n';
  }
  return os.str();
}

std::string ExperimentConfig::canonical() const { return canonical_text(true); }

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ExperimentConfig::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(canonical_text(false));
  return os.str();
}

TableSchema ExperimentConfig::schema() const {
  TableSchema s;
  s.target = get("data", "target");
  if (s.target.empty()) throw ConfigError("data.target is not set");
  s.task = task_from_string(get("data", "task"));
  const std::string delim = get("data", "delimiter");
  if (delim == "\\t" || delim == "tab") {
    s.delimiter = '\t';
  } else if (delim.size() == 1) {
    s.delimiter = delim[0];
  } else {
    throw ConfigError("data.delimiter must be a single character");
  }
  s.missing_tokens = {""};
  for (const auto& tok : split_on(get("data", "missing"), '|')) {
    if (!tok.empty()) s.missing_tokens.push_back(tok);
  }
  return s;
}

std::string ExperimentConfig::data_path() const {
  const std::string p = get("data", "path");
  if (p.empty()) throw ConfigError("data.path is not set");
  return p;
}

SplitFractions ExperimentConfig::fractions() const {
  SplitFractions f;
  f.test = parse_number<double>("data.test_fraction", get("data", "test_fraction"));
  f.validation = parse_number<double>("data.validation_fraction", get("data", "validation_fraction"));
  f.train = 1.0 - f.test - f.validation;
  if (f.train <= 0.0) throw ConfigError("test and validation fractions leave no training data");
  return f;
}

ModelConfig ExperimentConfig::model_from(const Section* overrides) const {
  const auto value = [&](const std::string& key) {
    if (overrides) {
      const auto it = overrides->find("model." + key);
      if (it != overrides->end()) return it->second;
    }
    return get("model", key);
  };
  ModelConfig m;
  m.kind = model_kind_from_string(value("kind"));
  m.encoding = encoding_from_string(value("encoding"));
  m.graphs = parse_number<Index>("model.graphs", value("graphs"));
  m.distance_hidden = parse_sizes("model.distance_hidden", value("distance_hidden"));
  m.filters = parse_number<Index>("model.filters", value("filters"));
  m.filter_hidden = parse_sizes("model.filter_hidden", value("filter_hidden"));
  m.node_features.clear();
  for (const auto& f : split_on(value("node_features"), ',')) m.node_features.push_back(node_feature_from_string(f));
  m.dense_hidden = parse_sizes("model.dense_hidden", value("dense_hidden"));
  return m;
}

TrainConfig ExperimentConfig::train_from(const Section* overrides) const {
  const auto value = [&](const std::string& key) {
    if (overrides) {
      const auto it = overrides->find("train." + key);
      if (it != overrides->end()) return it->second;
    }
    return get("train", key);
  };
  TrainConfig t;
  t.max_epochs = parse_number<int>("train.max_epochs", value("max_epochs"));
  t.early_stopping = parse_bool("train.early_stopping", value("early_stopping"));
  t.min_delta = parse_number<double>("train.min_delta", value("min_delta"));
  t.patience = parse_number<int>("train.patience", value("patience"));
  t.learning_rate = parse_number<double>("train.learning_rate", value("learning_rate"));
  t.decay_rate = parse_number<double>("train.decay_rate", value("decay_rate"));
  t.decay_period = parse_number<double>("train.decay_period", value("decay_period"));
  t.batch_size = parse_number<Index>("train.batch_size", value("batch_size"));
  t.full_batch_below = parse_number<Index>("train.full_batch_below", value("full_batch_below"));
  t.l2 = parse_number<double>("train.l2", value("l2"));
  t.strategy = strategy_from_string(value("strategy"));
  t.missing_p = parse_number<double>("train.missing_p", value("missing_p"));
  t.seed = seed();
  t.validate();
  return t;
}

ModelConfig ExperimentConfig::model() const { return model_from(nullptr); }
TrainConfig ExperimentConfig::train() const { return train_from(nullptr); }

HyperGrid ExperimentConfig::grid() const {
  HyperGrid g;
  g.graphs = parse_list<Index>("grid.graphs", get("grid", "graphs"));
  g.filters = parse_list<Index>("grid.filters", get("grid", "filters"));
  g.distance_hidden = parse_architectures("grid.distance_hidden", get("grid", "distance_hidden"));
  g.filter_hidden = parse_architectures("grid.filter_hidden", get("grid", "filter_hidden"));
  g.dense_hidden = parse_architectures("grid.dense_hidden", get("grid", "dense_hidden"));
  g.l2 = parse_list<double>("grid.l2", get("grid", "l2"));
  g.learning_rate = parse_list<double>("grid.learning_rate", get("grid", "learning_rate"));
  return g;
}

std::vector<Candidate> ExperimentConfig::candidates() const {
  std::vector<Candidate> out;
  if (!candidates_.empty()) {
    for (const auto& [name, keys] : candidates_) out.push_back({model_from(&keys), train_from(&keys)});
    return out;
  }
  for (const auto& cell : expand_grid(grid(), model(), train())) out.push_back({cell.model, cell.train});
  return out;
}

Metric ExperimentConfig::metric() const { return metric_from_string(get("experiment", "metric")); }

int ExperimentConfig::trials() const {
  const int n = parse_number<int>("experiment.trials", get("experiment", "trials"));
  if (n < 1) throw ConfigError("experiment.trials must be >= 1");
  return n;
}

std::uint64_t ExperimentConfig::seed() const {
  return parse_number<std::uint64_t>("experiment.seed", get("experiment", "seed"));
}

std::string ExperimentConfig::output_dir() const {
  const std::string dir = get("experiment", "output_dir");
  if (!dir.empty()) return dir;
  if (const char* env = std::getenv("TGN_OUTPUT_DIR"); env && *env) return env;
  return "results";
}

int ExperimentConfig::workers() const {
  const int n = parse_number<int>("experiment.workers", get("experiment", "workers"));
  if (n < 1) throw ConfigError("experiment.workers must be >= 1");
  return n;
}

AuditMode ExperimentConfig::audit_mode() const { return audit_mode_from_string(get("audit", "mode")); }

AuditOptions ExperimentConfig::audit_options() const {
  AuditOptions o;
  o.z.samples = parse_number<Index>("audit.z_samples", get("audit", "z_samples"));
  o.z.missing_p = parse_number<double>("audit.z_missing_p", get("audit", "z_missing_p"));
  o.z.seed = mix_seed(seed(), 7);
  o.self_pairing = parse_bool("audit.self_pairing", get("audit", "self_pairing"));
  o.workers = workers();
  return o;
}

Index ExperimentConfig::audit_records() const {
  const Index n = parse_number<Index>("audit.records", get("audit", "records"));
  if (n < 0) throw ConfigError("audit.records must be >= 0");
  return n;
}

std::string config_reference() {
  std::ostringstream os;
  std::string section;
  for (const auto& k : kKeys) {
    if (section != k.section) {
      section = k.section;
      os << (os.tellp() > 0 ? "\n" : "") << '[' << section << "]\n";
    }
    os << k.key << " = " << k.fallback;
    if (*k.doc) os << "    # " << k.doc;
    os << '\n';
  }
  os << "\n[candidate NAME]\n# any model.KEY or train.KEY; overrides the sections above\n";
  return os.str();
}

// ---- Result files -----------------------------------------------------------

std::string OutputHeader::text() const {
  std::ostringstream os;
  os << "# tablegraphnet " << kind << '\n';
  os << "# config_hash " << config_hash << '\n';
  os << "# seed " << seed << '\n';
  if (timestamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    os << "# created " << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ") << '\n';
  }
  return os.str();
}

void write_text_file(const std::string& path, const std::string& body) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << body;
  if (!out) throw Error("write failed for " + path);
}

namespace {

std::ostringstream precise() {
  std::ostringstream os;
  os << std::setprecision(17);
  return os;
}

std::string sizes_text(const std::vector<Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::string format_history(const TrainHistory& h) {
  auto os = precise();
  os << "# best_epoch " << h.best_epoch << "\n# best_validation_loss " << h.best_validation_loss
     << "\n# stopped_early " << (h.stopped_early ? "true" : "false") << '\n';
  os << "epoch\ttrain_loss\tvalidation_loss\tlearning_rate\n";
  for (const auto& e : h.epochs) {
    os << e.epoch << '\t' << e.train_loss << '\t' << e.validation_loss << '\t' << e.learning_rate << '\n';
  }
  return os.str();
}

std::string format_leaderboard(const GridResult& r) {
  auto os = precise();
  os << "rank\tcell\tvalidation_loss\tparameters\tbest_epoch\tkind\tgraphs\tdistance_hidden\tfilters\t"
        "filter_hidden\tdense_hidden\tl2\tlearning_rate\n";
  const auto row = [&](const LeaderboardEntry& e, const std::string& rank) {
    const auto& m = e.cell.model;
    os << rank << '\t' << e.cell.index << '\t' << e.validation_loss << '\t' << e.parameters << '\t'
       << e.best_epoch << '\t' << to_string(m.kind) << '\t' << m.graphs << '\t'
       << sizes_text(m.distance_hidden) << '\t' << m.filters << '\t' << sizes_text(m.filter_hidden) << '\t'
       << sizes_text(m.dense_hidden) << '\t' << e.cell.train.l2 << '\t' << e.cell.train.learning_rate
       << '\n';
  };
  for (std::size_t i = 0; i < r.ranked.size(); ++i) row(r.ranked[i], std::to_string(i + 1));
  for (const auto& e : r.failed) os << "# failed cell " << e.cell.index << ": " << e.error << '\n';
  return os.str();
}

std::string format_trials(const TrialSummary& s) {
  auto os = precise();
  os << "trial\tseed\t" << to_string(s.metric) << "\tvalidation_loss\tcandidate\tbest_epoch\tepochs\n";
  for (std::size_t i = 0; i < s.trials.size(); ++i) {
    const auto& t = s.trials[i];
    os << i << '\t' << t.seed << '\t' << t.metric << '\t' << t.validation_loss << '\t' << t.candidate
       << '\t' << t.best_epoch << '\t' << t.epochs_run << '\n';
  }
  os << "# mean " << s.mean << "\n# std " << s.stddev << '\n';
  return os.str();
}

std::string format_timings(const TrialSummary& s) {
  auto os = precise();
  os << "trial\tseed\tseconds\n";
  for (std::size_t i = 0; i < s.trials.size(); ++i) {
    os << i << '\t' << s.trials[i].seed << '\t' << std::setprecision(4) << s.trials[i].seconds
       << std::setprecision(17) << '\n';
  }
  return os.str();
}

std::string format_attribution(const AttributionReport& r) {
  auto os = precise();
  const Index c = r.output.size();
  const auto class_name = [&](Index j) {
    if (r.task == TaskKind::Regression) return std::string("output");
    std::ostringstream n;
    n << "class_" << r.class_values[static_cast<std::size_t>(j)];
    return n.str();
  };
  os << "term\tvalue\tpresent";
  for (Index j = 0; j < c; ++j) os << '\t' << class_name(j);
  os << "\nrho0\t\t";
  for (Index j = 0; j < c; ++j) os << '\t' << r.rho0[j];
  os << '\n';
  for (Index k = 0; k < r.contributions.rows(); ++k) {
    const std::string name = k < static_cast<Index>(r.attribute_names.size())
                                 ? r.attribute_names[static_cast<std::size_t>(k)]
                                 : "x" + std::to_string(k);
    os << name << '\t' << r.record[k] << '\t' << (r.mask[k] ? 1 : 0);
    for (Index j = 0; j < c; ++j) os << '\t' << r.contributions(k, j);
    os << '\n';
  }
  os << "output\t\t";
  for (Index j = 0; j < c; ++j) os << '\t' << r.output[j];
  os << '\n';
  if (r.predicted_class) {
    os << "probability\t\t";
    for (Index j = 0; j < c; ++j) os << '\t' << r.probabilities[j];
    os << "\n# predicted_class " << r.class_values[static_cast<std::size_t>(*r.predicted_class)] << '\n';
  }
  return os.str();
}

std::string format_axioms(const AxiomReport& r) {
  auto os = precise();
  os << "records\tmasked_cells\tmissingness_violations\tmax_local_accuracy_residual\t"
        "all_missing_equals_rho0\n";
  os << r.records << '\t' << r.masked_cells << '\t' << r.missingness_violations << '\t'
     << r.max_local_accuracy_residual << '\t' << (r.all_missing_equals_rho0 ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace tgn
