// Copyright 2026 The Fusearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "CLI11.hpp"
#include "fusearch/data.h"
#include "fusearch/errors.h"
#include "fusearch/evolution.h"
#include "fusearch/graph.h"
#include "fusearch/search_space.h"
#include "fusearch/trainer.h"
#include "json.hpp"

namespace fusearch::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Settings

Settings::Settings() {
  const SearchConfig s;
  const TrainConfig t;
  const DatasetSpec d;
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  values_ = {
      {"search.population", std::to_string(s.population)},
      {"search.tournament", std::to_string(s.tournament)},
      {"search.candidates", std::to_string(s.candidates)},
      {"search.mutation_rate", num(s.mutation_rate)},
      {"search.seed_kind", std::string(ToString(s.seed_kind))},
      {"search.space", std::string(ToString(s.space))},
      {"search.modalities", std::to_string(s.modalities)},
      {"search.seed", std::to_string(s.seed)},
      {"search.evaluator", std::string(ToString(s.evaluator))},
      {"search.mode", std::string(ToString(s.mode))},
      {"search.workers", "0"},  // 0 = available parallelism
      {"search.checkpoint_every", std::to_string(s.checkpoint_every)},
      {"train.steps", std::to_string(t.steps)},
      {"train.batch_size", std::to_string(t.batch_size)},
      {"train.peak_lr", num(t.peak_lr)},
      {"train.schedule", std::string(ToString(t.schedule))},
      {"train.seed", std::to_string(t.seed)},
      {"train.budget", std::to_string(t.budget)},
      {"train.embedding_width", std::to_string(t.embedding_width)},
      {"train.recall_k", std::to_string(t.recall_k)},
      {"train.routing", std::string(ToString(t.routing))},
      {"train.max_width", std::to_string(t.max_width)},
      {"data.file", ""},
      {"data.num_examples", std::to_string(d.num_examples)},
      {"data.groups", std::to_string(d.groups)},
      {"data.length", std::to_string(d.length)},
      {"data.days", std::to_string(d.days)},
      {"data.bag_hours", num(d.bag_hours)},
      {"data.day_presence", num(d.day_presence)},
      {"data.categorical_vocab", std::to_string(d.categorical_vocab)},
      {"data.notes_vocab", std::to_string(d.notes_vocab)},
      {"data.tokens_per_bag", std::to_string(d.tokens_per_bag)},
      {"data.continuous_features", std::to_string(d.continuous_features)},
      {"data.missing_rate", num(d.missing_rate)},
      {"data.signal", num(d.signal)},
      {"data.lambda", num(d.lambda)},
      {"data.seed", std::to_string(d.seed)},
  };
}

void Settings::Set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
}

void Settings::LoadIni(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("cannot read config file: " + std::string(e.what()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError("config key '" + section + "' must be inside a section");
    }
    for (const auto& [key, value] : body) Set(section + "." + key, value.data());
  }
}

void Settings::LoadEnvironment(const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    bool matched = false;
    for (const auto& [key, unused] : values_) {
      std::string env_name = prefix + key;
      for (char& c : env_name) c = c == '.' ? '_' : static_cast<char>(std::toupper(c));
      if (env_name == name) {
        Set(key, value);
        matched = true;
        break;
      }
    }
    if (!matched) throw ConfigError("unknown environment override " + name);
  }
}

const std::string& Settings::Get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

namespace {

template <typename T>
T ParseNumber(const std::string& key, const std::string& text) {
  T value{};
  std::istringstream is(text);
  is >> value;
  if (!is || !(is >> std::ws).eof()) {
    throw ConfigError("configuration key '" + key + "' has invalid value '" + text + "'");
  }
  return value;
}

}  // namespace

int Settings::GetInt(const std::string& key) const { return ParseNumber<int>(key, Get(key)); }
std::int64_t Settings::GetInt64(const std::string& key) const {
  return ParseNumber<std::int64_t>(key, Get(key));
}
std::uint64_t Settings::GetUint64(const std::string& key) const {
  if (!Get(key).empty() && Get(key)[0] == '-') {
    throw ConfigError("configuration key '" + key + "' must be non-negative");
  }
  return ParseNumber<std::uint64_t>(key, Get(key));
}
double Settings::GetDouble(const std::string& key) const {
  return ParseNumber<double>(key, Get(key));
}

std::string Settings::ToIni() const {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, value] : values_) {
    const std::string s = key.substr(0, key.find('.'));
    if (s != section) {
      if (!section.empty()) os << "\n";
      os << "[" << s << "]\n";
      section = s;
    }
    os << key.substr(key.find('.') + 1) << " = " << value << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Typed views

namespace {

// Converts parse failures of enumerated values into configuration errors.
template <typename F>
auto Parsed(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

SearchConfig SearchFrom(const Settings& s) {
  SearchConfig c;
  c.population = s.GetInt("search.population");
  c.tournament = s.GetInt("search.tournament");
  c.candidates = s.GetInt("search.candidates");
  c.mutation_rate = s.GetDouble("search.mutation_rate");
  c.seed_kind = Parsed("search.seed_kind", [&] { return ParseFusionKind(s.Get("search.seed_kind")); });
  c.space = Parsed("search.space", [&] { return ParseSearchSpace(s.Get("search.space")); });
  c.modalities = s.GetInt("search.modalities");
  c.seed = s.GetUint64("search.seed");
  c.evaluator =
      Parsed("search.evaluator", [&] { return ParseEvaluatorKind(s.Get("search.evaluator")); });
  c.mode = Parsed("search.mode", [&] { return ParseSearchMode(s.Get("search.mode")); });
  c.workers = s.GetInt("search.workers");
  if (c.workers == 0) c.workers = std::max(1u, std::thread::hardware_concurrency());
  c.checkpoint_every = s.GetInt("search.checkpoint_every");
  Parsed("search", [&] {
    c.Validate();
    return 0;
  });
  return c;
}

TrainConfig TrainFrom(const Settings& s) {
  TrainConfig t;
  t.steps = s.GetInt("train.steps");
  t.batch_size = s.GetInt("train.batch_size");
  t.peak_lr = s.GetDouble("train.peak_lr");
  t.schedule = Parsed("train.schedule", [&] { return ParseSchedule(s.Get("train.schedule")); });
  t.seed = s.GetUint64("train.seed");
  t.budget = s.GetInt64("train.budget");
  t.embedding_width = s.GetInt("train.embedding_width");
  t.recall_k = s.GetInt("train.recall_k");
  t.routing = Parsed("train.routing", [&] { return ParseRouting(s.Get("train.routing")); });
  t.max_width = s.GetInt("train.max_width");
  Parsed("train", [&] {
    t.Validate();
    return 0;
  });
  return t;
}

DatasetSpec DataFrom(const Settings& s) {
  DatasetSpec d;
  d.num_examples = s.GetInt("data.num_examples");
  d.groups = s.GetInt("data.groups");
  d.length = s.GetInt("data.length");
  d.days = s.GetInt("data.days");
  d.bag_hours = s.GetDouble("data.bag_hours");
  d.day_presence = s.GetDouble("data.day_presence");
  d.categorical_vocab = s.GetInt("data.categorical_vocab");
  d.notes_vocab = s.GetInt("data.notes_vocab");
  d.tokens_per_bag = s.GetInt("data.tokens_per_bag");
  d.continuous_features = s.GetInt("data.continuous_features");
  d.missing_rate = s.GetDouble("data.missing_rate");
  d.signal = s.GetDouble("data.signal");
  d.lambda = s.GetDouble("data.lambda");
  d.seed = s.GetUint64("data.seed");
  Parsed("data", [&] {
    d.Validate();
    return 0;
  });
  return d;
}

Dataset LoadData(const Settings& s) {
  const std::string& file = s.Get("data.file");
  if (file.empty()) return Generate(DataFrom(s));
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open dataset file " + file);
  return ReadDataset(in);
}

Genome LoadGenome(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open genome file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return GenomeFromJson(buf.str());
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Input widths a genome sees when trained on the three data modalities.
std::vector<int> InputWidths(const Genome& g, const TrainConfig& t) {
  const int d = t.embedding_width;
  return std::vector<int>(g.modality_count(),
                          t.routing == Routing::kPerModality ? d : kDataModalities * d);
}

std::string Hex64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  std::string genome;
};

Settings Resolve(const Common& c, const std::map<std::string, std::string>& env) {
  Settings s;
  if (!c.config.empty()) s.LoadIni(c.config);
  s.LoadEnvironment(env);
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    s.Set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return s;
}

Genome GenomeFor(const Common& c, const SearchConfig& search) {
  return c.genome.empty() ? search.SeedGenome() : LoadGenome(c.genome);
}

int Search(const Settings& s, const fs::path& out, bool resume, std::int64_t stop_after,
           Streams io, const std::atomic<bool>* interrupt) {
  const SearchConfig config = SearchFrom(s);
  TrainConfig train = TrainFrom(s);
  train.routing =
      config.space == SearchSpace::kUnimodal ? Routing::kConcatenated : Routing::kPerModality;
  std::optional<Dataset> data;
  if (config.evaluator == EvaluatorKind::kNeural) data = LoadData(s);

  const fs::path checkpoint = out / "checkpoint.json";
  if (resume) {
    if (!fs::exists(checkpoint)) throw ConfigError("--resume: no checkpoint in " + out.string());
  } else if (fs::exists(out) && !fs::is_empty(out)) {
    throw ConfigError("output directory " + out.string() +
                      " is not empty; pass --resume to continue a search");
  }
  fs::create_directories(out);
  WriteFile(out / "config.ini", s.ToIni());

  // Neural evaluation settings change fitness, so they join the config hash.
  std::string salt;
  if (config.evaluator == EvaluatorKind::kNeural) {
    Settings view = s;
    view.Set("search.workers", "0");
    salt = view.ToIni();
    salt = salt.substr(0, salt.find("[search]"));
  }

  // The candidate log is rebuilt from the checkpoint so that it always holds
  // exactly the recorded children.
  std::ofstream log;
  {
    std::ostringstream initial;
    if (resume) {
      for (const auto& h : ReadCheckpoint(checkpoint.string()).history) {
        initial << LogRecord(h) << "\n";
      }
    }
    log.open(out / "candidates.jsonl", std::ios::trunc);
    log << initial.str() << std::flush;
  }
  std::mutex eval_log_mu;
  std::ofstream eval_log;
  Evaluator evaluator = SurrogateEvaluator();
  if (data) {
    eval_log.open(out / "evaluations.jsonl", resume ? std::ios::app : std::ios::trunc);
    evaluator = [&](const Genome& g, std::uint64_t seed) {
      TrainConfig t = train;
      t.seed = seed;
      std::ostringstream record;
      const FitnessResult r = EvaluateCandidate(g, *data, t, &record, Hex64(GenomeToJson(g)));
      {
        std::lock_guard lock(eval_log_mu);
        eval_log << record.str() << std::flush;
      }
      return Evaluation{r.rejected ? 0.0 : r.fitness, r.rejected};
    };
  }

  SearchOptions options;
  options.checkpoint_path = checkpoint.string();
  options.resume = resume;
  options.hash_salt = salt;
  options.stop_after = stop_after;
  options.interrupt = interrupt;
  options.on_child = [&](const Individual& child, const SearchState&) {
    log << LogRecord(child) << "\n" << std::flush;
  };
  const SearchResult r = RunSearch(config, evaluator, options);

  WriteFile(out / "best_genome.json", GenomeToJson(r.best.genome) + "\n");
  try {
    const ComputationGraph g =
        Compile(r.best.genome, InputWidths(r.best.genome, train), s.GetInt("data.length"));
    WriteFile(out / "best.dot", ToDot(g, "best"));
  } catch (const CompileError& e) {
    io.err << "warning: best genome does not compile for the diagram: " << e.what() << "\n";
  }
  const bool stopped = r.interrupted || static_cast<int>(r.history.size()) < config.candidates;
  json summary = {{"best_fitness", r.best.fitness},
                  {"best_id", r.best.id},
                  {"candidates", r.history.size()},
                  {"interrupted", stopped},
                  {"config_hash", ConfigHash(config, salt)}};
  WriteFile(out / "summary.json", summary.dump(2) + "\n");
  io.out << "candidates " << r.history.size() << "/" << config.candidates << ", best fitness "
         << r.best.fitness << " (id " << r.best.id << ")\n";
  if (stopped) {
    io.err << "search interrupted; resume with --resume\n";
    return kExitInterrupted;
  }
  return kExitOk;
}

int CompileCommand(const Settings& s, const Common& c, Streams io) {
  const SearchConfig search = SearchFrom(s);
  const TrainConfig train = TrainFrom(s);
  const Genome g = GenomeFor(c, search);
  CompileOptions options;
  options.max_width = train.max_width;
  const ComputationGraph graph =
      Compile(g, InputWidths(g, train), s.GetInt("data.length"), Vocabulary::Default(), options);
  const std::string text = ToGraphJson(graph);
  if (c.out.empty()) {
    io.out << text << "\n";
  } else {
    WriteFile(c.out, text + "\n");
  }
  const FusionReport fusion = ClassifyFusion(graph);
  io.err << "nodes " << graph.nodes.size() << ", parameters " << graph.parameter_count
         << ", budget "
         << (EnforceBudget(graph, train.budget) == BudgetDecision::kAccept ? "ok" : "exceeded")
         << "\n";
  for (std::size_t m = 0; m < fusion.per_modality.size(); ++m) {
    io.err << "modality " << m << ":";
    for (FusionKind k : fusion.per_modality[m]) io.err << " " << ToString(k);
    if (fusion.disconnected[m]) io.err << " (disconnected)";
    io.err << "\n";
  }
  return kExitOk;
}

int ExportDot(const Settings& s, const Common& c, Streams io) {
  const SearchConfig search = SearchFrom(s);
  const TrainConfig train = TrainFrom(s);
  const Genome g = GenomeFor(c, search);
  const std::string dot =
      ToDot(Compile(g, InputWidths(g, train), s.GetInt("data.length")), "fusearch");
  if (c.out.empty()) {
    io.out << dot;
  } else {
    WriteFile(c.out, dot);
  }
  return kExitOk;
}

int TrainOne(const Settings& s, const Common& c, Streams io) {
  const SearchConfig search = SearchFrom(s);
  const TrainConfig train = TrainFrom(s);
  const Genome g = GenomeFor(c, search);
  const Dataset data = LoadData(s);
  std::ostringstream record;
  const FitnessResult r = EvaluateCandidate(g, data, train, &record, Hex64(GenomeToJson(g)));
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    WriteFile(fs::path(c.out) / "config.ini", s.ToIni());
    WriteFile(fs::path(c.out) / "evaluation.jsonl", record.str());
    json curve = r.train_loss_curve;
    WriteFile(fs::path(c.out) / "loss_curve.json", curve.dump() + "\n");
  }
  io.out << record.str();
  return kExitOk;
}

int GenData(const Settings& s, const Common& c, Streams io) {
  const Dataset d = Generate(DataFrom(s));
  if (c.out.empty()) {
    WriteDataset(d, io.out);
    return kExitOk;
  }
  fs::create_directories(c.out);
  WriteFile(fs::path(c.out) / "config.ini", s.ToIni());
  std::ofstream out(fs::path(c.out) / "dataset.txt", std::ios::trunc);
  WriteDataset(d, out);
  if (!out) throw std::runtime_error("failed writing dataset");
  io.out << "train " << d.train.size() << ", validation " << d.validation.size() << ", test "
         << d.test.size() << "\n";
  return kExitOk;
}

int Report(const std::vector<std::string>& logs, const std::string& out, Streams io) {
  if (logs.empty()) throw ConfigError("report needs at least one search log");
  struct Run {
    std::string name;
    std::vector<double> best_so_far;
  };
  std::vector<Run> runs;
  int corrupt = 0;
  for (const std::string& path : logs) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open search log " + path);
    Run run{path, {}};
    std::string line;
    double best = -INFINITY;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      double fitness;
      try {
        fitness = json::parse(line).at("fitness").get<double>();
      } catch (const json::exception&) {
        ++corrupt;
        io.err << "warning: " << path << ":" << line_no << ": corrupt record skipped\n";
        continue;
      }
      best = std::max(best, fitness);
      run.best_so_far.push_back(best);
    }
    if (run.best_so_far.empty()) {
      io.err << "warning: " << path << " has no valid records\n";
      continue;
    }
    runs.push_back(std::move(run));
  }
  if (runs.empty()) throw std::runtime_error("no valid records in any search log");

  std::vector<double> bests;
  for (const Run& r : runs) bests.push_back(r.best_so_far.back());
  const double n = static_cast<double>(bests.size());
  double mean = 0;
  for (double b : bests) mean += b;
  mean /= n;
  double var = 0;
  for (double b : bests) var += (b - mean) * (b - mean);
  const double sd = bests.size() > 1 ? std::sqrt(var / (n - 1)) : 0.0;

  io.out << std::setprecision(6);
  io.out << "run\tcandidates\tbest\tlog\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    io.out << i << "\t" << runs[i].best_so_far.size() << "\t" << bests[i] << "\t"
           << runs[i].name << "\n";
  }
  io.out << "mean_best\t" << mean << "\n";
  io.out << "std_best\t" << sd << "\n";
  io.out << "corrupt_lines\t" << corrupt << "\n";
  if (runs.size() == 1) io.err << "warning: single run, standard deviation reported as 0\n";

  // Best-so-far curve, sampled at ten points of the longest run.
  std::size_t longest = 0;
  for (const Run& r : runs) longest = std::max(longest, r.best_so_far.size());
  io.out << "\ncandidate";
  for (std::size_t i = 0; i < runs.size(); ++i) io.out << "\trun" << i;
  io.out << "\n";
  auto value_at = [](const Run& r, std::size_t k) {
    return r.best_so_far[std::min(k, r.best_so_far.size() - 1)];
  };
  for (int q = 1; q <= 10; ++q) {
    const std::size_t k = std::max<std::size_t>(1, longest * q / 10) - 1;
    io.out << k + 1;
    for (const Run& r : runs) io.out << "\t" << value_at(r, k);
    io.out << "\n";
  }

  if (!out.empty()) {
    fs::create_directories(out);
    std::ostringstream series;
    series << "candidate";
    for (std::size_t i = 0; i < runs.size(); ++i) series << "\trun" << i;
    series << "\n";
    for (std::size_t k = 0; k < longest; ++k) {
      series << k + 1;
      // Shortest text that reads back to the same double.
      for (const Run& r : runs) series << "\t" << json(value_at(r, k)).dump();
      series << "\n";
    }
    WriteFile(fs::path(out) / "best_so_far.tsv", series.str());
    json summary = {{"bests", bests}, {"mean", mean}, {"std", sd}, {"corrupt_lines", corrupt}};
    WriteFile(fs::path(out) / "report.json", summary.dump(2) + "\n");
  }
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------

int Run(const std::vector<std::string>& args, const std::map<std::string, std::string>& env,
        Streams io, const std::atomic<bool>* interrupt) {
  CLI::App app{"Evolutionary architecture search for multimodal fusion", "fusearch"};
  app.require_subcommand(1);

  Common common;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string evaluator, mode;
  bool resume = false;
  std::int64_t stop_after = -1;
  std::vector<std::string> logs;

  auto add_common = [&](CLI::App* cmd, bool genome) {
    cmd->add_option("--config", common.config, "INI configuration file");
    cmd->add_option("--set", common.sets, "override, section.key=value (repeatable)");
    if (genome) cmd->add_option("--genome", common.genome, "genome JSON file (default: seed)");
  };

  CLI::App* search = app.add_subcommand("search", "run an architecture search");
  add_common(search, false);
  search->add_option("--out", common.out, "output directory")->required();
  search->add_option("--seed", seed, "search seed");
  search->add_option("--workers", workers, "parallel evaluations (async mode)");
  search->add_option("--evaluator", evaluator, "neural or surrogate");
  search->add_option("--mode", mode, "sync or async");
  search->add_flag("--resume", resume, "continue from the checkpoint in --out");
  search->add_option("--stop-after", stop_after, "stop after this many children");

  CLI::App* compile = app.add_subcommand("compile", "compile a genome to a graph (JSON)");
  add_common(compile, true);
  compile->add_option("--out", common.out, "output file (default: stdout)");

  CLI::App* train = app.add_subcommand("train-one", "train and score one genome");
  add_common(train, true);
  train->add_option("--out", common.out, "output directory");
  train->add_option("--seed", seed, "training seed");

  CLI::App* dot = app.add_subcommand("export-dot", "write a Graphviz diagram of a genome");
  add_common(dot, true);
  dot->add_option("--out", common.out, "output file (default: stdout)");

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, false);
  gen->add_option("--out", common.out, "output directory (default: stdout)");
  gen->add_option("--seed", seed, "data seed");

  CLI::App* report = app.add_subcommand("report", "summarise search logs");
  report->add_option("logs", logs, "candidate logs (candidates.jsonl)")->required();
  report->add_option("--out", common.out, "directory for plot-ready series");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (report->parsed()) return Report(logs, common.out, io);
    Settings s = Resolve(common, env);
    if (search->parsed()) {
      if (seed) s.Set("search.seed", std::to_string(*seed));
      if (workers) s.Set("search.workers", std::to_string(*workers));
      if (!evaluator.empty()) s.Set("search.evaluator", evaluator);
      if (!mode.empty()) s.Set("search.mode", mode);
      return Search(s, common.out, resume, stop_after, io, interrupt);
    }
    if (train->parsed() && seed) s.Set("train.seed", std::to_string(*seed));
    if (gen->parsed() && seed) s.Set("data.seed", std::to_string(*seed));
    if (compile->parsed()) return CompileCommand(s, common, io);
    if (train->parsed()) return TrainOne(s, common, io);
    if (dot->parsed()) return ExportDot(s, common, io);
    if (gen->parsed()) return GenData(s, common, io);
  } catch (const ConfigError& e) {
    io.err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    io.err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace fusearch::cli
