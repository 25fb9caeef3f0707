#include "intentr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "intentr/checkpoint.hpp"
#include "intentr/error.hpp"
#include "intentr/evaluator.hpp"
#include "intentr/ingest.hpp"
#include "intentr/session_store.hpp"
#include "intentr/synth.hpp"
#include "intentr/trainer.hpp"
#include "intentr/transform.hpp"

#ifndef INTENTR_VERSION
#define INTENTR_VERSION "0.0.0"
#endif

namespace intentr::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch());
  const auto millis =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) - secs;
  return format_iso8601(secs.count(), static_cast<int>(millis.count()));
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int parse_positive_int(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || value < 1) throw UsageError(what + ": expected a positive integer, got '" + text + "'");
  return value;
}

/// Resolved options of a subcommand as written back by CLI11.
json resolved_options(const CLI::App& sub) {
  json j = json::object();
  std::istringstream in(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string value = line.substr(eq + 1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    j[line.substr(0, eq)] = value;
  }
  return j;
}

class RunManifest {
 public:
  RunManifest(fs::path dir, const CLI::App& sub, std::vector<std::string> argv,
              std::uint64_t seed, int threads)
      : dir_(std::move(dir)) {
    doc_["command"] = sub.get_name();
    doc_["argv"] = std::move(argv);
    doc_["tool_version"] = INTENTR_VERSION;
    doc_["seed"] = seed;
    doc_["threads"] = threads;
    doc_["config"] = resolved_options(sub);
    std::string text = sub.config_to_str(true, false);
    doc_["config_text"] = text;
    doc_["inputs"] = json::object();
  }

  void input(const std::string& path) {
    if (!fs::is_regular_file(path)) throw IoError("cannot open " + path);
    doc_["inputs"][path] = file_digest(path);
  }

  void input_dir(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("cannot open directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) input(f.string());
  }

  void begin() {
    doc_["started_at"] = now_iso();
    doc_["finished_at"] = nullptr;
    doc_["status"] = "running";
    write();
  }

  void finish(const std::string& status) {
    doc_["finished_at"] = now_iso();
    doc_["status"] = status;
    write();
  }

 private:
  void write() const {
    fs::create_directories(dir_);
    const auto path = dir_ / "manifest.json";
    const auto tmp = dir_ / "manifest.json.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp.string());
      out << doc_.dump(2) << '\n';
    }
    fs::rename(tmp, path);
  }

  fs::path dir_;
  json doc_;
};

int threads_from_env() {
  const char* value = std::getenv("INTENTR_THREADS");
  if (value == nullptr || *value == '\0') return 1;
  const int n = parse_positive_int(value, "INTENTR_THREADS");
  Eigen::setNbThreads(n);
  return n;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Options

struct SynthArgs {
  std::string out;
  SynthConfig config;
};

struct PrepareArgs {
  std::string clicks;
  std::string buys;
  std::string retailrocket;
  std::string out;
  std::string split = "90/10/0";
  std::uint64_t seed = 0;
  EpochSeconds session_gap = 1800;
};

struct ModelArgs {
  std::string cell = "lstm";
  int layers = 3;
  int hidden = 256;
  double lr = 1e-3;
  std::size_t batch = 256;
  std::size_t epochs = 20;
  std::size_t patience = 2;
  double anneal = 0.5;
  EpochSeconds unroll_threshold = 150;
  bool no_unroll = false;
  bool no_reverse = false;
  std::size_t max_len = 500;
  bool freeze_embeddings = false;
  bool no_skip = false;
  bool no_share = false;
  bool tie_weights = false;
  bool price_variance = false;
  int item_width = 100;
  int feature_width = 10;
  double clip_norm = 0.0;
  bool length_buckets = false;
  std::uint64_t seed = 1;

  [[nodiscard]] ModelConfig model() const {
    ModelConfig c;
    c.cell = *parse_cell_type(cell);
    c.num_layers = layers;
    c.hidden_size = hidden;
    c.skip_connections = !no_skip;
    c.share_hidden_state = !no_share;
    c.tie_layer_weights = tie_weights;
    c.embeddings_trainable = !freeze_embeddings;
    c.fields.use_price_variance = price_variance;
    c.fields.widths.fill(feature_width);
    c.fields.widths[static_cast<std::size_t>(Field::kItem)] = item_width;
    c.validate();
    return c;
  }

  [[nodiscard]] TrainConfig training() const {
    TrainConfig t;
    t.learning_rate = lr;
    t.batch_size = batch;
    t.max_epochs = epochs;
    t.early_stop_patience = patience;
    t.anneal_factor = anneal;
    t.seed = seed;
    t.freeze_embeddings = freeze_embeddings;
    if (clip_norm > 0.0) t.clip_norm = clip_norm;
    t.length_buckets = length_buckets;
    t.validate();
    return t;
  }

  [[nodiscard]] TransformConfig transform() const {
    TransformConfig t;
    t.unroll = !no_unroll;
    t.unroll_threshold = unroll_threshold;
    t.reverse = !no_reverse;
    t.max_len = max_len;
    if (t.unroll_threshold <= 0) throw UsageError("--unroll-threshold must be positive");
    if (t.max_len == 0) throw UsageError("--max-len must be positive");
    return t;
  }
};

struct TrainArgs {
  std::string data;
  std::string out;
  ModelArgs model;
};

struct GridArgs {
  std::string data;
  std::string out;
  std::string grid = "cells=rnn,gru,lstm layers=1,2,3 hidden=64,128,256,512";
  ModelArgs model;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split;
  std::string report;
  std::string compare;
  std::size_t length_cap = 20;
  std::size_t batch = 256;
};

struct PredictArgs {
  std::string checkpoint;
  std::string data;
  std::string split;
  std::string clicks;
  std::string buys;
  std::string out;
  std::size_t batch = 256;
};

void add_model_options(CLI::App* sub, ModelArgs& a) {
  sub->add_option("--cell", a.cell, "rnn, gru or lstm")
      ->check(CLI::IsMember({"rnn", "gru", "lstm"}))
      ->capture_default_str();
  sub->add_option("--layers", a.layers)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--hidden", a.hidden)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--lr", a.lr)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--batch", a.batch)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--epochs", a.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--patience", a.patience)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--anneal", a.anneal, "learning rate factor after a worse epoch")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_option("--unroll-threshold", a.unroll_threshold, "seconds per replayed copy")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_flag("--no-unroll", a.no_unroll);
  sub->add_flag("--no-reverse", a.no_reverse);
  sub->add_option("--max-len", a.max_len)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_flag("--freeze-embeddings", a.freeze_embeddings);
  sub->add_flag("--no-skip", a.no_skip, "disable skip connections");
  sub->add_flag("--no-share", a.no_share, "start every layer from a zero state");
  sub->add_flag("--tie-weights", a.tie_weights, "share parameters between equal-width layers");
  sub->add_flag("--price-variance", a.price_variance, "add the price-variance embedding");
  sub->add_option("--item-width", a.item_width)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--feature-width", a.feature_width, "width of every non-item embedding")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--clip-norm", a.clip_norm, "global gradient norm cap, 0 disables")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_flag("--length-buckets", a.length_buckets);
  sub->add_option("--seed", a.seed)->capture_default_str();
}

// ---------------------------------------------------------------------------
// Shared data access

std::vector<Session> load_split(const fs::path& data, const std::string& name) {
  const auto clicks = data / (name + ".clicks.csv");
  if (!fs::exists(clicks)) throw IoError("cannot open " + clicks.string());
  return read_sessions(data.string(), name);
}

FeatureSpace load_space(const fs::path& data, const FieldConfig& fields) {
  return FeatureSpace::load((data / "vocab").string(), fields);
}

json model_json(const ModelConfig& m, const TransformConfig& t) {
  json j;
  j["cell"] = std::string(cell_name(m.cell));
  j["layers"] = m.num_layers;
  j["hidden"] = m.hidden_size;
  j["skip_connections"] = m.skip_connections;
  j["share_hidden_state"] = m.share_hidden_state;
  j["tie_layer_weights"] = m.tie_layer_weights;
  j["embeddings_trainable"] = m.embeddings_trainable;
  j["use_price_variance"] = m.fields.use_price_variance;
  j["widths"] = m.fields.widths;
  j["transform"] = {{"unroll", t.unroll},
                    {"unroll_threshold", t.unroll_threshold},
                    {"reverse", t.reverse},
                    {"max_len", t.max_len}};
  return j;
}

TransformConfig transform_for_checkpoint(const fs::path& checkpoint) {
  TransformConfig t;
  const auto path = checkpoint.parent_path() / "model.json";
  std::ifstream in(path);
  if (!in) return t;
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("transform")) throw IoError("malformed " + path.string());
  const auto& tj = j["transform"];
  t.unroll = tj.value("unroll", t.unroll);
  t.unroll_threshold = tj.value("unroll_threshold", t.unroll_threshold);
  t.reverse = tj.value("reverse", t.reverse);
  t.max_len = tj.value("max_len", t.max_len);
  return t;
}

struct LoadedModel {
  Model model;
  FeatureSpace space;
  TransformConfig transform;
};

LoadedModel load_model(const std::string& checkpoint, const fs::path& data) {
  Model probe = load_checkpoint(checkpoint);
  FeatureSpace space = load_space(data, probe.config.fields);
  Model model = load_checkpoint(checkpoint, &space);
  return {std::move(model), std::move(space), transform_for_checkpoint(checkpoint)};
}

std::string default_eval_split(const fs::path& data) {
  std::ifstream in(data / "test.clicks.csv");
  if (in && in.peek() != std::char_traits<char>::eof()) return "test";
  return "valid";
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const SynthArgs& a, RunManifest& manifest, std::ostream& out) {
  a.config.validate();
  manifest.begin();
  const SynthOutput generated = generate(a.config);
  write_synth(generated, a.out);
  std::size_t buyers = 0;
  for (const auto& [id, label] : generated.labels) buyers += static_cast<std::size_t>(label);
  out << "sessions " << generated.labels.size() << " buyers " << buyers << " -> " << a.out << '\n';
  manifest.finish("ok");
  return kExitOk;
}

SplitSpec parse_split(const std::string& text, std::uint64_t seed) {
  const auto parts = split_list(text, '/');
  if (parts.size() != 3) throw UsageError("--split expects train/valid/test percentages, e.g. 90/10/0");
  double v[3];
  for (int i = 0; i < 3; ++i) {
    try {
      v[i] = std::stod(parts[static_cast<std::size_t>(i)]);
    } catch (const std::exception&) {
      throw UsageError("--split: bad number '" + parts[static_cast<std::size_t>(i)] + "'");
    }
  }
  SplitSpec spec{v[0] / 100.0, v[1] / 100.0, v[2] / 100.0, seed};
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--split: ") + e.what());
  }
  return spec;
}

int cmd_prepare(const PrepareArgs& a, RunManifest& manifest, std::ostream& out) {
  const bool recsys = !a.clicks.empty() || !a.buys.empty();
  if (recsys == !a.retailrocket.empty()) {
    throw UsageError("give either --clicks and --buys, or --retailrocket");
  }
  if (recsys && (a.clicks.empty() || a.buys.empty())) {
    throw UsageError("--clicks and --buys go together");
  }
  const SplitSpec spec = parse_split(a.split, a.seed);
  if (recsys) {
    manifest.input(a.clicks);
    manifest.input(a.buys);
  } else {
    manifest.input(a.retailrocket);
  }
  manifest.begin();

  std::vector<Reject> rejects;
  std::size_t orphans = 0;
  std::vector<Session> sessions =
      recsys ? load_recsys(a.clicks, a.buys, &rejects, &orphans)
             : load_retailrocket(a.retailrocket, a.session_gap, &rejects, &orphans);
  const std::size_t total = sessions.size();
  std::size_t clicks = 0;
  for (const auto& s : sessions) clicks += s.events.size();
  SplitSessions split = split_sessions(std::move(sessions), spec);

  FieldConfig fields;
  fields.use_price_variance = true;
  const FeatureSpace space = FeatureSpace::build(split.train, fields);
  const fs::path dir(a.out);
  space.save((dir / "vocab").string());
  write_sessions(a.out, "train", split.train);
  write_sessions(a.out, "valid", split.valid);
  write_sessions(a.out, "test", split.test);

  std::ostringstream reject_log;
  for (const auto& r : rejects) reject_log << format_reject(r) << '\n';
  write_text(dir / "rejects.log", reject_log.str());

  auto buyers = [](const std::vector<Session>& part) {
    std::size_t n = 0;
    for (const auto& s : part) n += s.is_buyer();
    return n;
  };
  json j;
  j["fractions"] = {spec.train_fraction, spec.valid_fraction, spec.test_fraction};
  j["seed"] = spec.seed;
  j["sessions"] = total;
  j["clicks"] = clicks;
  j["rejects"] = rejects.size();
  j["orphan_buys"] = orphans;
  j["splits"] = {{"train", {{"sessions", split.train.size()}, {"buyers", buyers(split.train)}}},
                 {"valid", {{"sessions", split.valid.size()}, {"buyers", buyers(split.valid)}}},
                 {"test", {{"sessions", split.test.size()}, {"buyers", buyers(split.test)}}}};
  json vocab;
  for (std::size_t f = 0; f < kNumFields; ++f) {
    const Field field = static_cast<Field>(f);
    vocab[std::string(field_name(field))] = space.vocab(field).size();
  }
  j["vocab"] = vocab;
  write_text(dir / "split.json", j.dump(2) + "\n");

  out << "sessions " << total << " (train " << split.train.size() << ", valid "
      << split.valid.size() << ", test " << split.test.size() << "), rejects " << rejects.size()
      << ", orphan buys " << orphans << '\n';
  out << "vocab";
  for (std::size_t f = 0; f < kNumFields; ++f) {
    const Field field = static_cast<Field>(f);
    out << ' ' << field_name(field) << '=' << space.vocab(field).size();
  }
  out << '\n';
  manifest.finish("ok");
  return kExitOk;
}

int cmd_train(const TrainArgs& a, RunManifest& manifest, std::ostream& out) {
  const ModelConfig model_config = a.model.model();
  const TrainConfig train_config = a.model.training();
  const TransformConfig transform = a.model.transform();
  const fs::path data(a.data);
  manifest.input_dir(data);
  manifest.begin();

  const FeatureSpace space = load_space(data, model_config.fields);
  const auto train_sessions = load_split(data, "train");
  const auto valid_sessions = load_split(data, "valid");
  UnrollStats stats;
  const auto train_set = prepare_corpus(train_sessions, space, transform, &stats);
  const auto valid_set = prepare_corpus(valid_sessions, space, transform);
  const auto rows = vocab_rows(space);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "model.json", model_json(model_config, transform).dump(2) + "\n");
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw IoError("cannot write " + (dir / "train_log.jsonl").string());

  out << "train " << train_set.size() << " sessions, valid " << valid_set.size()
      << ", parameters " << count_params(model_config) << " + embeddings "
      << count_embedding_params(model_config, rows) << '\n';
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r, const ModelParams& params) {
    log << epoch_record_json(r) << '\n';
    log.flush();
    char name[32];
    std::snprintf(name, sizeof name, "epoch-%03zu.ckpt", r.epoch);
    save_checkpoint((dir / name).string(), {model_config, params}, space);
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu loss %.6f valid_auc %.6f lr %.3g (%.1fs)\n", r.epoch,
                  r.train_loss, r.valid_auc, r.learning_rate, r.seconds);
    out << line << std::flush;
  };
  const TrainResult result = train(model_config, train_config, train_set, valid_set, rows, hooks);
  save_checkpoint((dir / "best.ckpt").string(), {model_config, result.best_params}, space);

  json summary;
  summary["best_epoch"] = result.best_epoch;
  summary["best_valid_auc"] = result.best_auc;
  summary["epochs"] = result.epochs.size();
  summary["stopped_early"] = result.stopped_early;
  summary["unroll"] = {{"events_before", stats.events_before},
                       {"events_after", stats.events_after},
                       {"growth", stats.growth()},
                       {"negative_dwell", stats.negative_dwell},
                       {"truncated_sessions", stats.truncated_sessions}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  char line[96];
  std::snprintf(line, sizeof line, "best epoch %zu valid_auc %.6f\n", result.best_epoch, result.best_auc);
  out << line;
  manifest.finish("ok");
  return kExitOk;
}

int cmd_gridsearch(const GridArgs& a, RunManifest& manifest, std::ostream& out) {
  const GridSpec spec = parse_grid_spec(a.grid);
  const ModelConfig base = a.model.model();
  const TrainConfig train_config = a.model.training();
  const TransformConfig transform = a.model.transform();
  const fs::path data(a.data);
  manifest.input_dir(data);
  manifest.begin();

  const FeatureSpace space = load_space(data, base.fields);
  const auto train_set = prepare_corpus(load_split(data, "train"), space, transform);
  const auto valid_set = prepare_corpus(load_split(data, "valid"), space, transform);
  const auto test_set = prepare_corpus(load_split(data, "test"), space, transform);
  const auto rows = vocab_rows(space);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  GridOptions options;
  options.base = base;
  options.train = train_config;
  options.journal_path = (dir / "grid_journal.jsonl").string();
  options.on_cell = [&](const GridCell& c) {
    out << c.key() << ' ';
    if (!c.ok()) {
      out << "failed: " << c.error;
    } else if (c.from_journal) {
      out << "done earlier";
    } else {
      char buf[64];
      std::snprintf(buf, sizeof buf, "valid_auc %.4f", c.valid_auc.value_or(0.0));
      out << buf;
    }
    out << '\n' << std::flush;
  };
  const auto cells = grid_search(spec, options, train_set, valid_set, test_set, rows);
  write_text(dir / "grid.csv", grid_table_csv(spec, cells));
  std::size_t failed = 0;
  for (const auto& c : cells) failed += !c.ok();
  out << cells.size() << " cells, " << failed << " failed -> " << (dir / "grid.csv").string() << '\n';
  manifest.finish(failed == 0 ? "ok" : "ok with failed cells");
  return kExitOk;
}

int cmd_evaluate(const EvalArgs& a, RunManifest& manifest, std::ostream& out) {
  const fs::path data(a.data);
  manifest.input(a.checkpoint);
  manifest.input_dir(data);
  if (!a.compare.empty()) manifest.input(a.compare);
  manifest.begin();

  const LoadedModel loaded = load_model(a.checkpoint, data);
  const std::string split = a.split.empty() ? default_eval_split(data) : a.split;
  const auto corpus = prepare_corpus(load_split(data, split), loaded.space, loaded.transform);
  const auto scores = predict_corpus(loaded.model, corpus, a.batch);
  const auto sessions = score_sessions(corpus, scores);
  const EvalReport report = evaluate(sessions, a.length_cap);

  std::optional<Comparison> comparison;
  if (!a.compare.empty()) {
    std::ifstream in(a.compare);
    if (!in) throw IoError("cannot open " + a.compare);
    comparison = compare_predictions(sessions, read_score_file(in), a.length_cap);
  }
  const Comparison* cmp = comparison ? &*comparison : nullptr;
  const fs::path dir(a.report);
  fs::create_directories(dir);
  write_text(dir / "report.json", report_json(report, cmp));
  const std::string text = report_text(report, cmp);
  write_text(dir / "report.txt", text);
  std::ostringstream roc;
  write_roc_csv(roc, report.roc);
  write_text(dir / "roc.csv", roc.str());
  std::ostringstream score_file;
  write_score_file(score_file, sessions);
  write_text(dir / "scores.csv", score_file.str());
  out << "split " << split << '\n' << text;
  if (!report.overall.auc) {
    manifest.finish("undefined metric");
    throw UndefinedMetricError("AUC undefined: split '" + split + "' lacks buyers or clickers");
  }
  manifest.finish("ok");
  return kExitOk;
}

int cmd_predict(const PredictArgs& a, RunManifest& manifest, std::ostream& out) {
  const fs::path data(a.data);
  if (a.clicks.empty() == a.split.empty()) throw UsageError("give exactly one of --split or --clicks");
  manifest.input(a.checkpoint);
  manifest.input_dir(data / "vocab");
  if (!a.clicks.empty()) manifest.input(a.clicks);
  if (!a.buys.empty()) manifest.input(a.buys);
  manifest.begin();

  const LoadedModel loaded = load_model(a.checkpoint, data);
  std::vector<Session> sessions;
  if (!a.clicks.empty()) {
    std::ifstream clicks_in(a.clicks);
    if (!clicks_in) throw IoError("cannot open " + a.clicks);
    ParseOptions options;
    options.source_name = a.clicks;
    auto clicks = parse_recsys_clicks(clicks_in, options);
    std::vector<BuyEvent> buys;
    if (!a.buys.empty()) {
      std::ifstream buys_in(a.buys);
      if (!buys_in) throw IoError("cannot open " + a.buys);
      options.source_name = a.buys;
      buys = parse_recsys_buys(buys_in, options).events;
    }
    sessions = assemble_sessions(std::move(clicks.events), buys).sessions;
  } else {
    sessions = load_split(data, a.split);
  }
  const auto corpus = prepare_corpus(sessions, loaded.space, loaded.transform);
  const auto scores = predict_corpus(loaded.model, corpus, a.batch);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  std::ostringstream score_file;
  write_score_file(score_file, score_sessions(corpus, scores));
  write_text(dir / "scores.csv", score_file.str());
  out << scores.size() << " sessions scored -> " << (dir / "scores.csv").string() << '\n';
  manifest.finish("ok");
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a, const std::string& report_path, std::ostream& out) {
  const GradCheckReport report = run_gradcheck(a);
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %8s %14s %14s\n", "group", "checked", "max_rel_err",
                "max_abs_err");
  out << line;
  json groups = json::array();
  for (const auto& g : report.groups) {
    std::snprintf(line, sizeof line, "%-28s %8zu %14.3e %14.3e\n", g.name.c_str(), g.checked,
                  g.max_rel_error, g.max_abs_error);
    out << line;
    groups.push_back({{"group", g.name},
                      {"checked", g.checked},
                      {"max_rel_error", g.max_rel_error},
                      {"max_abs_error", g.max_abs_error}});
  }
  std::snprintf(line, sizeof line, "%s max_rel_err %.3e tolerance %.1e\n",
                report.passed ? "PASS" : "FAIL", report.max_rel_error(), report.tolerance);
  out << line;
  if (!report_path.empty()) {
    json j;
    j["cell"] = a.cell;
    j["layers"] = a.layers;
    j["hidden"] = a.hidden;
    j["embed"] = a.embed;
    j["lengths"] = a.lengths;
    j["corrupt"] = a.corrupt;
    j["tolerance"] = a.tolerance;
    j["passed"] = report.passed;
    j["max_rel_error"] = report.max_rel_error();
    j["groups"] = std::move(groups);
    write_text(report_path, j.dump(2) + "\n");
  }
  return report.passed ? kExitOk : kExitCheckFailed;
}

void apply_config_file(CLI::App* sub, const std::string& path) {
  for (const auto& [key, value] : read_config_file(path)) {
    if (key == "config") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError(path + ": unknown key '" + key + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

}  // namespace

GradCheckReport run_gradcheck(const GradcheckArgs& a) {
  const auto cell = parse_cell_type(a.cell);
  if (!cell) throw UsageError("unknown cell '" + a.cell + "'");
  if (a.embed < 5) throw UsageError("--embed must be at least 5 (one column per field)");
  if (a.lengths.empty()) throw UsageError("--lengths needs at least one value");
  ModelConfig config;
  config.cell = *cell;
  config.num_layers = a.layers;
  config.hidden_size = a.hidden;
  config.skip_connections = a.skip;
  config.share_hidden_state = a.share;
  const int base = a.embed / 5;
  config.fields.widths = {base + a.embed % 5, base, base, base, base, 1};
  const std::vector<std::size_t> rows{7, 5, 4, 3, 3};
  const ModelParams params = init_params(config, rows, a.seed);

  std::mt19937_64 rng(a.seed ^ 0x5eedULL);
  std::vector<IndexedSequence> seqs;
  for (std::size_t i = 0; i < a.lengths.size(); ++i) {
    if (a.lengths[i] == 0) throw UsageError("--lengths must be positive");
    IndexedSequence s;
    s.session_id = static_cast<SessionId>(i + 1);
    s.label = i % 2 == 0 ? Label::kBuyer : Label::kClicker;
    for (std::size_t t = 0; t < a.lengths[i]; ++t) {
      IndexedEvent e;
      for (std::size_t f = 0; f < rows.size(); ++f) {
        e.index[f] = static_cast<std::int32_t>(std::uniform_int_distribution<std::size_t>(0, rows[f] - 1)(rng));
      }
      s.events.push_back(e);
    }
    seqs.push_back(std::move(s));
  }
  GradCheckOptions options;
  options.step = a.step;
  options.tolerance = a.tolerance;
  options.corrupt_scale = a.corrupt ? 1.05 : 1.0;
  return grad_check(config, params, make_batch(seqs), options);
}

GridSpec parse_grid_spec(const std::string& text) {
  GridSpec spec;
  std::istringstream in(text);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw UsageError("grid: expected key=values, got '" + token + "'");
    const std::string key = token.substr(0, eq);
    const auto values = split_list(token.substr(eq + 1), ',');
    if (values.empty()) throw UsageError("grid: no values for '" + key + "'");
    if (key == "cells") {
      spec.cells.clear();
      for (const auto& v : values) {
        const auto c = parse_cell_type(v);
        if (!c) throw UsageError("grid: unknown cell '" + v + "'");
        spec.cells.push_back(*c);
      }
    } else if (key == "layers" || key == "hidden") {
      auto& target = key == "layers" ? spec.layers : spec.hidden;
      target.clear();
      for (const auto& v : values) target.push_back(parse_positive_int(v, "grid " + key));
    } else {
      throw UsageError("grid: unknown key '" + key + "'");
    }
  }
  return spec;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    entries.emplace_back(trim(line.substr(0, eq)), value);
  }
  return entries;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Session purchase-intent prediction with recurrent networks", "intentr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", INTENTR_VERSION);

  std::string config_path;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value file; flags override it");
    return sub;
  };

  SynthArgs synth;
  auto* synth_cmd = with_config(app.add_subcommand("synth", "Generate a synthetic clickstream"));
  synth_cmd->add_option("--out", synth.out)->required();
  synth_cmd->add_option("--sessions", synth.config.n_sessions)->capture_default_str();
  synth_cmd->add_option("--buyer-fraction", synth.config.buyer_fraction)->capture_default_str();
  synth_cmd->add_option("--items", synth.config.n_items)->capture_default_str();
  synth_cmd->add_option("--categories", synth.config.n_categories)->capture_default_str();
  synth_cmd->add_option("--hot-fraction", synth.config.hot_item_fraction)->capture_default_str();
  synth_cmd->add_option("--mean-length", synth.config.mean_length)->capture_default_str();
  synth_cmd->add_option("--signal", synth.config.signal_strength)->capture_default_str();
  synth_cmd->add_option("--seed", synth.config.seed)->capture_default_str();

  PrepareArgs prepare;
  auto* prepare_cmd = with_config(app.add_subcommand("prepare", "Sessionize, split and build vocabularies"));
  prepare_cmd->add_option("--clicks", prepare.clicks, "RecSys clicks file");
  prepare_cmd->add_option("--buys", prepare.buys, "RecSys buys file");
  prepare_cmd->add_option("--retailrocket", prepare.retailrocket, "Retail Rocket events.csv");
  prepare_cmd->add_option("--out", prepare.out)->required();
  prepare_cmd->add_option("--split", prepare.split, "train/valid/test percentages")->capture_default_str();
  prepare_cmd->add_option("--seed", prepare.seed)->capture_default_str();
  prepare_cmd->add_option("--session-gap", prepare.session_gap, "seconds of inactivity that end a session")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  TrainArgs train_args;
  auto* train_cmd = with_config(app.add_subcommand("train", "Train a model"));
  train_cmd->add_option("--data", train_args.data, "directory written by prepare")->required();
  train_cmd->add_option("--out", train_args.out)->required();
  add_model_options(train_cmd, train_args.model);

  GridArgs grid;
  auto* grid_cmd = with_config(app.add_subcommand("gridsearch", "Train every cell/layers/hidden combination"));
  grid_cmd->add_option("--data", grid.data)->required();
  grid_cmd->add_option("--out", grid.out)->required();
  grid_cmd->add_option("--grid", grid.grid)->capture_default_str();
  add_model_options(grid_cmd, grid.model);

  EvalArgs eval;
  auto* eval_cmd = with_config(app.add_subcommand("evaluate", "Score a split and write reports"));
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--data", eval.data)->required();
  eval_cmd->add_option("--split", eval.split, "test when non-empty, else valid");
  eval_cmd->add_option("--report", eval.report)->required();
  eval_cmd->add_option("--compare", eval.compare, "external session_id,score CSV");
  eval_cmd->add_option("--length-cap", eval.length_cap)->check(CLI::PositiveNumber)->capture_default_str();
  eval_cmd->add_option("--batch", eval.batch)->check(CLI::PositiveNumber)->capture_default_str();

  PredictArgs predict;
  auto* predict_cmd = with_config(app.add_subcommand("predict", "Write purchase probabilities"));
  predict_cmd->add_option("--checkpoint", predict.checkpoint)->required();
  predict_cmd->add_option("--data", predict.data, "prepared directory with vocab/")->required();
  predict_cmd->add_option("--split", predict.split);
  predict_cmd->add_option("--clicks", predict.clicks, "RecSys clicks to score");
  predict_cmd->add_option("--buys", predict.buys);
  predict_cmd->add_option("--out", predict.out)->required();
  predict_cmd->add_option("--batch", predict.batch)->check(CLI::PositiveNumber)->capture_default_str();

  GradcheckArgs gc;
  std::string gc_report;
  std::string gc_lengths = "1,2,5,2";
  auto* gc_cmd = with_config(app.add_subcommand("gradcheck", "Finite-difference gradient check"));
  gc_cmd->add_option("--cell", gc.cell)->check(CLI::IsMember({"rnn", "gru", "lstm"}))->capture_default_str();
  gc_cmd->add_option("--layers", gc.layers)->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--hidden", gc.hidden)->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--embed", gc.embed)->check(CLI::Range(5, 100000))->capture_default_str();
  gc_cmd->add_option("--lengths", gc_lengths, "comma-separated sequence lengths")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc.tolerance)->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--step", gc.step)->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_flag("--corrupt", gc.corrupt, "scale analytic gradients by 1.05 (negative control)");
  gc_cmd->add_option("--seed", gc.seed)->capture_default_str();
  gc_cmd->add_option("--report", gc_report, "write a JSON report here");

  try {
    app.parse(argc, const_cast<char**>(argv));
    CLI::App* sub = app.get_subcommands().front();
    if (!config_path.empty()) apply_config_file(sub, config_path);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }

  CLI::App* sub = app.get_subcommands().front();
  std::vector<std::string> arg_list(argv, argv + argc);
  try {
    const int threads = threads_from_env();
    if (sub == gc_cmd) {
      gc.lengths.clear();
      for (const auto& v : split_list(gc_lengths, ',')) {
        gc.lengths.push_back(static_cast<std::size_t>(parse_positive_int(v, "--lengths")));
      }
      return cmd_gradcheck(gc, gc_report, out);
    }
    if (sub == synth_cmd) {
      RunManifest m(synth.out, *sub, arg_list, synth.config.seed, threads);
      return cmd_synth(synth, m, out);
    }
    if (sub == prepare_cmd) {
      RunManifest m(prepare.out, *sub, arg_list, prepare.seed, threads);
      return cmd_prepare(prepare, m, out);
    }
    if (sub == train_cmd) {
      RunManifest m(train_args.out, *sub, arg_list, train_args.model.seed, threads);
      return cmd_train(train_args, m, out);
    }
    if (sub == grid_cmd) {
      RunManifest m(grid.out, *sub, arg_list, grid.model.seed, threads);
      return cmd_gridsearch(grid, m, out);
    }
    if (sub == eval_cmd) {
      RunManifest m(eval.report, *sub, arg_list, 0, threads);
      return cmd_evaluate(eval, m, out);
    }
    if (sub == predict_cmd) {
      RunManifest m(predict.out, *sub, arg_list, 0, threads);
      return cmd_predict(predict, m, out);
    }
  } catch (const UndefinedMetricError& e) {
    err << "undefined metric: " << e.what() << '\n';
    return kExitUndefinedMetric;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace intentr::cli
