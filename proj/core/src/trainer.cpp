#include "intentr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "intentr/error.hpp"
#include "intentr/evaluator.hpp"

namespace intentr {
namespace {

std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  for (auto& t : z.embeddings) t.weights.setZero();
  for (auto& c : z.cells) {
    c.for_each_array([](std::string_view, double* data, std::size_t n) {
      std::fill(data, data + n, 0.0);
    });
  }
  z.head_w.setZero();
  z.head_b.setZero();
  return z;
}

void check_grads_finite(const ModelGrads& grads) try {
  for (std::size_t f = 0; f < grads.embeddings.size(); ++f) {
    check_finite(as_span(grads.embeddings[f].values), "embedding gradient " + std::to_string(f));
  }
  for (std::size_t s = 0; s < grads.cells.size(); ++s) {
    grads.cells[s].for_each_array([&](std::string_view name, const double* data, std::size_t n) {
      check_finite({data, n}, "cell" + std::to_string(s) + "." + std::string(name) + " gradient");
    });
  }
  check_finite(as_span(grads.head_w), "head.w gradient");
  check_finite(as_span(grads.head_b), "head.b gradient");
} catch (const ShapeError& e) {
  throw NonFiniteGradient(e.what());
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (early_stop_patience == 0) throw std::invalid_argument("early_stop_patience must be >= 1");
  if (!(anneal_factor > 0.0 && anneal_factor <= 1.0)) {
    throw std::invalid_argument("anneal_factor must be in (0, 1]");
  }
  if (clip_norm && !(*clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
}

AdamState AdamState::for_params(const ModelParams& params) {
  AdamState state;
  state.m = zeros_like(params);
  state.v = zeros_like(params);
  return state;
}

void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t step, double lr, const AdamConfig& cfg) {
  if (theta.size() != grad.size() || m.size() != grad.size() || v.size() != grad.size()) {
    throw ShapeError("adam_update: size mismatch");
  }
  const double t = static_cast<double>(step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    theta[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + cfg.epsilon);
  }
}

void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  if (grads.cells.size() != params.cells.size() ||
      grads.embeddings.size() != params.embeddings.size()) {
    throw ShapeError("adam_step: gradient layout does not match parameters");
  }
  check_grads_finite(grads);
  const std::size_t step = ++state.step;

  for (std::size_t f = 0; f < params.embeddings.size(); ++f) {
    EmbeddingTable& table = params.embeddings[f];
    const SparseRows& g = grads.embeddings[f];
    if (!table.trainable || g.rows.empty()) continue;
    Tensor2& m = state.m.embeddings[f].weights;
    Tensor2& v = state.v.embeddings[f].weights;
    const auto width = static_cast<std::size_t>(table.width());
    for (std::size_t i = 0; i < g.rows.size(); ++i) {
      const Eigen::Index row = g.rows[i];
      adam_update({table.weights.row(row).data(), width},
                  {g.values.row(static_cast<Eigen::Index>(i)).data(), width},
                  {m.row(row).data(), width}, {v.row(row).data(), width}, step, lr, cfg);
    }
  }
  for (std::size_t s = 0; s < params.cells.size(); ++s) {
    std::vector<std::span<const double>> g;
    grads.cells[s].for_each_array(
        [&](std::string_view, const double* data, std::size_t n) { g.emplace_back(data, n); });
    std::vector<std::span<double>> m;
    std::vector<std::span<double>> v;
    state.m.cells[s].for_each_array(
        [&](std::string_view, double* data, std::size_t n) { m.emplace_back(data, n); });
    state.v.cells[s].for_each_array(
        [&](std::string_view, double* data, std::size_t n) { v.emplace_back(data, n); });
    std::size_t k = 0;
    params.cells[s].for_each_array([&](std::string_view, double* data, std::size_t n) {
      adam_update({data, n}, g[k], m[k], v[k], step, lr, cfg);
      ++k;
    });
  }
  adam_update(span_of(params.head_w), as_span(grads.head_w), span_of(state.m.head_w),
              span_of(state.v.head_w), step, lr, cfg);
  adam_update(span_of(params.head_b), as_span(grads.head_b), span_of(state.m.head_b),
              span_of(state.v.head_b), step, lr, cfg);
}

double gradient_norm(const ModelGrads& grads) {
  double sq = 0.0;
  for (const auto& e : grads.embeddings) sq += e.values.squaredNorm();
  for (const auto& c : grads.cells) {
    c.for_each_array([&](std::string_view, const double* data, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) sq += data[i] * data[i];
    });
  }
  sq += grads.head_w.squaredNorm() + grads.head_b.squaredNorm();
  return std::sqrt(sq);
}

void scale_gradients(ModelGrads& grads, double factor) {
  for (auto& e : grads.embeddings) e.values *= factor;
  for (auto& c : grads.cells) {
    c.for_each_array([&](std::string_view, double* data, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) data[i] *= factor;
    });
  }
  grads.head_w *= factor;
  grads.head_b *= factor;
}

std::string epoch_record_json(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["loss"] = r.train_loss;
  j["valid_auc"] = r.valid_auc;
  j["lr"] = r.learning_rate;
  j["seconds"] = r.seconds;
  return j.dump();
}

double corpus_auc(const Model& model, std::span<const IndexedSequence> corpus,
                  std::size_t batch_size) {
  const auto scores = predict_corpus(model, corpus, batch_size);
  std::vector<int> labels;
  labels.reserve(corpus.size());
  for (const auto& s : corpus) labels.push_back(s.label == Label::kBuyer ? 1 : 0);
  return auc(scores, labels);
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  std::span<const IndexedSequence> train_set,
                  std::span<const IndexedSequence> valid_set,
                  std::span<const std::size_t> vocab_rows, const TrainHooks& hooks) {
  config.validate();
  model_config.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (!hooks.validation_auc) {
    bool has_pos = false;
    bool has_neg = false;
    for (const auto& s : valid_set) (s.label == Label::kBuyer ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
      throw UndefinedMetricError("validation set needs both buyers and clickers (AUC undefined)");
    }
  }

  Model model{model_config, hooks.initial ? *hooks.initial
                                          : init_params(model_config, vocab_rows, config.seed)};
  if (config.freeze_embeddings) {
    for (auto& table : model.params.embeddings) table.trainable = false;
  }
  AdamState adam = AdamState::for_params(model.params);

  TrainResult result;
  result.best_params = model.params;
  result.best_auc = -std::numeric_limits<double>::infinity();
  double lr = config.learning_rate;
  std::size_t worse_streak = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    BatchOptions batching;
    batching.batch_size = config.batch_size;
    batching.seed = config.seed;
    batching.epoch = epoch;
    batching.length_buckets = config.length_buckets;
    const std::vector<Batch> batches = batchify(train_set, batching);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      ForwardRecord rec = forward_record(model.config, model.params, batches[b]);
      loss_sum += batch_loss(rec.probabilities, batches[b].labels) *
                  static_cast<double>(batches[b].size());
      ModelGrads grads = backward(rec, model.config, model.params);
      if (config.clip_norm) {
        const double norm = gradient_norm(grads);
        if (norm > *config.clip_norm) scale_gradients(grads, *config.clip_norm / norm);
      }
      try {
        adam_step(model.params, grads, adam, lr);
      } catch (const NonFiniteGradient& e) {
        throw NonFiniteGradient("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) +
                                ": " + e.what());
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    record.learning_rate = lr;
    record.valid_auc = hooks.validation_auc ? hooks.validation_auc(model.params, epoch)
                                            : corpus_auc(model, valid_set, config.batch_size);
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.epochs.push_back(record);
    if (hooks.on_epoch) hooks.on_epoch(record, model.params);

    if (record.valid_auc > result.best_auc) {
      result.best_auc = record.valid_auc;
      result.best_epoch = epoch;
      result.best_params = model.params;
      worse_streak = 0;
    } else if (record.valid_auc < result.best_auc) {
      ++worse_streak;
      lr *= config.anneal_factor;
      if (worse_streak >= config.early_stop_patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

std::string GridCell::key() const {
  return std::string(cell_name(cell)) + "-" + std::to_string(layers) + "-" +
         std::to_string(hidden);
}

namespace {

// Truncates an unterminated last line.
void drop_torn_tail(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  if (text.empty() || text.back() == '\n') return;
  const auto keep = text.find_last_of('\n');
  std::filesystem::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
}

}  // namespace

std::vector<GridCell> read_grid_journal(const std::string& path) {
  std::vector<GridCell> cells;
  std::ifstream in(path);
  if (!in) return cells;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() || !j.contains("cell")) continue;
    const auto type = parse_cell_type(j.value("cell", std::string()));
    if (!type) continue;
    GridCell cell;
    cell.cell = *type;
    cell.layers = j.value("layers", 0);
    cell.hidden = j.value("hidden", 0);
    if (j.contains("valid_auc") && j["valid_auc"].is_number()) cell.valid_auc = j["valid_auc"].get<double>();
    if (j.contains("test_auc") && j["test_auc"].is_number()) cell.test_auc = j["test_auc"].get<double>();
    cell.epochs = j.value("epochs", std::size_t{0});
    cell.error = j.value("error", std::string());
    cell.from_journal = true;
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::vector<GridCell> grid_search(const GridSpec& spec, const GridOptions& options,
                                  std::span<const IndexedSequence> train_set,
                                  std::span<const IndexedSequence> valid_set,
                                  std::span<const IndexedSequence> test_set,
                                  std::span<const std::size_t> vocab_rows) {
  if (spec.size() == 0) throw std::invalid_argument("grid is empty");
  std::map<std::string, GridCell> done;
  if (!options.journal_path.empty()) {
    drop_torn_tail(options.journal_path);
    for (auto& cell : read_grid_journal(options.journal_path)) done[cell.key()] = cell;
  }

  std::vector<GridCell> results;
  for (CellType type : spec.cells) {
    for (int layers : spec.layers) {
      for (int hidden : spec.hidden) {
        GridCell cell;
        cell.cell = type;
        cell.layers = layers;
        cell.hidden = hidden;
        if (auto it = done.find(cell.key()); it != done.end()) {
          results.push_back(it->second);
          if (options.on_cell) options.on_cell(it->second);
          continue;
        }
        try {
          ModelConfig config = options.base;
          config.cell = type;
          config.num_layers = layers;
          config.hidden_size = hidden;
          TrainResult trained = train(config, options.train, train_set, valid_set, vocab_rows);
          cell.valid_auc = trained.best_auc;
          cell.epochs = trained.epochs.size();
          if (!test_set.empty()) {
            cell.test_auc = corpus_auc({config, trained.best_params}, test_set,
                                       options.train.batch_size);
          }
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        if (!options.journal_path.empty()) {
          nlohmann::json j;
          j["cell"] = std::string(cell_name(cell.cell));
          j["layers"] = cell.layers;
          j["hidden"] = cell.hidden;
          j["valid_auc"] = cell.valid_auc ? nlohmann::json(*cell.valid_auc) : nlohmann::json(nullptr);
          j["test_auc"] = cell.test_auc ? nlohmann::json(*cell.test_auc) : nlohmann::json(nullptr);
          j["epochs"] = cell.epochs;
          j["status"] = cell.ok() ? "ok" : "failed";
          j["error"] = cell.error;
          std::ofstream journal(options.journal_path, std::ios::app);
          if (!journal) throw IoError("cannot append to " + options.journal_path);
          journal << j.dump() << '\n';
          journal.flush();
        }
        results.push_back(cell);
        if (options.on_cell) options.on_cell(cell);
      }
    }
  }
  return results;
}

std::string grid_table_csv(const GridSpec& spec, std::span<const GridCell> cells) {
  std::map<std::string, const GridCell*> by_key;
  for (const auto& c : cells) by_key[c.key()] = &c;
  std::ostringstream out;
  out << "hidden";
  for (CellType type : spec.cells) {
    for (int layers : spec.layers) out << ',' << cell_name(type) << '_' << layers;
  }
  out << '\n';
  char buf[32];
  for (int hidden : spec.hidden) {
    out << hidden;
    for (CellType type : spec.cells) {
      for (int layers : spec.layers) {
        out << ',';
        GridCell probe;
        probe.cell = type;
        probe.layers = layers;
        probe.hidden = hidden;
        auto it = by_key.find(probe.key());
        if (it == by_key.end() || !it->second->ok()) continue;
        const auto& value = it->second->test_auc ? it->second->test_auc : it->second->valid_auc;
        if (!value) continue;
        std::snprintf(buf, sizeof buf, "%.4f", *value);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace intentr
