#include "intentr/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "intentr/error.hpp"

namespace intentr {
namespace {

/// Rows of `steps` at each packed row's last valid step.
Tensor2 gather_final(const std::vector<Tensor2>& steps, std::span<const std::size_t> lengths,
                     Eigen::Index width) {
  Tensor2 out(static_cast<Eigen::Index>(lengths.size()), width);
  for (std::size_t r = 0; r < lengths.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = steps[lengths[r] - 1].row(static_cast<Eigen::Index>(r));
  }
  return out;
}

std::size_t cell_param_count(CellType type, std::size_t input, std::size_t hidden) {
  const std::size_t rows = static_cast<std::size_t>(gate_count(type)) * hidden;
  const std::size_t biases = type == CellType::kRnn ? rows : 2 * rows;
  return rows * input + rows * hidden + biases;
}

int slot_count(const std::vector<int>& slots) {
  return slots.empty() ? 0 : *std::max_element(slots.begin(), slots.end()) + 1;
}

void check_params(const ModelConfig& config, const ModelParams& params) {
  const auto slots = config.layer_slots();
  if (params.cells.size() != static_cast<std::size_t>(slot_count(slots))) {
    throw ShapeError("model has " + std::to_string(params.cells.size()) +
                     " cell parameter sets, config needs " + std::to_string(slot_count(slots)));
  }
  for (std::size_t l = 0; l < slots.size(); ++l) {
    const auto& cell = params.cells[static_cast<std::size_t>(slots[l])];
    if (cell.type != config.cell || cell.hidden_size != config.hidden_size ||
        cell.input_size != config.layer_input_width(static_cast<int>(l))) {
      throw ShapeError("layer " + std::to_string(l) + " parameters do not match the config");
    }
  }
  if (params.head_w.size() != config.hidden_size || params.head_b.size() != 1) {
    throw ShapeError("head parameters do not match hidden size");
  }
  const auto fields = config.fields.active_fields();
  if (params.embeddings.size() != fields.size()) {
    throw ShapeError("expected " + std::to_string(fields.size()) + " embedding tables, got " +
                     std::to_string(params.embeddings.size()));
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (params.embeddings[i].field != fields[i] ||
        params.embeddings[i].width() != config.fields.width(fields[i])) {
      throw ShapeError("embedding table for " + std::string(field_name(fields[i])) +
                       " does not match the config");
    }
  }
}

}  // namespace

int ModelConfig::layer_input_width(int layer) const {
  if (layer == 0) return embedding_width();
  return hidden_size + (skip_connections ? embedding_width() : 0);
}

std::vector<int> ModelConfig::layer_slots() const {
  std::vector<int> slots(static_cast<std::size_t>(num_layers));
  int next = 0;
  for (int l = 0; l < num_layers; ++l) {
    slots[static_cast<std::size_t>(l)] = -1;
    if (tie_layer_weights) {
      for (int k = 0; k < l; ++k) {
        if (layer_input_width(k) == layer_input_width(l)) {
          slots[static_cast<std::size_t>(l)] = slots[static_cast<std::size_t>(k)];
          break;
        }
      }
    }
    if (slots[static_cast<std::size_t>(l)] < 0) slots[static_cast<std::size_t>(l)] = next++;
  }
  return slots;
}

void ModelConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (hidden_size < 1) throw std::invalid_argument("hidden_size must be >= 1");
  for (Field f : fields.active_fields()) {
    if (fields.width(f) < 1) throw std::invalid_argument("embedding widths must be >= 1");
  }
}

std::vector<std::size_t> vocab_rows(const FeatureSpace& space) {
  std::vector<std::size_t> rows;
  for (Field f : space.config().active_fields()) rows.push_back(space.vocab(f).rows());
  return rows;
}

ModelParams zero_params(const ModelConfig& config, std::span<const std::size_t> rows) {
  config.validate();
  const auto fields = config.fields.active_fields();
  if (rows.size() != fields.size()) throw ShapeError("one row count per active field expected");
  ModelParams params;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    EmbeddingTable table;
    table.field = fields[i];
    table.trainable = config.embeddings_trainable;
    table.weights = Tensor2::Zero(static_cast<Eigen::Index>(rows[i]), config.fields.width(fields[i]));
    params.embeddings.push_back(std::move(table));
  }
  const auto slots = config.layer_slots();
  for (int s = 0; s < slot_count(slots); ++s) {
    const auto layer = std::find(slots.begin(), slots.end(), s) - slots.begin();
    params.cells.push_back(CellParams::zeros(config.cell,
                                             config.layer_input_width(static_cast<int>(layer)),
                                             config.hidden_size));
  }
  params.head_w = Vector::Zero(config.hidden_size);
  params.head_b = Vector::Zero(1);
  return params;
}

ModelParams init_params(const ModelConfig& config, std::span<const std::size_t> rows,
                        std::uint64_t seed) {
  ModelParams params = zero_params(config, rows);
  std::mt19937_64 rng(seed);
  for (auto& table : params.embeddings) {
    table = make_embedding(table.field, static_cast<std::size_t>(table.weights.rows()),
                           table.width(), rng);
    table.trainable = config.embeddings_trainable;
  }
  for (auto& cell : params.cells) {
    cell = CellParams::random(config.cell, cell.input_size, cell.hidden_size, rng);
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < params.head_w.size(); ++i) params.head_w[i] = dist(rng);
  params.head_b[0] = dist(rng);
  return params;
}

std::size_t count_params(const ModelConfig& config) {
  config.validate();
  const auto slots = config.layer_slots();
  std::size_t total = 0;
  for (int s = 0; s < slot_count(slots); ++s) {
    const auto layer = std::find(slots.begin(), slots.end(), s) - slots.begin();
    total += cell_param_count(config.cell,
                              static_cast<std::size_t>(config.layer_input_width(static_cast<int>(layer))),
                              static_cast<std::size_t>(config.hidden_size));
  }
  return total + static_cast<std::size_t>(config.hidden_size) + 1;
}

std::size_t count_embedding_params(const ModelConfig& config, std::span<const std::size_t> rows) {
  const auto fields = config.fields.active_fields();
  if (rows.size() != fields.size()) throw ShapeError("one row count per active field expected");
  std::size_t total = 0;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    total += rows[i] * static_cast<std::size_t>(config.fields.width(fields[i]));
  }
  return total;
}

ForwardRecord forward_record(const ModelConfig& config, const ModelParams& params,
                             const Batch& batch) {
  check_params(config, params);
  ForwardRecord rec;
  rec.batch = &batch;
  const std::size_t B = batch.size();
  if (B == 0) return rec;

  rec.order.resize(B);
  std::iota(rec.order.begin(), rec.order.end(), std::size_t{0});
  std::stable_sort(rec.order.begin(), rec.order.end(), [&](std::size_t a, std::size_t b) {
    return batch.lengths[a] > batch.lengths[b];
  });
  rec.lengths.resize(B);
  for (std::size_t r = 0; r < B; ++r) rec.lengths[r] = batch.lengths[rec.order[r]];
  if (rec.lengths.back() == 0) throw ShapeError("batch contains an empty sequence");

  const std::size_t steps = rec.lengths.front();
  const Eigen::Index E = config.embedding_width();
  const Eigen::Index H = config.hidden_size;
  rec.embedded.resize(steps);
  std::size_t active = B;
  for (std::size_t t = 0; t < steps; ++t) {
    while (rec.lengths[active - 1] <= t) --active;
    Tensor2& x = rec.embedded[t];
    x.resize(static_cast<Eigen::Index>(active), E);
    for (std::size_t r = 0; r < active; ++r) {
      Eigen::Index offset = 0;
      for (const auto& table : params.embeddings) {
        const std::int32_t idx = batch.index(table.field, rec.order[r], t);
        if (idx < 0 || idx >= table.weights.rows()) {
          throw ShapeError("index " + std::to_string(idx) + " out of range for " +
                           std::string(field_name(table.field)) + " embedding");
        }
        x.row(static_cast<Eigen::Index>(r)).segment(offset, table.width()) = table.weights.row(idx);
        offset += table.width();
      }
    }
  }

  const auto slots = config.layer_slots();
  const bool lstm = config.cell == CellType::kLstm;
  rec.layers.resize(static_cast<std::size_t>(config.num_layers));
  Tensor2 h0 = Tensor2::Zero(static_cast<Eigen::Index>(B), H);
  Tensor2 c0 = lstm ? Tensor2::Zero(static_cast<Eigen::Index>(B), H) : Tensor2();
  for (int l = 0; l < config.num_layers; ++l) {
    std::vector<Tensor2> inputs;
    if (l == 0) {
      inputs = rec.embedded;
    } else {
      const LayerTrace& below = rec.layers[static_cast<std::size_t>(l - 1)];
      inputs.resize(steps);
      for (std::size_t t = 0; t < steps; ++t) {
        if (config.skip_connections) {
          inputs[t].resize(below.hidden[t].rows(), H + E);
          inputs[t] << below.hidden[t], rec.embedded[t];
        } else {
          inputs[t] = below.hidden[t];
        }
      }
      if (config.share_hidden_state) {
        h0 = gather_final(below.hidden, rec.lengths, H);
        if (lstm) c0 = gather_final(below.cell, rec.lengths, H);
      } else {
        h0.setZero();
        if (lstm) c0.setZero();
      }
    }
    layer_forward(params.cells[static_cast<std::size_t>(slots[static_cast<std::size_t>(l)])],
                  std::move(inputs), h0, c0, rec.layers[static_cast<std::size_t>(l)]);
  }

  rec.final_h = gather_final(rec.layers.back().hidden, rec.lengths, H);
  const Vector logits = (rec.final_h * params.head_w).array() + params.head_b[0];
  rec.probabilities.assign(B, 0.0);
  for (std::size_t r = 0; r < B; ++r) {
    rec.probabilities[rec.order[r]] = sigmoid(logits[static_cast<Eigen::Index>(r)]);
  }
  return rec;
}

std::vector<double> forward(const ModelConfig& config, const ModelParams& params,
                            const Batch& batch) {
  return forward_record(config, params, batch).probabilities;
}

double batch_loss(std::span<const double> probabilities, std::span<const double> labels) {
  if (probabilities.size() != labels.size()) throw ShapeError("probabilities/labels size mismatch");
  if (probabilities.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) total += bce_loss(probabilities[i], labels[i]);
  return total / static_cast<double>(probabilities.size());
}

ModelGrads backward(ForwardRecord& rec, const ModelConfig& config, const ModelParams& params) {
  if (rec.consumed) throw std::logic_error("backward called twice on the same forward record");
  rec.consumed = true;

  ModelGrads grads;
  for (const auto& cell : params.cells) {
    grads.cells.push_back(CellParams::zeros(cell.type, cell.input_size, cell.hidden_size));
  }
  grads.head_w = Vector::Zero(config.hidden_size);
  grads.head_b = Vector::Zero(1);
  grads.embeddings.resize(params.embeddings.size());

  const Batch& batch = *rec.batch;
  const std::size_t B = batch.size();
  if (B == 0) return grads;
  const Eigen::Index H = config.hidden_size;
  const Eigen::Index E = config.embedding_width();
  const bool lstm = config.cell == CellType::kLstm;
  const auto slots = config.layer_slots();

  // d(mean BCE)/d(logit) = (p - y) / B
  Vector d_logit(static_cast<Eigen::Index>(B));
  for (std::size_t r = 0; r < B; ++r) {
    const std::size_t b = rec.order[r];
    d_logit[static_cast<Eigen::Index>(r)] =
        (rec.probabilities[b] - batch.labels[b]) / static_cast<double>(B);
  }
  grads.head_w = rec.final_h.transpose() * d_logit;
  grads.head_b[0] = d_logit.sum();

  Tensor2 d_final_h = d_logit * params.head_w.transpose();
  Tensor2 d_final_c = lstm ? Tensor2::Zero(static_cast<Eigen::Index>(B), H) : Tensor2();
  std::vector<Tensor2> d_outputs;
  std::vector<Tensor2> d_embedded(rec.embedded.size());
  for (std::size_t t = 0; t < rec.embedded.size(); ++t) {
    d_embedded[t] = Tensor2::Zero(rec.embedded[t].rows(), E);
  }

  for (int l = config.num_layers - 1; l >= 0; --l) {
    const auto slot = static_cast<std::size_t>(slots[static_cast<std::size_t>(l)]);
    LayerGradients lg = layer_backward(params.cells[slot], rec.layers[static_cast<std::size_t>(l)],
                                       d_outputs, d_final_h, d_final_c, grads.cells[slot]);
    if (l == 0) {
      for (std::size_t t = 0; t < d_embedded.size(); ++t) d_embedded[t] += lg.d_inputs[t];
      break;
    }
    d_outputs.resize(lg.d_inputs.size());
    for (std::size_t t = 0; t < lg.d_inputs.size(); ++t) {
      d_outputs[t] = lg.d_inputs[t].leftCols(H);
      if (config.skip_connections) d_embedded[t] += lg.d_inputs[t].rightCols(E);
    }
    if (config.share_hidden_state) {
      d_final_h = std::move(lg.d_h0);
      if (lstm) d_final_c = std::move(lg.d_c0);
    } else {
      d_final_h.setZero();
      if (lstm) d_final_c.setZero();
    }
  }

  Eigen::Index offset = 0;
  for (std::size_t f = 0; f < params.embeddings.size(); ++f) {
    const EmbeddingTable& table = params.embeddings[f];
    const Eigen::Index width = table.width();
    if (table.trainable && config.embeddings_trainable) {
      SparseRows& sparse = grads.embeddings[f];
      std::vector<std::int32_t> touched;
      for (std::size_t t = 0; t < d_embedded.size(); ++t) {
        for (Eigen::Index r = 0; r < d_embedded[t].rows(); ++r) {
          touched.push_back(batch.index(table.field, rec.order[static_cast<std::size_t>(r)], t));
        }
      }
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      std::unordered_map<std::int32_t, Eigen::Index> slot_of;
      for (std::size_t i = 0; i < touched.size(); ++i) {
        slot_of.emplace(touched[i], static_cast<Eigen::Index>(i));
      }
      sparse.rows = std::move(touched);
      sparse.values = Tensor2::Zero(static_cast<Eigen::Index>(sparse.rows.size()), width);
      for (std::size_t t = 0; t < d_embedded.size(); ++t) {
        for (Eigen::Index r = 0; r < d_embedded[t].rows(); ++r) {
          const auto idx = batch.index(table.field, rec.order[static_cast<std::size_t>(r)], t);
          sparse.values.row(slot_of.at(idx)) += d_embedded[t].row(r).segment(offset, width);
        }
      }
    }
    offset += width;
  }
  return grads;
}

double predict_session(const Model& model, const Session& session, const FeatureSpace& space,
                       const TransformConfig& transform) {
  const IndexedSequence seq = prepare_sequence(session, space, transform);
  const Batch batch = make_batch(std::span<const IndexedSequence>(&seq, 1));
  return forward(model.config, model.params, batch).front();
}

std::vector<double> predict_corpus(const Model& model, std::span<const IndexedSequence> corpus,
                                   std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<double> scores;
  scores.reserve(corpus.size());
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, corpus.size() - start);
    const Batch batch = make_batch(corpus.subspan(start, n));
    const auto p = forward(model.config, model.params, batch);
    scores.insert(scores.end(), p.begin(), p.end());
  }
  return scores;
}

GradCheckReport grad_check(const ModelConfig& config, ModelParams params, const Batch& batch,
                           const GradCheckOptions& options) {
  ForwardRecord rec = forward_record(config, params, batch);
  ModelGrads grads = backward(rec, config, params);

  // Dense copies of the sparse embedding gradients.
  std::vector<Tensor2> dense_embedding(params.embeddings.size());
  std::vector<GradientGroup> groups;
  for (std::size_t f = 0; f < params.embeddings.size(); ++f) {
    EmbeddingTable& table = params.embeddings[f];
    if (!table.trainable || !config.embeddings_trainable) continue;
    dense_embedding[f] = Tensor2::Zero(table.weights.rows(), table.weights.cols());
    std::vector<std::int32_t> rows = grads.embeddings[f].rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      dense_embedding[f].row(rows[i]) = grads.embeddings[f].values.row(static_cast<Eigen::Index>(i));
    }
    if (std::find(rows.begin(), rows.end(), 0) == rows.end()) rows.push_back(0);
    GradientGroup group;
    group.name = "embedding." + std::string(field_name(table.field));
    group.values = table.weights.data();
    group.analytic = dense_embedding[f].data();
    group.size = static_cast<std::size_t>(table.weights.size());
    for (std::int32_t row : rows) {
      for (Eigen::Index c = 0; c < table.weights.cols(); ++c) {
        group.indices.push_back(static_cast<std::size_t>(row * table.weights.cols() + c));
      }
    }
    groups.push_back(std::move(group));
  }
  for (std::size_t s = 0; s < params.cells.size(); ++s) {
    std::vector<const double*> analytic;
    grads.cells[s].for_each_array(
        [&](std::string_view, const double* data, std::size_t) { analytic.push_back(data); });
    std::size_t k = 0;
    params.cells[s].for_each_array([&](std::string_view name, double* data, std::size_t n) {
      groups.push_back({"cell" + std::to_string(s) + "." + std::string(name), data, analytic[k++], n, {}});
    });
  }
  groups.push_back({"head.w", params.head_w.data(), grads.head_w.data(),
                    static_cast<std::size_t>(params.head_w.size()), {}});
  groups.push_back({"head.b", params.head_b.data(), grads.head_b.data(), 1, {}});

  if (options.corrupt_scale != 1.0) {
    for (auto& t : dense_embedding) t *= options.corrupt_scale;
    for (auto& c : grads.cells) {
      c.for_each_array([&](std::string_view, double* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) data[i] *= options.corrupt_scale;
      });
    }
    grads.head_w *= options.corrupt_scale;
    grads.head_b *= options.corrupt_scale;
  }

  auto loss = [&]() { return batch_loss(forward(config, params, batch), batch.labels); };
  return check_gradients(groups, loss, options.step, options.tolerance);
}

}  // namespace intentr
