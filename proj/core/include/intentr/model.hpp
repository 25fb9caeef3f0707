#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "intentr/nn.hpp"
#include "intentr/transform.hpp"
#include "intentr/vocab.hpp"

namespace intentr {

struct ModelConfig {
  CellType cell = CellType::kLstm;
  int num_layers = 3;
  int hidden_size = 256;
  /// Layer l+1 sees concat(layer l output, embedded input).
  bool skip_connections = true;
  /// Layer l+1 starts from layer l's terminal (h, c) instead of zeros.
  bool share_hidden_state = true;
  /// Layers with identical input width share one parameter set.
  bool tie_layer_weights = false;
  bool embeddings_trainable = true;
  FieldConfig fields;

  [[nodiscard]] int embedding_width() const { return fields.embedding_width(); }
  [[nodiscard]] int layer_input_width(int layer) const;
  /// Parameter slot used by each layer, honoring tie_layer_weights.
  [[nodiscard]] std::vector<int> layer_slots() const;
  /// Throws std::invalid_argument for non-positive sizes.
  void validate() const;
};

struct ModelParams {
  /// One table per active field, in Field order.
  std::vector<EmbeddingTable> embeddings;
  /// Distinct cell parameter sets; layers map to them via ModelConfig::layer_slots().
  std::vector<CellParams> cells;
  Vector head_w;
  Vector head_b;  ///< size 1
};

/// Embedding rows per active field, read from the feature space.
std::vector<std::size_t> vocab_rows(const FeatureSpace& space);

/// Embeddings U(-0.075, 0.075); cells U(-1/sqrt(H), 1/sqrt(H)); head likewise.
ModelParams init_params(const ModelConfig& config, std::span<const std::size_t> rows,
                        std::uint64_t seed);

/// Same shapes as init_params, all zeros.
ModelParams zero_params(const ModelConfig& config, std::span<const std::size_t> rows);

/// Cell + head parameters (embeddings excluded).
std::size_t count_params(const ModelConfig& config);
std::size_t count_embedding_params(const ModelConfig& config, std::span<const std::size_t> rows);

/// Gradient for one embedding table, touching only rows seen in the batch.
struct SparseRows {
  std::vector<std::int32_t> rows;  ///< ascending, unique
  Tensor2 values;                  ///< rows.size() x width
};

struct ModelGrads {
  std::vector<SparseRows> embeddings;
  std::vector<CellParams> cells;
  Vector head_w;
  Vector head_b;
};

/// Everything backward() needs. Rows are processed in length-descending
/// order; `order[r]` is the batch row of packed row r.
struct ForwardRecord {
  const Batch* batch = nullptr;
  std::vector<std::size_t> order;
  std::vector<std::size_t> lengths;
  std::vector<Tensor2> embedded;  ///< per step, active x E
  std::vector<LayerTrace> layers;
  Tensor2 final_h;                ///< B x H of the top layer, packed order
  std::vector<double> probabilities;  ///< batch order
  bool consumed = false;
};

ForwardRecord forward_record(const ModelConfig& config, const ModelParams& params,
                             const Batch& batch);

/// Probabilities in (0,1), one per batch row.
std::vector<double> forward(const ModelConfig& config, const ModelParams& params,
                            const Batch& batch);

/// Mean BCE over the batch rows.
double batch_loss(std::span<const double> probabilities, std::span<const double> labels);

/// Reverse-mode gradients of batch_loss. Throws std::logic_error if the
/// record was already consumed.
ModelGrads backward(ForwardRecord& record, const ModelConfig& config, const ModelParams& params);

/// A config plus its trained parameters.
struct Model {
  ModelConfig config;
  ModelParams params;
};

/// unroll -> reverse -> embed -> forward for one session.
double predict_session(const Model& model, const Session& session, const FeatureSpace& space,
                       const TransformConfig& transform);

/// Scores a corpus in fixed-size chunks; output in corpus order.
std::vector<double> predict_corpus(const Model& model, std::span<const IndexedSequence> corpus,
                                   std::size_t batch_size = 256);

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Negative control: scale analytic gradients before comparing.
  double corrupt_scale = 1.0;
};

/// Central-difference check of every cell and head parameter plus the
/// embedding rows the batch touches (and row 0).
GradCheckReport grad_check(const ModelConfig& config, ModelParams params, const Batch& batch,
                           const GradCheckOptions& options = {});

}  // namespace intentr
