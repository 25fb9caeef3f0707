#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "intentr/error.hpp"
#include "intentr/model.hpp"
#include "intentr/transform.hpp"

namespace intentr {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 20;
  /// Stop after this many consecutive epochs below the best validation AUC.
  std::size_t early_stop_patience = 2;
  /// Learning rate multiplier applied after every worsening epoch.
  double anneal_factor = 0.5;
  std::uint64_t seed = 1;
  bool freeze_embeddings = false;
  /// Global gradient-norm clip; off when empty.
  std::optional<double> clip_norm;
  bool length_buckets = false;

  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moments shaped like the parameters.
struct AdamState {
  ModelParams m;
  ModelParams v;
  std::size_t step = 0;

  static AdamState for_params(const ModelParams& params);
};

/// Bias-corrected Adam update of a flat array. `step` is 1-based.
void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t step, double lr, const AdamConfig& cfg = {});

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

/// One optimizer step. Embedding rows absent from the sparse gradient keep
/// their weights and moments. Throws NonFiniteGradient before touching
/// anything if a gradient entry is NaN or infinite.
void adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

/// L2 norm over every gradient entry.
double gradient_norm(const ModelGrads& grads);
void scale_gradients(ModelGrads& grads, double factor);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_auc = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
};

std::string epoch_record_json(const EpochRecord& record);

struct TrainHooks {
  /// Replaces the validation AUC computation (used for scripted runs).
  std::function<double(const ModelParams&, std::size_t epoch)> validation_auc;
  std::function<void(const EpochRecord&, const ModelParams&)> on_epoch;
  /// Starting parameters; freshly initialized from the seed when null.
  const ModelParams* initial = nullptr;
};

struct TrainResult {
  ModelParams best_params;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_auc = 0.0;
  bool stopped_early = false;
};

/// Adam on mean BCE. After each epoch the validation AUC decides: a new
/// best resets patience and snapshots the parameters; a strictly lower AUC
/// multiplies the learning rate by anneal_factor and counts towards
/// patience; a tie does neither. Returns the best snapshot.
TrainResult train(const ModelConfig& model_config, const TrainConfig& config,
                  std::span<const IndexedSequence> train_set,
                  std::span<const IndexedSequence> valid_set,
                  std::span<const std::size_t> vocab_rows, const TrainHooks& hooks = {});

/// AUC of the model over a corpus.
double corpus_auc(const Model& model, std::span<const IndexedSequence> corpus,
                  std::size_t batch_size = 256);

struct GridSpec {
  std::vector<CellType> cells{CellType::kRnn, CellType::kGru, CellType::kLstm};
  std::vector<int> layers{1, 2, 3};
  std::vector<int> hidden{64, 128, 256, 512};

  [[nodiscard]] std::size_t size() const { return cells.size() * layers.size() * hidden.size(); }
};

struct GridCell {
  CellType cell = CellType::kLstm;
  int layers = 1;
  int hidden = 64;
  std::optional<double> valid_auc;
  std::optional<double> test_auc;
  std::size_t epochs = 0;
  std::string error;
  bool from_journal = false;

  [[nodiscard]] std::string key() const;
  [[nodiscard]] bool ok() const { return error.empty(); }
};

struct GridOptions {
  ModelConfig base;
  TrainConfig train;
  /// One JSON line per finished cell; cells already present are skipped.
  std::string journal_path;
  std::function<void(const GridCell&)> on_cell;
};

/// Cells listed in the journal. A torn final line is ignored.
std::vector<GridCell> read_grid_journal(const std::string& path);

/// Trains and tests every cell x layers x hidden combination in that nesting
/// order. A failing cell is recorded and the search continues.
std::vector<GridCell> grid_search(const GridSpec& spec, const GridOptions& options,
                                  std::span<const IndexedSequence> train_set,
                                  std::span<const IndexedSequence> valid_set,
                                  std::span<const IndexedSequence> test_set,
                                  std::span<const std::size_t> vocab_rows);

/// Hidden sizes as rows, cell/layer pairs as columns; test AUC where
/// available, else validation AUC; empty for failed cells.
std::string grid_table_csv(const GridSpec& spec, std::span<const GridCell> cells);

}  // namespace intentr
