#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "intentr/tensor.hpp"

namespace intentr {

enum class CellType : std::uint8_t { kRnn = 0, kGru = 1, kLstm = 2 };

std::string_view cell_name(CellType type);
std::optional<CellType> parse_cell_type(std::string_view name);

/// Gate blocks stacked in the weight matrices: 4 for LSTM, 3 for GRU, 1 for RNN.
int gate_count(CellType type);

/// Parameters of one recurrent layer. Gate blocks of H rows are stacked in
/// w_input ((G*H) x D) and w_hidden ((G*H) x H):
///   LSTM: input, forget, cell (candidate), output
///   GRU:  reset, update, candidate
///   RNN:  single block
/// LSTM and GRU carry separate input-side and hidden-side biases; the vanilla
/// RNN has one bias (b_hidden is empty).
struct CellParams {
  CellType type = CellType::kLstm;
  int input_size = 0;
  int hidden_size = 0;
  Tensor2 w_input;
  Tensor2 w_hidden;
  Vector b_input;
  Vector b_hidden;

  static CellParams zeros(CellType type, int input_size, int hidden_size);
  /// U(-1/sqrt(H), 1/sqrt(H)) for every weight and bias.
  static CellParams random(CellType type, int input_size, int hidden_size, std::mt19937_64& rng);

  [[nodiscard]] std::size_t parameter_count() const;
  /// Throws ShapeError listing expected and actual shapes on mismatch.
  void validate() const;
  /// Visits (name, data, size) for every parameter array in a fixed order.
  void for_each_array(const std::function<void(std::string_view, double*, std::size_t)>& fn);
  void for_each_array(
      const std::function<void(std::string_view, const double*, std::size_t)>& fn) const;
};

using LstmParams = CellParams;
using GruParams = CellParams;
using RnnParams = CellParams;

struct LstmState {
  Vector h;
  Vector c;
};

double sigmoid(double x);

/// One LSTM step for a single input vector.
LstmState lstm_cell(const Vector& x, const LstmState& prev, const CellParams& p);
/// h' = (1 - z) * n + z * h with n = tanh(W_in x + b_in + r * (W_hn h + b_hn)).
Vector gru_cell(const Vector& x, const Vector& h_prev, const CellParams& p);
/// h' = tanh(W_x x + W_h h + b).
Vector rnn_cell(const Vector& x, const Vector& h_prev, const CellParams& p);

inline constexpr double kBceEpsilon = 1e-12;

/// -[y log x + (1-y) log(1-x)] with x clamped to [eps, 1-eps].
double bce_loss(double probability, double label);
/// d bce / d probability at the clamped probability.
double bce_grad(double probability, double label);

/// Activations of one recurrent layer over a packed batch: rows are sorted
/// by length descending, so step t touches rows [0, active[t]).
struct LayerTrace {
  std::vector<Tensor2> inputs;      ///< active[t] x D
  std::vector<Tensor2> gates;       ///< active[t] x (G*H), post-activation
  std::vector<Tensor2> hidden;      ///< active[t] x H
  std::vector<Tensor2> cell;        ///< LSTM only, active[t] x H
  std::vector<Tensor2> hidden_pre;  ///< GRU only: W_hn h + b_hn
  Tensor2 h0;                       ///< B x H
  Tensor2 c0;                       ///< B x H (LSTM)
};

/// Runs a layer over all steps. `inputs[t]` has active[t] rows; h0/c0 are B x H.
void layer_forward(const CellParams& p, std::vector<Tensor2> inputs, const Tensor2& h0,
                   const Tensor2& c0, LayerTrace& trace);

/// Gradients for layer_backward. `d_final_h` / `d_final_c` (B x H) are added
/// at each row's last valid step; `d_outputs[t]` (active[t] x H, may be
/// empty) is the gradient reaching h_t from above.
struct LayerGradients {
  std::vector<Tensor2> d_inputs;  ///< active[t] x D
  Tensor2 d_h0;
  Tensor2 d_c0;
};

LayerGradients layer_backward(const CellParams& p, const LayerTrace& trace,
                              const std::vector<Tensor2>& d_outputs, const Tensor2& d_final_h,
                              const Tensor2& d_final_c, CellParams& grads);

/// One parameter array taking part in a finite-difference check.
struct GradientGroup {
  std::string name;
  double* values = nullptr;
  const double* analytic = nullptr;
  std::size_t size = 0;
  /// Elements to check; empty means all of them.
  std::vector<std::size_t> indices;
};

struct GroupCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GroupCheck> groups;
  double tolerance = 0.0;
  bool passed = true;

  [[nodiscard]] double max_rel_error() const;
};

/// |a - n| / max(|a|, |n|, floor). Entries smaller than `floor` are
/// effectively compared on an absolute scale.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares `analytic` against central differences of `loss` with the given
/// step. An empty group list passes vacuously.
GradCheckReport check_gradients(std::span<const GradientGroup> groups,
                                const std::function<double()>& loss, double step,
                                double tolerance);

}  // namespace intentr
