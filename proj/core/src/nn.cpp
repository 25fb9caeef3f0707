#include "intentr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "intentr/error.hpp"

namespace intentr {
namespace {

double tanh_fn(double v) { return std::tanh(v); }

std::string shape(const Tensor2& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

struct StepOut {
  Tensor2 gates;
  Tensor2 h;
  Tensor2 c;
  Tensor2 hidden_pre;
};

using ConstBlock = Eigen::Ref<const Tensor2>;
using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

StepOut step_forward(const CellParams& p, const ConstBlock& x, const ConstBlock& h_prev,
                     const ConstBlock& c_prev) {
  const Eigen::Index H = p.hidden_size;
  Tensor2 pre = x * p.w_input.transpose();
  pre.rowwise() += p.b_input.transpose();
  Tensor2 hh = h_prev * p.w_hidden.transpose();
  if (p.b_hidden.size() > 0) hh.rowwise() += p.b_hidden.transpose();

  StepOut out;
  switch (p.type) {
    case CellType::kLstm: {
      Tensor2 a = pre + hh;
      a.leftCols(2 * H) = a.leftCols(2 * H).unaryExpr(&sigmoid);
      a.middleCols(2 * H, H) = a.middleCols(2 * H, H).unaryExpr(&tanh_fn);
      a.rightCols(H) = a.rightCols(H).unaryExpr(&sigmoid);
      out.c = a.middleCols(H, H).cwiseProduct(c_prev) +
              a.leftCols(H).cwiseProduct(a.middleCols(2 * H, H));
      out.h = a.rightCols(H).cwiseProduct(out.c.unaryExpr(&tanh_fn));
      out.gates = std::move(a);
      break;
    }
    case CellType::kGru: {
      Tensor2 gates(x.rows(), 3 * H);
      gates.leftCols(2 * H) = (pre.leftCols(2 * H) + hh.leftCols(2 * H)).unaryExpr(&sigmoid);
      out.hidden_pre = hh.rightCols(H);
      gates.rightCols(H) =
          (pre.rightCols(H) + gates.leftCols(H).cwiseProduct(out.hidden_pre)).unaryExpr(&tanh_fn);
      const auto z = gates.middleCols(H, H).array();
      out.h = ((1.0 - z) * gates.rightCols(H).array() + z * h_prev.array()).matrix();
      out.gates = std::move(gates);
      break;
    }
    case CellType::kRnn: {
      out.h = (pre + hh).unaryExpr(&tanh_fn);
      out.gates = out.h;
      break;
    }
  }
  return out;
}

void check_vector_shapes(const CellParams& p, const Vector& x, const Vector& h) {
  p.validate();
  if (x.size() != p.input_size || h.size() != p.hidden_size) {
    throw ShapeError("cell input shapes x=" + std::to_string(x.size()) +
                     " h=" + std::to_string(h.size()) + " do not match params D=" +
                     std::to_string(p.input_size) + " H=" + std::to_string(p.hidden_size));
  }
}

}  // namespace

std::string_view cell_name(CellType type) {
  switch (type) {
    case CellType::kRnn: return "rnn";
    case CellType::kGru: return "gru";
    case CellType::kLstm: return "lstm";
  }
  return "?";
}

std::optional<CellType> parse_cell_type(std::string_view name) {
  if (name == "rnn") return CellType::kRnn;
  if (name == "gru") return CellType::kGru;
  if (name == "lstm") return CellType::kLstm;
  return std::nullopt;
}

int gate_count(CellType type) {
  switch (type) {
    case CellType::kRnn: return 1;
    case CellType::kGru: return 3;
    case CellType::kLstm: return 4;
  }
  return 0;
}

CellParams CellParams::zeros(CellType type, int input_size, int hidden_size) {
  if (input_size <= 0 || hidden_size <= 0) throw ShapeError("cell sizes must be positive");
  const int rows = gate_count(type) * hidden_size;
  CellParams p;
  p.type = type;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.w_input = Tensor2::Zero(rows, input_size);
  p.w_hidden = Tensor2::Zero(rows, hidden_size);
  p.b_input = Vector::Zero(rows);
  p.b_hidden = type == CellType::kRnn ? Vector() : Vector::Zero(rows);
  return p;
}

CellParams CellParams::random(CellType type, int input_size, int hidden_size,
                              std::mt19937_64& rng) {
  CellParams p = zeros(type, input_size, hidden_size);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
  std::uniform_real_distribution<double> dist(-bound, bound);
  p.for_each_array([&](std::string_view, double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) data[i] = dist(rng);
  });
  return p;
}

std::size_t CellParams::parameter_count() const {
  return static_cast<std::size_t>(w_input.size() + w_hidden.size() + b_input.size() +
                                  b_hidden.size());
}

void CellParams::validate() const {
  const Eigen::Index rows = gate_count(type) * hidden_size;
  const Eigen::Index bias_hidden = type == CellType::kRnn ? 0 : rows;
  if (w_input.rows() != rows || w_input.cols() != input_size || w_hidden.rows() != rows ||
      w_hidden.cols() != hidden_size || b_input.size() != rows || b_hidden.size() != bias_hidden) {
    std::ostringstream msg;
    msg << cell_name(type) << " params: expected w_input " << rows << "x" << input_size
        << ", w_hidden " << rows << "x" << hidden_size << ", biases " << rows << "/"
        << bias_hidden << "; got w_input " << shape(w_input) << ", w_hidden " << shape(w_hidden)
        << ", biases " << b_input.size() << "/" << b_hidden.size();
    throw ShapeError(msg.str());
  }
}

void CellParams::for_each_array(
    const std::function<void(std::string_view, double*, std::size_t)>& fn) {
  fn("w_input", w_input.data(), static_cast<std::size_t>(w_input.size()));
  fn("w_hidden", w_hidden.data(), static_cast<std::size_t>(w_hidden.size()));
  fn("b_input", b_input.data(), static_cast<std::size_t>(b_input.size()));
  if (b_hidden.size() > 0) {
    fn("b_hidden", b_hidden.data(), static_cast<std::size_t>(b_hidden.size()));
  }
}

void CellParams::for_each_array(
    const std::function<void(std::string_view, const double*, std::size_t)>& fn) const {
  const_cast<CellParams*>(this)->for_each_array(
      [&fn](std::string_view name, double* data, std::size_t n) { fn(name, data, n); });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LstmState lstm_cell(const Vector& x, const LstmState& prev, const CellParams& p) {
  if (p.type != CellType::kLstm) throw ShapeError("lstm_cell needs LSTM params");
  check_vector_shapes(p, x, prev.h);
  if (prev.c.size() != p.hidden_size) throw ShapeError("lstm_cell: cell state size mismatch");
  const StepOut out = step_forward(p, x.transpose(), prev.h.transpose(), prev.c.transpose());
  return {out.h.row(0).transpose(), out.c.row(0).transpose()};
}

Vector gru_cell(const Vector& x, const Vector& h_prev, const CellParams& p) {
  if (p.type != CellType::kGru) throw ShapeError("gru_cell needs GRU params");
  check_vector_shapes(p, x, h_prev);
  const StepOut out = step_forward(p, x.transpose(), h_prev.transpose(), Tensor2());
  return out.h.row(0).transpose();
}

Vector rnn_cell(const Vector& x, const Vector& h_prev, const CellParams& p) {
  if (p.type != CellType::kRnn) throw ShapeError("rnn_cell needs RNN params");
  check_vector_shapes(p, x, h_prev);
  const StepOut out = step_forward(p, x.transpose(), h_prev.transpose(), Tensor2());
  return out.h.row(0).transpose();
}

double bce_loss(double probability, double label) {
  const double x = std::clamp(probability, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(label * std::log(x) + (1.0 - label) * std::log(1.0 - x));
}

double bce_grad(double probability, double label) {
  const double x = std::clamp(probability, kBceEpsilon, 1.0 - kBceEpsilon);
  return -label / x + (1.0 - label) / (1.0 - x);
}

void layer_forward(const CellParams& p, std::vector<Tensor2> inputs, const Tensor2& h0,
                   const Tensor2& c0, LayerTrace& trace) {
  const bool lstm = p.type == CellType::kLstm;
  trace = LayerTrace{};
  trace.h0 = h0;
  if (lstm) trace.c0 = c0;
  const std::size_t steps = inputs.size();
  trace.gates.reserve(steps);
  trace.hidden.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::Index n = inputs[t].rows();
    if (inputs[t].cols() != p.input_size) {
      throw ShapeError("layer input width " + std::to_string(inputs[t].cols()) +
                       " != cell input size " + std::to_string(p.input_size));
    }
    const Tensor2& h_src = t == 0 ? h0 : trace.hidden[t - 1];
    StepOut out;
    if (lstm) {
      const Tensor2& c_src = t == 0 ? c0 : trace.cell[t - 1];
      out = step_forward(p, inputs[t], h_src.topRows(n), c_src.topRows(n));
      trace.cell.push_back(std::move(out.c));
    } else {
      out = step_forward(p, inputs[t], h_src.topRows(n), Tensor2());
      if (p.type == CellType::kGru) trace.hidden_pre.push_back(std::move(out.hidden_pre));
    }
    trace.gates.push_back(std::move(out.gates));
    trace.hidden.push_back(std::move(out.h));
  }
  trace.inputs = std::move(inputs);
}

LayerGradients layer_backward(const CellParams& p, const LayerTrace& trace,
                              const std::vector<Tensor2>& d_outputs, const Tensor2& d_final_h,
                              const Tensor2& d_final_c, CellParams& grads) {
  const Eigen::Index H = p.hidden_size;
  const Eigen::Index B = trace.h0.rows();
  const std::size_t steps = trace.hidden.size();
  const bool lstm = p.type == CellType::kLstm;

  Tensor2 dh_next = Tensor2::Zero(B, H);
  Tensor2 dc_next = Tensor2::Zero(B, H);
  LayerGradients out;
  out.d_inputs.resize(steps);

  for (std::size_t step = steps; step-- > 0;) {
    const Eigen::Index n = trace.hidden[step].rows();
    const Eigen::Index n_next = step + 1 < steps ? trace.hidden[step + 1].rows() : 0;
    if (n > n_next) {
      dh_next.middleRows(n_next, n - n_next) += d_final_h.middleRows(n_next, n - n_next);
      if (lstm && d_final_c.size() > 0) {
        dc_next.middleRows(n_next, n - n_next) += d_final_c.middleRows(n_next, n - n_next);
      }
    }
    Tensor2 dh = dh_next.topRows(n);
    if (step < d_outputs.size() && d_outputs[step].size() > 0) dh += d_outputs[step];

    const Tensor2& x = trace.inputs[step];
    const auto h_prev = (step == 0 ? trace.h0 : trace.hidden[step - 1]).topRows(n);
    const Tensor2& g = trace.gates[step];
    Tensor2 d_gates_input;
    Tensor2 d_gates_hidden;

    switch (p.type) {
      case CellType::kLstm: {
        const auto c_prev = (step == 0 ? trace.c0 : trace.cell[step - 1]).topRows(n).array();
        const auto i = g.leftCols(H).array();
        const auto f = g.middleCols(H, H).array();
        const auto cand = g.middleCols(2 * H, H).array();
        const auto o = g.rightCols(H).array();
        const RowArray tc = trace.cell[step].array().tanh();
        const RowArray dc = dc_next.topRows(n).array() + dh.array() * o * (1.0 - tc * tc);
        d_gates_input.resize(n, 4 * H);
        d_gates_input.leftCols(H) = (dc * cand * i * (1.0 - i)).matrix();
        d_gates_input.middleCols(H, H) = (dc * c_prev * f * (1.0 - f)).matrix();
        d_gates_input.middleCols(2 * H, H) = (dc * i * (1.0 - cand * cand)).matrix();
        d_gates_input.rightCols(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
        dc_next.topRows(n) = (dc * f).matrix();
        d_gates_hidden = d_gates_input;
        break;
      }
      case CellType::kGru: {
        const auto r = g.leftCols(H).array();
        const auto z = g.middleCols(H, H).array();
        const auto cand = g.rightCols(H).array();
        const auto hn = trace.hidden_pre[step].array();
        const RowArray d_cand = dh.array() * (1.0 - z) * (1.0 - cand * cand);
        d_gates_input.resize(n, 3 * H);
        d_gates_input.leftCols(H) = (d_cand * hn * r * (1.0 - r)).matrix();
        d_gates_input.middleCols(H, H) =
            (dh.array() * (h_prev.array() - cand) * z * (1.0 - z)).matrix();
        d_gates_input.rightCols(H) = d_cand.matrix();
        d_gates_hidden = d_gates_input;
        d_gates_hidden.rightCols(H) = (d_cand * r).matrix();
        break;
      }
      case CellType::kRnn: {
        d_gates_input = (dh.array() * (1.0 - g.array() * g.array())).matrix();
        break;
      }
    }
    const Tensor2& dgh = p.type == CellType::kRnn ? d_gates_input : d_gates_hidden;

    grads.w_input.noalias() += d_gates_input.transpose() * x;
    grads.w_hidden.noalias() += dgh.transpose() * h_prev;
    grads.b_input += d_gates_input.colwise().sum().transpose();
    if (grads.b_hidden.size() > 0) grads.b_hidden += dgh.colwise().sum().transpose();

    out.d_inputs[step].noalias() = d_gates_input * p.w_input;
    Tensor2 dh_prev = dgh * p.w_hidden;
    if (p.type == CellType::kGru) dh_prev.array() += dh.array() * g.middleCols(H, H).array();
    dh_next.topRows(n) = dh_prev;
  }
  out.d_h0 = std::move(dh_next);
  if (lstm) out.d_c0 = std::move(dc_next);
  return out;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& g : groups) worst = std::max(worst, g.max_rel_error);
  return worst;
}

GradCheckReport check_gradients(std::span<const GradientGroup> groups,
                                const std::function<double()>& loss, double step,
                                double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  for (const auto& group : groups) {
    GroupCheck check;
    check.name = group.name;
    auto probe = [&](std::size_t i) {
      const double original = group.values[i];
      group.values[i] = original + step;
      const double up = loss();
      group.values[i] = original - step;
      const double down = loss();
      group.values[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      check.max_abs_error = std::max(check.max_abs_error, std::abs(group.analytic[i] - numeric));
      check.max_rel_error =
          std::max(check.max_rel_error, relative_error(group.analytic[i], numeric));
      ++check.checked;
    };
    if (group.indices.empty()) {
      for (std::size_t i = 0; i < group.size; ++i) probe(i);
    } else {
      for (std::size_t i : group.indices) probe(i);
    }
    if (check.max_rel_error >= tolerance) report.passed = false;
    report.groups.push_back(std::move(check));
  }
  return report;
}

void check_finite(std::span<const double> values, std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ShapeError("non-finite value in " + std::string(what));
  }
}

}  // namespace intentr
