#pragma once

#include <Eigen/Dense>
#include <span>
#include <string_view>

namespace intentr {

/// Row-major dense matrix used for all parameters and activations.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Throws ShapeError naming `what` if any entry is NaN or infinite.
void check_finite(std::span<const double> values, std::string_view what);

inline std::span<const double> as_span(const Tensor2& t) {
  return {t.data(), static_cast<std::size_t>(t.size())};
}
inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace intentr
