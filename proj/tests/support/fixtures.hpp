#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "intentr/model.hpp"
#include "oracles.hpp"

namespace fixture {

/// Small per-field widths summing to `total` (at least 5).
inline intentr::FieldConfig widths_summing_to(int total) {
  intentr::FieldConfig f;
  const int base = total / 5;
  f.widths = {base + total % 5, base, base, base, base, 1};
  return f;
}

inline std::vector<std::size_t> small_rows() { return {9, 5, 4, 3, 3}; }

/// Random sequences with valid indices into `rows` and alternating labels.
inline std::vector<intentr::IndexedSequence> random_sequences(
    const std::vector<std::size_t>& lengths, const std::vector<std::size_t>& rows,
    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<intentr::IndexedSequence> out;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    intentr::IndexedSequence s;
    s.session_id = static_cast<intentr::SessionId>(i + 1);
    s.label = i % 2 == 0 ? intentr::Label::kBuyer : intentr::Label::kClicker;
    s.original_length = lengths[i];
    s.unrolled_length = lengths[i];
    for (std::size_t t = 0; t < lengths[i]; ++t) {
      intentr::IndexedEvent e;
      for (std::size_t f = 0; f < rows.size(); ++f) {
        e.index[f] = static_cast<std::int32_t>(
            std::uniform_int_distribution<std::size_t>(0, rows[f] - 1)(rng));
      }
      s.events.push_back(e);
    }
    out.push_back(s);
  }
  return out;
}

/// Embedded vectors of one sequence, concatenating each table's row.
inline std::vector<oracle::Vec> embed(const intentr::ModelParams& params,
                                      const intentr::IndexedSequence& s) {
  std::vector<oracle::Vec> out;
  for (const auto& e : s.events) {
    oracle::Vec v;
    for (const auto& table : params.embeddings) {
      const auto row = e[table.field];
      for (Eigen::Index c = 0; c < table.weights.cols(); ++c) v.push_back(table.weights(row, c));
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace fixture
