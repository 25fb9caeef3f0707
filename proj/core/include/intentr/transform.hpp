#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "intentr/ingest.hpp"
#include "intentr/vocab.hpp"

namespace intentr {

struct TransformConfig {
  bool unroll = true;
  EpochSeconds unroll_threshold = 150;
  bool reverse = true;
  /// Unrolled sessions longer than this keep only their most recent events.
  std::size_t max_len = 500;
};

struct UnrollStats {
  std::size_t negative_dwell = 0;
  std::size_t events_before = 0;
  std::size_t events_after = 0;
  std::size_t truncated_sessions = 0;

  [[nodiscard]] double growth() const {
    return events_before == 0 ? 1.0
                              : static_cast<double>(events_after) /
                                    static_cast<double>(events_before);
  }
};

/// Number of copies for an event followed by `dwell` seconds of inactivity:
/// max(1, ceil(dwell / threshold)). Negative dwell counts as 0.
std::size_t repeat_count(EpochSeconds dwell, EpochSeconds threshold);

/// Repeats each event by its dwell to the next event; the last event appears
/// once. Throws std::invalid_argument if threshold <= 0.
std::vector<ClickEvent> unroll(const Session& session, EpochSeconds threshold,
                               UnrollStats* stats = nullptr);

template <typename T>
std::vector<T> reverse(std::vector<T> sequence) {
  std::reverse(sequence.begin(), sequence.end());
  return sequence;
}

/// A session ready for batching: indexed events in model order.
struct IndexedSequence {
  SessionId session_id = 0;
  Label label = Label::kClicker;
  std::vector<IndexedEvent> events;
  std::size_t original_length = 0;
  std::size_t unrolled_length = 0;
  std::optional<std::int64_t> max_price;
};

/// unroll -> cap -> reverse -> index. The label is only copied.
IndexedSequence prepare_sequence(const Session& session, const FeatureSpace& space,
                                 const TransformConfig& config, UnrollStats* stats = nullptr);

std::vector<IndexedSequence> prepare_corpus(std::span<const Session> sessions,
                                            const FeatureSpace& space,
                                            const TransformConfig& config,
                                            UnrollStats* stats = nullptr);

/// B sequences padded to the longest. Index matrices are B x max_len,
/// row-major; padded cells hold kPadIndex and mask 0.
struct Batch {
  std::size_t max_len = 0;
  std::vector<SessionId> session_ids;
  std::vector<std::size_t> lengths;
  std::vector<double> labels;
  std::vector<std::uint8_t> mask;
  std::array<std::vector<std::int32_t>, kNumFields> indices;

  [[nodiscard]] std::size_t size() const { return lengths.size(); }
  [[nodiscard]] std::int32_t index(Field f, std::size_t row, std::size_t t) const {
    return indices[static_cast<std::size_t>(f)][row * max_len + t];
  }
  [[nodiscard]] bool valid(std::size_t row, std::size_t t) const {
    return mask[row * max_len + t] != 0;
  }
};

Batch make_batch(std::span<const IndexedSequence* const> sequences);
Batch make_batch(std::span<const IndexedSequence> sequences);

struct BatchOptions {
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  bool shuffle = true;
  /// Sort by length inside windows of 50 batches before cutting batches.
  bool length_buckets = false;
};

/// Deterministic in (corpus, options).
std::vector<Batch> batchify(std::span<const IndexedSequence> corpus, const BatchOptions& options);

}  // namespace intentr
