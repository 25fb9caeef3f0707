#include "intentr/transform.hpp"

#include <numeric>
#include <random>
#include <stdexcept>

namespace intentr {

std::size_t repeat_count(EpochSeconds dwell, EpochSeconds threshold) {
  if (dwell <= 0) return 1;
  const auto copies = static_cast<std::size_t>((dwell + threshold - 1) / threshold);
  return std::max<std::size_t>(1, copies);
}

std::vector<ClickEvent> unroll(const Session& session, EpochSeconds threshold,
                               UnrollStats* stats) {
  if (threshold <= 0) throw std::invalid_argument("unroll threshold must be positive");
  const auto& events = session.events;
  std::vector<ClickEvent> out;
  out.reserve(events.size());
  for (std::size_t k = 0; k < events.size(); ++k) {
    std::size_t copies = 1;
    if (k + 1 < events.size()) {
      const EpochSeconds dwell = events[k + 1].timestamp - events[k].timestamp;
      if (dwell < 0 && stats) ++stats->negative_dwell;
      copies = repeat_count(dwell, threshold);
    }
    out.insert(out.end(), copies, events[k]);
  }
  if (stats) {
    stats->events_before += events.size();
    stats->events_after += out.size();
  }
  return out;
}

IndexedSequence prepare_sequence(const Session& session, const FeatureSpace& space,
                                 const TransformConfig& config, UnrollStats* stats) {
  IndexedSequence seq;
  seq.session_id = session.id;
  seq.label = session.label;
  seq.original_length = session.events.size();

  std::vector<ClickEvent> events =
      config.unroll ? unroll(session, config.unroll_threshold, stats) : session.events;
  seq.unrolled_length = events.size();
  if (config.max_len > 0 && events.size() > config.max_len) {
    events.erase(events.begin(), events.end() - static_cast<std::ptrdiff_t>(config.max_len));
    if (stats) ++stats->truncated_sessions;
  }
  if (config.reverse) events = reverse(std::move(events));

  seq.events.reserve(events.size());
  for (const auto& e : events) seq.events.push_back(space.index_event(e));
  for (const auto& e : session.events) {
    if (auto price = space.item_price(e.item_id)) {
      seq.max_price = seq.max_price ? std::max(*seq.max_price, *price) : *price;
    }
  }
  return seq;
}

std::vector<IndexedSequence> prepare_corpus(std::span<const Session> sessions,
                                            const FeatureSpace& space,
                                            const TransformConfig& config, UnrollStats* stats) {
  std::vector<IndexedSequence> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) out.push_back(prepare_sequence(s, space, config, stats));
  return out;
}

Batch make_batch(std::span<const IndexedSequence* const> sequences) {
  Batch batch;
  for (const auto* s : sequences) batch.max_len = std::max(batch.max_len, s->events.size());
  const std::size_t cells = sequences.size() * batch.max_len;
  batch.mask.assign(cells, 0);
  for (auto& idx : batch.indices) idx.assign(cells, kPadIndex);
  for (std::size_t row = 0; row < sequences.size(); ++row) {
    const IndexedSequence& s = *sequences[row];
    batch.session_ids.push_back(s.session_id);
    batch.lengths.push_back(s.events.size());
    batch.labels.push_back(s.label == Label::kBuyer ? 1.0 : 0.0);
    for (std::size_t t = 0; t < s.events.size(); ++t) {
      const std::size_t cell = row * batch.max_len + t;
      batch.mask[cell] = 1;
      for (std::size_t f = 0; f < kNumFields; ++f) batch.indices[f][cell] = s.events[t].index[f];
    }
  }
  return batch;
}

Batch make_batch(std::span<const IndexedSequence> sequences) {
  std::vector<const IndexedSequence*> ptrs;
  ptrs.reserve(sequences.size());
  for (const auto& s : sequences) ptrs.push_back(&s);
  return make_batch(std::span<const IndexedSequence* const>(ptrs));
}

std::vector<Batch> batchify(std::span<const IndexedSequence> corpus, const BatchOptions& options) {
  if (options.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (options.shuffle) {
    std::mt19937_64 rng(options.seed * 0x9E3779B97F4A7C15ULL + options.epoch);
    std::shuffle(order.begin(), order.end(), rng);
  }
  if (options.length_buckets) {
    const std::size_t window = options.batch_size * 50;
    for (std::size_t start = 0; start < order.size(); start += window) {
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
      const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + window));
      std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
        return corpus[a].events.size() < corpus[b].events.size();
      });
    }
  }

  std::vector<Batch> batches;
  std::vector<const IndexedSequence*> members;
  for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
    members.clear();
    const std::size_t end = std::min(order.size(), start + options.batch_size);
    for (std::size_t i = start; i < end; ++i) members.push_back(&corpus[order[i]]);
    batches.push_back(make_batch(std::span<const IndexedSequence* const>(members)));
  }
  return batches;
}

}  // namespace intentr
