#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "intentr/ingest.hpp"

namespace intentr {

/// Synthetic clickstream with a planted purchase signal. Buyers draw each
/// item from a small "hot" subset with probability signal_strength and
/// linger longer on each event; at signal_strength 0 both classes come from
/// the same distribution.
struct SynthConfig {
  std::size_t n_sessions = 5000;
  double buyer_fraction = 0.055;
  std::size_t n_items = 2000;
  std::size_t n_categories = 40;
  /// Fraction of the catalogue that is "hot".
  double hot_item_fraction = 0.05;
  /// Geometric session length on {1, 2, ...} with this mean.
  double mean_length = 3.0;
  /// Log-normal dwell in seconds: exp(N(mu, sigma)).
  double dwell_log_mu = 4.0;
  double dwell_log_sigma = 1.0;
  /// Buyer dwell is multiplied by 1 + (factor - 1) * signal_strength.
  double buyer_dwell_factor = 3.0;
  double signal_strength = 1.0;
  /// Share of buy rows carrying price and quantity.
  double priced_buy_fraction = 0.3;
  std::uint64_t seed = 1;
  EpochSeconds start_time = 1396310400;  // 2014-04-01T00:00:00Z
  std::size_t span_days = 30;

  void validate() const;
};

struct SynthOutput {
  std::string clicks_csv;
  std::string buys_csv;
  std::string labels_csv;
  std::string metadata_json;
  std::vector<std::pair<SessionId, int>> labels;
};

SynthOutput generate(const SynthConfig& config);

/// Writes clicks.csv, buys.csv, labels.csv and metadata.json into dir.
void write_synth(const SynthOutput& output, const std::string& dir);

/// Formats epoch seconds as `YYYY-MM-DDTHH:MM:SS.mmmZ`.
std::string format_iso8601(EpochSeconds seconds, int millis = 0);

}  // namespace intentr
