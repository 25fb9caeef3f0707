#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "intentr/ingest.hpp"
#include "intentr/transform.hpp"

namespace intentr {

struct ScoredSession {
  SessionId session_id = 0;
  double score = 0.0;
  Label label = Label::kClicker;
  std::size_t original_length = 0;
  std::size_t unrolled_length = 0;
  std::optional<std::int64_t> max_price;

  [[nodiscard]] int positive() const { return label == Label::kBuyer ? 1 : 0; }
};

/// Pairs corpus metadata with model scores (same order).
std::vector<ScoredSession> score_sessions(std::span<const IndexedSequence> corpus,
                                          std::span<const double> scores);

/// Mann-Whitney AUC with midranks for ties. Labels are 0/1. Throws
/// UndefinedMetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

/// One threshold per distinct score, highest first, from (0,0) to (1,1).
/// Points on a straight segment between their neighbours are dropped.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

double trapezoid_area(std::span<const RocPoint> curve);

/// AUC of a subset; `auc` is empty when the subset lacks a class.
struct SubsetAuc {
  std::optional<double> auc;
  std::size_t count = 0;
  std::size_t positives = 0;
};

SubsetAuc subset_auc(std::span<const ScoredSession> sessions);

/// Keyed by original length; key `cap` pools every length >= cap.
std::map<std::size_t, SubsetAuc> auc_by_session_length(std::span<const ScoredSession> sessions,
                                                       std::size_t cap = 20);

/// Sessions where unrolling added at least one event.
std::vector<ScoredSession> dwelltime_subset(std::span<const ScoredSession> sessions);

struct PriceThresholds {
  std::int64_t high_above = 10000;
  std::int64_t low_at_most = 750;
};

struct PriceBuckets {
  SubsetAuc high;
  SubsetAuc low;
};

/// Sessions without price data fall in neither bucket.
PriceBuckets price_buckets(std::span<const ScoredSession> sessions,
                           const PriceThresholds& thresholds = {});

struct EvalReport {
  SubsetAuc overall;
  std::vector<RocPoint> roc;
  std::map<std::size_t, SubsetAuc> by_length;
  SubsetAuc dwelltime;
  std::map<std::size_t, SubsetAuc> dwelltime_by_length;
  PriceBuckets price;
  std::size_t length_cap = 20;
};

EvalReport evaluate(std::span<const ScoredSession> sessions, std::size_t length_cap = 20);

/// Reads `session_id,score` CSV with a header row.
std::unordered_map<SessionId, double> read_score_file(std::istream& in);

struct Comparison {
  std::size_t ours = 0;
  std::size_t theirs = 0;
  std::size_t intersection = 0;
  SubsetAuc ours_auc;
  SubsetAuc theirs_auc;
  std::map<std::size_t, SubsetAuc> ours_by_length;
  std::map<std::size_t, SubsetAuc> theirs_by_length;
};

/// AUCs of both score sets on the shared session ids. Throws Error on an
/// empty intersection.
Comparison compare_predictions(std::span<const ScoredSession> ours,
                               const std::unordered_map<SessionId, double>& theirs,
                               std::size_t length_cap = 20);

std::string report_json(const EvalReport& report, const Comparison* comparison = nullptr);
std::string report_text(const EvalReport& report, const Comparison* comparison = nullptr);
void write_roc_csv(std::ostream& out, std::span<const RocPoint> curve);
void write_score_file(std::ostream& out, std::span<const ScoredSession> sessions);

}  // namespace intentr
