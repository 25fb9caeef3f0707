#include "intentr/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "intentr/error.hpp"

namespace intentr {
namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
}

std::vector<int> labels_of(std::span<const ScoredSession> sessions) {
  std::vector<int> labels;
  labels.reserve(sessions.size());
  for (const auto& s : sessions) labels.push_back(s.positive());
  return labels;
}

std::vector<double> scores_of(std::span<const ScoredSession> sessions) {
  std::vector<double> scores;
  scores.reserve(sessions.size());
  for (const auto& s : sessions) scores.push_back(s.score);
  return scores;
}

std::string format_auc(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

nlohmann::json subset_json(const SubsetAuc& s) {
  nlohmann::json j;
  j["auc"] = s.auc ? nlohmann::json(*s.auc) : nlohmann::json(nullptr);
  j["count"] = s.count;
  j["positives"] = s.positives;
  return j;
}

nlohmann::json length_json(const std::map<std::size_t, SubsetAuc>& by_length, std::size_t cap) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [len, s] : by_length) {
    nlohmann::json j = subset_json(s);
    j["length"] = len;
    j["pooled"] = len >= cap;
    arr.push_back(std::move(j));
  }
  return arr;
}

void length_table(std::ostringstream& out, const std::map<std::size_t, SubsetAuc>& by_length,
                  std::size_t cap) {
  char line[96];
  std::snprintf(line, sizeof line, "  %-8s %10s %10s %10s\n", "length", "sessions", "buyers", "auc");
  out << line;
  for (const auto& [len, s] : by_length) {
    const std::string key = len >= cap ? std::to_string(cap) + "+" : std::to_string(len);
    std::snprintf(line, sizeof line, "  %-8s %10zu %10zu %10s\n", key.c_str(), s.count, s.positives,
                  format_auc(s.auc).c_str());
    out << line;
  }
}

}  // namespace

std::vector<ScoredSession> score_sessions(std::span<const IndexedSequence> corpus,
                                          std::span<const double> scores) {
  if (corpus.size() != scores.size()) throw ShapeError("corpus and scores differ in length");
  std::vector<ScoredSession> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& seq = corpus[i];
    out.push_back({seq.session_id, scores[i], seq.label, seq.original_length, seq.unrolled_length,
                   seq.max_price});
  }
  return out;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int l : labels) positives += l != 0 ? 1 : 0;
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("AUC undefined: " + std::to_string(positives) + " positives, " +
                               std::to_string(negatives) + " negatives");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // ranks are 1-based; a tie group spanning ranks [i+1, j] gets (i+1+j)/2
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) positive_rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::size_t positives = 0;
  for (int l : labels) positives += l != 0 ? 1 : 0;
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("ROC undefined without both classes");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  struct Counts {
    std::size_t fp, tp;
    double threshold;
  };
  std::vector<Counts> counts{{0, 0, std::numeric_limits<double>::infinity()}};
  std::size_t fp = 0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] != 0 ? tp : fp) += 1;
      ++i;
    }
    counts.push_back({fp, tp, s});
  }

  // drop interior points on a straight segment (exact integer test)
  std::vector<Counts> kept;
  for (const Counts& c : counts) {
    while (kept.size() >= 2) {
      const Counts& a = kept[kept.size() - 2];
      const Counts& b = kept.back();
      const auto cross =
          static_cast<long long>(b.fp - a.fp) * static_cast<long long>(c.tp - b.tp) -
          static_cast<long long>(b.tp - a.tp) * static_cast<long long>(c.fp - b.fp);
      if (cross != 0) break;
      kept.pop_back();
    }
    kept.push_back(c);
  }

  std::vector<RocPoint> curve;
  curve.reserve(kept.size());
  for (const Counts& c : kept) {
    curve.push_back({static_cast<double>(c.fp) / static_cast<double>(negatives),
                     static_cast<double>(c.tp) / static_cast<double>(positives), c.threshold});
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
  }
  return area;
}

SubsetAuc subset_auc(std::span<const ScoredSession> sessions) {
  SubsetAuc out;
  out.count = sessions.size();
  for (const auto& s : sessions) out.positives += s.positive();
  if (out.positives > 0 && out.positives < out.count) {
    const auto scores = scores_of(sessions);
    const auto labels = labels_of(sessions);
    out.auc = auc(scores, labels);
  }
  return out;
}

std::map<std::size_t, SubsetAuc> auc_by_session_length(std::span<const ScoredSession> sessions,
                                                       std::size_t cap) {
  std::map<std::size_t, std::vector<ScoredSession>> groups;
  for (const auto& s : sessions) groups[std::min(s.original_length, cap)].push_back(s);
  std::map<std::size_t, SubsetAuc> out;
  for (const auto& [len, members] : groups) out[len] = subset_auc(members);
  return out;
}

std::vector<ScoredSession> dwelltime_subset(std::span<const ScoredSession> sessions) {
  std::vector<ScoredSession> out;
  for (const auto& s : sessions) {
    if (s.unrolled_length > s.original_length) out.push_back(s);
  }
  return out;
}

PriceBuckets price_buckets(std::span<const ScoredSession> sessions,
                           const PriceThresholds& thresholds) {
  std::vector<ScoredSession> high;
  std::vector<ScoredSession> low;
  for (const auto& s : sessions) {
    if (!s.max_price) continue;
    if (*s.max_price > thresholds.high_above) high.push_back(s);
    if (*s.max_price <= thresholds.low_at_most) low.push_back(s);
  }
  return {subset_auc(high), subset_auc(low)};
}

EvalReport evaluate(std::span<const ScoredSession> sessions, std::size_t length_cap) {
  EvalReport report;
  report.length_cap = length_cap;
  report.overall = subset_auc(sessions);
  if (report.overall.auc) report.roc = roc_curve(scores_of(sessions), labels_of(sessions));
  report.by_length = auc_by_session_length(sessions, length_cap);
  const auto dwell = dwelltime_subset(sessions);
  report.dwelltime = subset_auc(dwell);
  report.dwelltime_by_length = auc_by_session_length(dwell, length_cap);
  report.price = price_buckets(sessions);
  return report;
}

std::unordered_map<SessionId, double> read_score_file(std::istream& in) {
  std::unordered_map<SessionId, double> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.starts_with("session_id")) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("score file line " + std::to_string(line_no));
    try {
      scores[std::stoll(line.substr(0, comma))] = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw IoError("score file line " + std::to_string(line_no) + ": " + line);
    }
  }
  return scores;
}

Comparison compare_predictions(std::span<const ScoredSession> ours,
                               const std::unordered_map<SessionId, double>& theirs,
                               std::size_t length_cap) {
  Comparison cmp;
  cmp.ours = ours.size();
  cmp.theirs = theirs.size();
  std::vector<ScoredSession> mine;
  std::vector<ScoredSession> other;
  for (const auto& s : ours) {
    auto it = theirs.find(s.session_id);
    if (it == theirs.end()) continue;
    mine.push_back(s);
    other.push_back(s);
    other.back().score = it->second;
  }
  cmp.intersection = mine.size();
  if (mine.empty()) throw Error("empty intersection between prediction sets");
  cmp.ours_auc = subset_auc(mine);
  cmp.theirs_auc = subset_auc(other);
  cmp.ours_by_length = auc_by_session_length(mine, length_cap);
  cmp.theirs_by_length = auc_by_session_length(other, length_cap);
  return cmp;
}

std::string report_json(const EvalReport& report, const Comparison* comparison) {
  nlohmann::json j;
  j["overall"] = subset_json(report.overall);
  j["length_cap"] = report.length_cap;
  j["by_session_length"] = length_json(report.by_length, report.length_cap);
  j["dwelltime"] = subset_json(report.dwelltime);
  j["dwelltime_by_session_length"] = length_json(report.dwelltime_by_length, report.length_cap);
  j["price"]["high"] = subset_json(report.price.high);
  j["price"]["low"] = subset_json(report.price.low);
  j["roc_points"] = report.roc.size();
  if (comparison) {
    nlohmann::json c;
    c["ours_sessions"] = comparison->ours;
    c["theirs_sessions"] = comparison->theirs;
    c["intersection"] = comparison->intersection;
    c["ours"] = subset_json(comparison->ours_auc);
    c["theirs"] = subset_json(comparison->theirs_auc);
    c["ours_by_session_length"] = length_json(comparison->ours_by_length, report.length_cap);
    c["theirs_by_session_length"] = length_json(comparison->theirs_by_length, report.length_cap);
    j["comparison"] = std::move(c);
  }
  return j.dump(2);
}

std::string report_text(const EvalReport& report, const Comparison* comparison) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "overall      sessions=%zu buyers=%zu auc=%s\n",
                report.overall.count, report.overall.positives,
                format_auc(report.overall.auc).c_str());
  out << line << "\nAUC by session length\n";
  length_table(out, report.by_length, report.length_cap);
  std::snprintf(line, sizeof line, "\ndwelltime    sessions=%zu buyers=%zu auc=%s\n",
                report.dwelltime.count, report.dwelltime.positives,
                format_auc(report.dwelltime.auc).c_str());
  out << line;
  length_table(out, report.dwelltime_by_length, report.length_cap);
  std::snprintf(line, sizeof line, "\nprice high   sessions=%zu buyers=%zu auc=%s\n",
                report.price.high.count, report.price.high.positives,
                format_auc(report.price.high.auc).c_str());
  out << line;
  std::snprintf(line, sizeof line, "price low    sessions=%zu buyers=%zu auc=%s\n",
                report.price.low.count, report.price.low.positives,
                format_auc(report.price.low.auc).c_str());
  out << line;
  if (comparison) {
    std::snprintf(line, sizeof line, "\ncomparison   intersection=%zu ours=%s theirs=%s\n",
                  comparison->intersection, format_auc(comparison->ours_auc.auc).c_str(),
                  format_auc(comparison->theirs_auc.auc).c_str());
    out << line;
    std::snprintf(line, sizeof line, "  %-8s %10s %12s %12s\n", "length", "sessions", "ours", "theirs");
    out << line;
    for (const auto& [len, s] : comparison->ours_by_length) {
      const std::string key =
          len >= report.length_cap ? std::to_string(report.length_cap) + "+" : std::to_string(len);
      std::snprintf(line, sizeof line, "  %-8s %10zu %12s %12s\n", key.c_str(), s.count,
                    format_auc(s.auc).c_str(),
                    format_auc(comparison->theirs_by_length.at(len).auc).c_str());
      out << line;
    }
  }
  return out.str();
}

void write_roc_csv(std::ostream& out, std::span<const RocPoint> curve) {
  out << "fpr,tpr,threshold\n";
  char line[96];
  for (const auto& p : curve) {
    std::snprintf(line, sizeof line, "%.10g,%.10g,%.10g\n", p.fpr, p.tpr, p.threshold);
    out << line;
  }
}

void write_score_file(std::ostream& out, std::span<const ScoredSession> sessions) {
  out << "session_id,score\n";
  char line[64];
  for (const auto& s : sessions) {
    std::snprintf(line, sizeof line, "%lld,%.17g\n", static_cast<long long>(s.session_id), s.score);
    out << line;
  }
}

}  // namespace intentr
