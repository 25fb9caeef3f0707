#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "intentr/error.hpp"
#include "intentr/evaluator.hpp"
#include "oracles.hpp"

using namespace intentr;

namespace {

struct Fixture {
  std::vector<double> scores;
  std::vector<int> labels;
};

Fixture random_fixture(std::mt19937_64& rng, std::size_t n, int levels) {
  Fixture f;
  std::uniform_int_distribution<int> level(0, levels - 1);
  for (std::size_t i = 0; i < n; ++i) {
    f.labels.push_back(static_cast<int>(rng() % 3 == 0));
    f.scores.push_back(static_cast<double>(level(rng)) / levels + 0.1 * f.labels.back());
  }
  f.labels[0] = 1;
  f.labels[1] = 0;
  return f;
}

ScoredSession scored(SessionId id, double score, bool buyer, std::size_t length,
                     std::size_t unrolled, std::optional<std::int64_t> price = {}) {
  return {id, score, buyer ? Label::kBuyer : Label::kClicker, length, unrolled, price};
}

std::vector<ScoredSession> mixed_sessions() {
  return {scored(1, 0.9, true, 1, 1, 12462), scored(2, 0.2, false, 1, 1, 500),
          scored(3, 0.7, true, 2, 4), scored(4, 0.8, false, 2, 2),
          scored(5, 0.3, false, 2, 5, 20000), scored(6, 0.6, true, 25, 30, 700),
          scored(7, 0.1, false, 22, 22)};
}

}  // namespace

TEST(Auc, SeparatedAndTied) {
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.1}, std::vector<int>{1, 1, 0}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1, 0}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.7, 0.3}, std::vector<int>{1, 0}), 1.0);
}

TEST(Auc, UndefinedWithoutBothClasses) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
  EXPECT_THROW(auc(std::vector<double>{}, std::vector<int>{}), UndefinedMetricError);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Fixture f = random_fixture(rng, 500, 2 + trial * 5);
    EXPECT_NEAR(auc(f.scores, f.labels), oracle::pairwise_auc(f.scores, f.labels), 1e-12);
  }
}

TEST(Auc, MonotoneTransformInvariant) {
  std::mt19937_64 rng(7);
  Fixture f = random_fixture(rng, 200, 30);
  for (std::size_t i = 0; i < f.scores.size(); ++i) f.scores[i] = std::round(f.scores[i] * 300.0);
  std::vector<double> transformed;
  for (double s : f.scores) transformed.push_back(std::exp(0.01 * s) - 4.0);
  EXPECT_EQ(auc(f.scores, f.labels), auc(transformed, f.labels));
}

TEST(Auc, DuplicatingNegativesLeavesTieFreeAucUnchanged) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  Fixture f;
  for (int i = 0; i < 60; ++i) {
    f.scores.push_back(u(rng));
    f.labels.push_back(i % 4 == 0);
  }
  Fixture g = f;
  for (std::size_t i = 0; i < f.scores.size(); ++i) {
    if (f.labels[i] == 0) {
      for (int k = 0; k < 3; ++k) {
        g.scores.push_back(f.scores[i]);
        g.labels.push_back(0);
      }
    }
  }
  EXPECT_EQ(auc(f.scores, f.labels), auc(g.scores, g.labels));
}

TEST(Roc, SeparatedScoresGiveThreeCorners) {
  const auto curve = roc_curve(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0});
  ASSERT_EQ(curve.size(), 3u);
  EXPECT_EQ(curve[0].fpr, 0.0);
  EXPECT_EQ(curve[0].tpr, 0.0);
  EXPECT_EQ(curve[1].fpr, 0.0);
  EXPECT_EQ(curve[1].tpr, 1.0);
  EXPECT_EQ(curve[2].fpr, 1.0);
  EXPECT_EQ(curve[2].tpr, 1.0);
}

TEST(Roc, MonotoneStaircaseAndAreaEqualsAuc) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Fixture f = random_fixture(rng, 300, 3 + trial * 7);
    const auto curve = roc_curve(f.scores, f.labels);
    for (std::size_t i = 1; i < curve.size(); ++i) {
      EXPECT_GE(curve[i].fpr, curve[i - 1].fpr);
      EXPECT_GE(curve[i].tpr, curve[i - 1].tpr);
      EXPECT_LT(curve[i].threshold, curve[i - 1].threshold);
    }
    EXPECT_EQ(curve.back().fpr, 1.0);
    EXPECT_EQ(curve.back().tpr, 1.0);
    EXPECT_NEAR(trapezoid_area(curve), auc(f.scores, f.labels), 1e-12);
  }
}

TEST(Subsets, ByLengthBucketsAndUndefinedMarker) {
  const auto by_len = auc_by_session_length(mixed_sessions(), 20);
  ASSERT_EQ(by_len.size(), 3u);
  EXPECT_EQ(by_len.at(1).count, 2u);
  EXPECT_EQ(by_len.at(1).auc, 1.0);
  EXPECT_EQ(by_len.at(2).count, 3u);
  EXPECT_EQ(by_len.at(2).positives, 1u);
  EXPECT_NEAR(*by_len.at(2).auc, oracle::pairwise_auc({0.7, 0.8, 0.3}, {1, 0, 0}), 1e-15);
  EXPECT_EQ(by_len.at(20).count, 2u);

  std::vector<ScoredSession> clickers{scored(1, 0.1, false, 3, 3), scored(2, 0.2, false, 3, 3)};
  const auto undefined = auc_by_session_length(clickers);
  EXPECT_FALSE(undefined.at(3).auc.has_value());
}

TEST(Subsets, DwelltimeKeepsUnrolledSessionsOnly) {
  const auto sessions = mixed_sessions();
  const auto dwell = dwelltime_subset(sessions);
  std::size_t brute = 0;
  for (const auto& s : sessions) brute += s.unrolled_length > s.original_length;
  EXPECT_EQ(dwell.size(), brute);
  for (const auto& s : dwell) EXPECT_GT(s.original_length, 1u);
}

TEST(Subsets, PriceBuckets) {
  const auto sessions = mixed_sessions();
  const auto buckets = price_buckets(sessions);
  EXPECT_EQ(buckets.high.count, 2u);
  EXPECT_EQ(buckets.low.count, 2u);
  EXPECT_EQ(buckets.high.positives, 1u);
  std::size_t high = 0;
  std::size_t low = 0;
  for (const auto& s : sessions) {
    if (!s.max_price) continue;
    high += *s.max_price > 10000;
    low += *s.max_price <= 750;
  }
  EXPECT_EQ(buckets.high.count, high);
  EXPECT_EQ(buckets.low.count, low);
}

TEST(Compare, IntersectionAndErrors) {
  const auto ours = mixed_sessions();
  std::unordered_map<SessionId, double> theirs;
  for (const auto& s : ours) theirs[s.session_id] = s.score;
  const Comparison same = compare_predictions(ours, theirs);
  EXPECT_EQ(same.intersection, ours.size());
  EXPECT_EQ(same.ours_auc.auc, same.theirs_auc.auc);

  std::unordered_map<SessionId, double> half{{1, 0.5}, {2, 0.1}, {4, 0.3}, {99, 0.2}};
  const Comparison partial = compare_predictions(ours, half);
  EXPECT_EQ(partial.intersection, 3u);
  EXPECT_EQ(partial.theirs, 4u);

  std::unordered_map<SessionId, double> disjoint{{100, 0.5}};
  try {
    compare_predictions(ours, disjoint);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty intersection"), std::string::npos);
  }
}

TEST(ScoreFile, RoundTrip) {
  std::ostringstream out;
  write_score_file(out, mixed_sessions());
  std::istringstream in(out.str());
  const auto scores = read_score_file(in);
  EXPECT_EQ(scores.size(), 7u);
  EXPECT_EQ(scores.at(3), 0.7);
}

TEST(Report, JsonAndTextAgreeToSixDecimals) {
  const auto sessions = mixed_sessions();
  const EvalReport report = evaluate(sessions);
  const auto j = nlohmann::json::parse(report_json(report));
  for (const char* key : {"overall", "by_session_length", "dwelltime", "price"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  char expect[64];
  std::snprintf(expect, sizeof expect, "auc=%.6f", j["overall"]["auc"].get<double>());
  EXPECT_NE(report_text(report).find(expect), std::string::npos);
  std::ostringstream roc;
  write_roc_csv(roc, report.roc);
  EXPECT_EQ(roc.str().rfind("fpr,tpr,threshold\n", 0), 0u);
}
