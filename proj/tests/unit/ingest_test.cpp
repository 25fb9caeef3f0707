#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "intentr/error.hpp"
#include "intentr/ingest.hpp"

using namespace intentr;

namespace {

ParseResult<ClickEvent> clicks_from(const std::string& text) {
  std::istringstream in(text);
  return parse_recsys_clicks(in);
}

ParseResult<BuyEvent> buys_from(const std::string& text) {
  std::istringstream in(text);
  return parse_recsys_buys(in);
}

RetailRocketResult rr_from(const std::string& text) {
  std::istringstream in(text);
  return parse_retailrocket(in);
}

std::vector<Session> sessions_with_ids(std::size_t n) {
  std::vector<Session> out;
  for (std::size_t i = 1; i <= n; ++i) {
    Session s;
    s.id = static_cast<SessionId>(i);
    s.events.push_back({s.id, 1000, 1, "c"});
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Iso8601, ParsesWithFractionAndZulu) {
  EXPECT_EQ(parse_iso8601("2014-04-07T10:51:09.277Z"), 1396867869);
  EXPECT_EQ(parse_iso8601("2014-04-07T10:51:09Z"), 1396867869);
  EXPECT_EQ(parse_iso8601("2014-04-07T10:51:09"), 1396867869);
  EXPECT_EQ(parse_iso8601("1970-01-01T00:00:00Z"), 0);
}

TEST(Iso8601, RejectsMalformed) {
  EXPECT_FALSE(parse_iso8601(""));
  EXPECT_FALSE(parse_iso8601("2014-13-07T10:51:09Z"));
  EXPECT_FALSE(parse_iso8601("2014-02-30T10:51:09Z"));
  EXPECT_FALSE(parse_iso8601("2014-04-07 10:51:09Z"));
  EXPECT_FALSE(parse_iso8601("2014-04-07T10:51:09.Z"));
  EXPECT_FALSE(parse_iso8601("2014-04-07T10:51:09Zjunk"));
}

TEST(RecsysClicks, ParsesExampleLine) {
  const auto r = clicks_from("1,2014-04-07T10:51:09.277Z,214536502,0\n");
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0], (ClickEvent{1, 1396867869, 214536502, "0"}));
  EXPECT_TRUE(r.rejects.empty());
}

TEST(RecsysClicks, EmptyInput) {
  const auto r = clicks_from("");
  EXPECT_TRUE(r.events.empty());
  EXPECT_EQ(r.data_lines, 0u);
}

TEST(RecsysClicks, CorruptRowIsRejectedWithLineNumber) {
  const auto r = clicks_from(
      "1,2014-04-07T10:51:09.277Z,214536502,0\n"
      "1,2014-04-07T10:54:09.868Z,214536500\n"
      "1,2014-04-07T10:54:46.998Z,214536506,0\n");
  EXPECT_EQ(r.events.size(), 2u);
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rejects[0].line, 2u);
  EXPECT_EQ(r.data_lines, 3u);
  EXPECT_NE(format_reject(r.rejects[0]).find(":2:"), std::string::npos);
}

TEST(RecsysClicks, TooManyRejectsIsFatal) {
  std::string text;
  for (int i = 0; i < 50; ++i) text += "1,2014-04-07T10:51:09.277Z,214536502,0\n";
  text += "bad\nbad\n";
  EXPECT_THROW(clicks_from(text), Error);
}

TEST(RecsysClicks, CrlfLineEndingsAccepted) {
  const auto r = clicks_from("1,2014-04-07T10:51:09.277Z,214536502,0\r\n");
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].category_id, "0");
}

TEST(RecsysBuys, PricedRow) {
  const auto r = buys_from("420374,2014-04-06T18:44:58.314Z,214537888,12462,1\n");
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].session_id, 420374);
  EXPECT_EQ(r.events[0].item_id, 214537888);
  EXPECT_EQ(r.events[0].price, 12462);
  EXPECT_EQ(r.events[0].quantity, 1);
}

TEST(RecsysBuys, ZeroMeansAbsent) {
  const auto r = buys_from("420374,2014-04-06T18:44:58.314Z,214537888,0,0\n");
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_FALSE(r.events[0].price.has_value());
  EXPECT_FALSE(r.events[0].quantity.has_value());
}

TEST(RecsysBuys, FixtureCountsPricedAndAbsent) {
  const auto r = buys_from(
      "1,2014-04-06T18:44:58.314Z,1,100,1\n"
      "2,2014-04-06T18:44:58.314Z,2,0,0\n"
      "3,2014-04-06T18:44:58.314Z,3,250,2\n"
      "4,2014-04-06T18:44:58.314Z,4,0,0\n"
      "5,2014-04-06T18:44:58.314Z,5,990,1\n");
  std::size_t priced = 0;
  std::size_t absent = 0;
  for (const auto& b : r.events) (b.price ? priced : absent)++;
  EXPECT_EQ(priced, 3u);
  EXPECT_EQ(absent, 2u);
}

TEST(RetailRocket, SingleView) {
  const auto r = rr_from(
      "timestamp,visitorid,event,itemid,transactionid\n"
      "1433221332117,257597,view,355908,\n");
  EXPECT_EQ(r.clicks.size(), 1u);
  EXPECT_EQ(r.buys.size(), 0u);
  EXPECT_EQ(r.clicks[0].timestamp, 1433221332);
  EXPECT_EQ(r.clicks[0].item_id, 355908);
}

TEST(RetailRocket, AddToCartDropped) {
  const auto r = rr_from(
      "timestamp,visitorid,event,itemid,transactionid\n"
      "1433221332117,7,view,1,\n"
      "1433221342117,7,addtocart,1,\n"
      "1433221352117,7,transaction,1,4000\n");
  EXPECT_EQ(r.clicks.size(), 1u);
  ASSERT_EQ(r.buys.size(), 1u);
  EXPECT_EQ(r.dropped_addtocart, 1u);
  EXPECT_FALSE(r.buys[0].price.has_value());
  EXPECT_EQ(r.buys[0].session_id, r.clicks[0].session_id);
}

TEST(RetailRocket, GapSplitsSessions) {
  const auto r = rr_from(
      "timestamp,visitorid,event,itemid,transactionid\n"
      "1433221332000,7,view,1,\n"
      "1433224032000,7,view,2,\n");
  ASSERT_EQ(r.clicks.size(), 2u);
  EXPECT_NE(r.clicks[0].session_id, r.clicks[1].session_id);
}

TEST(RetailRocket, UnknownEventRejected) {
  const auto r = rr_from(
      "timestamp,visitorid,event,itemid,transactionid\n"
      "1433221332000,7,view,1,\n"
      "1433221332000,7,wishlist,1,\n");
  EXPECT_EQ(r.clicks.size(), 1u);
  EXPECT_EQ(r.rejects.size(), 1u);
}

TEST(Assemble, BuyerSession) {
  std::vector<ClickEvent> clicks{{1, 10, 100, "a"}, {1, 20, 101, "a"}};
  std::vector<BuyEvent> buys{{1, 30, 100, 500, 1}};
  const auto r = assemble_sessions(clicks, buys);
  ASSERT_EQ(r.sessions.size(), 1u);
  EXPECT_EQ(r.sessions[0].label, Label::kBuyer);
  EXPECT_EQ(r.sessions[0].events.size(), 2u);
  EXPECT_EQ(r.sessions[0].purchases.size(), 1u);
}

TEST(Assemble, ClickerSession) {
  const auto r = assemble_sessions({{2, 10, 100, "a"}}, {});
  ASSERT_EQ(r.sessions.size(), 1u);
  EXPECT_EQ(r.sessions[0].label, Label::kClicker);
}

TEST(Assemble, BuyerRateOverFixture) {
  std::vector<ClickEvent> clicks;
  for (SessionId s = 1; s <= 10; ++s) clicks.push_back({s, 10, 1, "a"});
  std::vector<BuyEvent> buys{{2, 20, 1, {}, {}}, {5, 20, 1, {}, {}}, {9, 20, 1, {}, {}}};
  const auto r = assemble_sessions(clicks, buys);
  std::size_t buyers = 0;
  for (const auto& s : r.sessions) buyers += s.is_buyer();
  EXPECT_EQ(buyers, 3u);
  EXPECT_EQ(r.sessions.size(), 10u);
}

TEST(Assemble, OrphanBuysCounted) {
  const auto r = assemble_sessions({{1, 10, 1, "a"}}, {{2, 20, 1, {}, {}}});
  EXPECT_EQ(r.orphan_buys, 1u);
  EXPECT_EQ(r.sessions.size(), 1u);
}

TEST(Assemble, StableTimeOrderAndFixedPoint) {
  std::vector<ClickEvent> clicks{{3, 30, 1, "a"}, {1, 20, 2, "a"}, {1, 10, 3, "a"},
                                 {1, 10, 4, "a"}, {3, 5, 5, "a"}};
  const auto r = assemble_sessions(clicks, {});
  ASSERT_EQ(r.sessions.size(), 2u);
  EXPECT_EQ(r.sessions[0].id, 1);
  EXPECT_EQ(r.sessions[0].events[0].item_id, 3);
  EXPECT_EQ(r.sessions[0].events[1].item_id, 4);
  EXPECT_EQ(r.sessions[0].events[2].item_id, 2);
  EXPECT_EQ(r.sessions[1].events[0].item_id, 5);

  std::vector<ClickEvent> flat;
  for (const auto& s : r.sessions) flat.insert(flat.end(), s.events.begin(), s.events.end());
  const auto again = assemble_sessions(flat, {});
  ASSERT_EQ(again.sessions.size(), r.sessions.size());
  for (std::size_t i = 0; i < r.sessions.size(); ++i) {
    EXPECT_EQ(again.sessions[i].events, r.sessions[i].events);
  }
  EXPECT_EQ(flat.size(), clicks.size());
}

TEST(Split, NinetyTenSizesAndDisjoint) {
  SplitSpec spec;
  spec.seed = 7;
  const auto split = split_sessions(sessions_with_ids(1000), spec);
  EXPECT_NEAR(static_cast<double>(split.train.size()), 900.0, 30.0);
  EXPECT_NEAR(static_cast<double>(split.valid.size()), 100.0, 30.0);
  EXPECT_TRUE(split.test.empty());
  std::set<SessionId> seen;
  for (const auto* part : {&split.train, &split.valid}) {
    for (const auto& s : *part) EXPECT_TRUE(seen.insert(s.id).second);
  }
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Split, AllTrain) {
  SplitSpec spec{1.0, 0.0, 0.0, 3};
  const auto split = split_sessions(sessions_with_ids(100), spec);
  EXPECT_EQ(split.train.size(), 100u);
  EXPECT_TRUE(split.valid.empty());
}

TEST(Split, Deterministic) {
  SplitSpec spec{0.6, 0.2, 0.2, 11};
  const auto a = split_sessions(sessions_with_ids(300), spec);
  const auto b = split_sessions(sessions_with_ids(300), spec);
  ASSERT_EQ(a.valid.size(), b.valid.size());
  for (std::size_t i = 0; i < a.valid.size(); ++i) EXPECT_EQ(a.valid[i].id, b.valid[i].id);
  for (SessionId id = 1; id <= 300; ++id) {
    EXPECT_EQ(split_assignment(id, spec), split_assignment(id, spec));
  }
}

TEST(Split, InvalidFractionsRejected) {
  EXPECT_THROW((SplitSpec{0.5, 0.4, 0.0, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((SplitSpec{1.2, -0.2, 0.0, 0}.validate()), std::invalid_argument);
}
