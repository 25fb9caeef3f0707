#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace intentr {

using SessionId = std::int64_t;
using ItemId = std::int64_t;

/// Seconds since the Unix epoch, UTC. Sub-second precision is dropped.
using EpochSeconds = std::int64_t;

struct ClickEvent {
  SessionId session_id = 0;
  EpochSeconds timestamp = 0;
  ItemId item_id = 0;
  std::string category_id;

  friend bool operator==(const ClickEvent&, const ClickEvent&) = default;
};

/// A purchase. Price and quantity are frequently missing; a missing value is
/// kept as std::nullopt and never folded into 0.
struct BuyEvent {
  SessionId session_id = 0;
  EpochSeconds timestamp = 0;
  ItemId item_id = 0;
  std::optional<std::int64_t> price;
  std::optional<std::int64_t> quantity;

  friend bool operator==(const BuyEvent&, const BuyEvent&) = default;
};

enum class Label : std::uint8_t { kClicker = 0, kBuyer = 1 };

/// The classification unit: one anonymous user's clicks in time order.
/// `purchases` only feeds the label and per-item price statistics; the model
/// never sees it.
struct Session {
  SessionId id = 0;
  std::vector<ClickEvent> events;
  std::vector<BuyEvent> purchases;
  Label label = Label::kClicker;

  [[nodiscard]] bool is_buyer() const { return label == Label::kBuyer; }
};

struct Reject {
  std::string source;
  std::size_t line = 0;
  std::string reason;
};

/// Formats a reject as `<file>:<line>:<reason>`.
std::string format_reject(const Reject& reject);

struct ParseOptions {
  /// Parsing fails once rejects exceed this fraction of data lines. A single
  /// reject is always tolerated.
  double max_reject_fraction = 0.01;
  std::string source_name = "<stream>";
};

template <typename Event>
struct ParseResult {
  std::vector<Event> events;
  std::vector<Reject> rejects;
  std::size_t data_lines = 0;
};

/// Parses `2014-04-07T10:51:09.277Z` (fraction and trailing Z optional).
/// Returns nullopt for anything else.
std::optional<EpochSeconds> parse_iso8601(std::string_view text);

/// RecSys 2015 clicks: `SessionID,Timestamp,ItemID,Category`, no header.
ParseResult<ClickEvent> parse_recsys_clicks(std::istream& in,
                                            const ParseOptions& options = {});

/// RecSys 2015 buys: `SessionID,Timestamp,ItemID,Price,Quantity`, no header.
/// A 0 price or quantity means the value was not provided.
ParseResult<BuyEvent> parse_recsys_buys(std::istream& in,
                                        const ParseOptions& options = {});

struct RetailRocketOptions {
  ParseOptions parse;
  /// A visitor's events further apart than this start a new session.
  EpochSeconds session_gap_seconds = 30 * 60;
};

struct RetailRocketResult {
  std::vector<ClickEvent> clicks;
  std::vector<BuyEvent> buys;
  std::vector<Reject> rejects;
  std::size_t data_lines = 0;
  std::size_t dropped_addtocart = 0;
};

/// Retail Rocket `events.csv` (header `timestamp,visitorid,event,itemid,
/// transactionid`, millisecond timestamps). `view` rows become clicks,
/// `transaction` rows become buys without price, `addtocart` rows are
/// dropped. Visitors are cut into sessions on inactivity gaps; session ids
/// are assigned 1.. in (visitorid, start time) order.
RetailRocketResult parse_retailrocket(std::istream& in,
                                      const RetailRocketOptions& options = {});

struct AssembleResult {
  std::vector<Session> sessions;
  /// Buys whose session has no click.
  std::size_t orphan_buys = 0;
};

/// Groups clicks into sessions ordered by session id. Events within a session
/// are stably sorted by timestamp, so equal timestamps keep input order.
AssembleResult assemble_sessions(std::vector<ClickEvent> clicks,
                                 const std::vector<BuyEvent>& buys);

struct SplitSpec {
  double train_fraction = 0.9;
  double valid_fraction = 0.1;
  double test_fraction = 0.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument unless each fraction is in [0,1] and they
  /// sum to 1 within 1e-9.
  void validate() const;
};

enum class SplitPart : std::uint8_t { kTrain, kValid, kTest };

/// Pure function of (session id, seed).
SplitPart split_assignment(SessionId id, const SplitSpec& spec);

struct SplitSessions {
  std::vector<Session> train;
  std::vector<Session> valid;
  std::vector<Session> test;
};

SplitSessions split_sessions(std::vector<Session> sessions, const SplitSpec& spec);

}  // namespace intentr
