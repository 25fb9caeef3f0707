#include "intentr/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "intentr/error.hpp"

namespace intentr {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename Int>
std::optional<Int> parse_int(std::string_view text) {
  Int value{};
  if (text.empty()) return std::nullopt;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

/// Reads lines, stripping '\r' and skipping blank ones. `fn` returns an empty
/// string on success or a reject reason.
template <typename Fn>
void for_each_line(std::istream& in, const ParseOptions& options, std::size_t& data_lines,
                   std::vector<Reject>& rejects, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++data_lines;
    std::string reason = fn(std::string_view(line), line_no);
    if (!reason.empty()) rejects.push_back({options.source_name, line_no, std::move(reason)});
  }
}

void enforce_reject_budget(const std::vector<Reject>& rejects, std::size_t data_lines,
                           const ParseOptions& options) {
  if (rejects.size() <= 1) return;
  const double allowed = options.max_reject_fraction * static_cast<double>(data_lines);
  if (static_cast<double>(rejects.size()) > allowed) {
    throw IoError(options.source_name + ": " + std::to_string(rejects.size()) + " of " +
                  std::to_string(data_lines) + " lines rejected; first: " +
                  format_reject(rejects.front()));
  }
}

}  // namespace

std::string format_reject(const Reject& reject) {
  return reject.source + ":" + std::to_string(reject.line) + ":" + reject.reason;
}

std::optional<EpochSeconds> parse_iso8601(std::string_view text) {
  // YYYY-MM-DDTHH:MM:SS[.fff][Z]
  if (text.size() < 19 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  const auto year = parse_int<int>(text.substr(0, 4));
  const auto month = parse_int<unsigned>(text.substr(5, 2));
  const auto day = parse_int<unsigned>(text.substr(8, 2));
  const auto hour = parse_int<int>(text.substr(11, 2));
  const auto minute = parse_int<int>(text.substr(14, 2));
  const auto second = parse_int<int>(text.substr(17, 2));
  if (!year || !month || !day || !hour || !minute || !second) return std::nullopt;

  std::string_view rest = text.substr(19);
  if (!rest.empty() && rest.front() == '.') {
    std::size_t digits = 1;
    while (digits < rest.size() && rest[digits] >= '0' && rest[digits] <= '9') ++digits;
    if (digits == 1) return std::nullopt;
    rest.remove_prefix(digits);
  }
  if (rest == "Z") rest.remove_prefix(1);
  if (!rest.empty()) return std::nullopt;

  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{*year}, std::chrono::month{*month},
                           std::chrono::day{*day}};
  if (!ymd.ok() || *hour > 23 || *minute > 59 || *second > 60) return std::nullopt;
  const auto days_since_epoch = sys_days{ymd}.time_since_epoch().count();
  return static_cast<EpochSeconds>(days_since_epoch) * 86400 + *hour * 3600 + *minute * 60 +
         *second;
}

ParseResult<ClickEvent> parse_recsys_clicks(std::istream& in, const ParseOptions& options) {
  ParseResult<ClickEvent> result;
  for_each_line(in, options, result.data_lines, result.rejects,
                [&](std::string_view line, std::size_t) -> std::string {
                  const auto fields = split_fields(line);
                  if (fields.size() != 4) {
                    return "expected 4 fields, got " + std::to_string(fields.size());
                  }
                  const auto session = parse_int<SessionId>(fields[0]);
                  if (!session) return "bad session id";
                  const auto ts = parse_iso8601(fields[1]);
                  if (!ts || *ts <= 0) return "bad timestamp";
                  const auto item = parse_int<ItemId>(fields[2]);
                  if (!item) return "bad item id";
                  if (fields[3].empty()) return "empty category";
                  result.events.push_back({*session, *ts, *item, std::string(fields[3])});
                  return {};
                });
  enforce_reject_budget(result.rejects, result.data_lines, options);
  return result;
}

ParseResult<BuyEvent> parse_recsys_buys(std::istream& in, const ParseOptions& options) {
  ParseResult<BuyEvent> result;
  for_each_line(in, options, result.data_lines, result.rejects,
                [&](std::string_view line, std::size_t) -> std::string {
                  const auto fields = split_fields(line);
                  if (fields.size() != 5) {
                    return "expected 5 fields, got " + std::to_string(fields.size());
                  }
                  const auto session = parse_int<SessionId>(fields[0]);
                  if (!session) return "bad session id";
                  const auto ts = parse_iso8601(fields[1]);
                  if (!ts || *ts <= 0) return "bad timestamp";
                  const auto item = parse_int<ItemId>(fields[2]);
                  if (!item) return "bad item id";
                  const auto price = parse_int<std::int64_t>(fields[3]);
                  const auto quantity = parse_int<std::int64_t>(fields[4]);
                  if (!price || *price < 0) return "bad price";
                  if (!quantity || *quantity < 0) return "bad quantity";
                  BuyEvent buy{*session, *ts, *item, std::nullopt, std::nullopt};
                  if (*price != 0) buy.price = *price;
                  if (*quantity != 0) buy.quantity = *quantity;
                  result.events.push_back(buy);
                  return {};
                });
  enforce_reject_budget(result.rejects, result.data_lines, options);
  return result;
}

RetailRocketResult parse_retailrocket(std::istream& in, const RetailRocketOptions& options) {
  struct Row {
    std::int64_t visitor;
    EpochSeconds timestamp;
    ItemId item;
    bool is_buy;
    std::size_t order;
  };
  RetailRocketResult result;
  std::vector<Row> rows;
  bool first = true;
  for_each_line(in, options.parse, result.data_lines, result.rejects,
                [&](std::string_view line, std::size_t) -> std::string {
                  if (first) {
                    first = false;
                    if (line.starts_with("timestamp")) {
                      --result.data_lines;
                      return {};
                    }
                  }
                  const auto fields = split_fields(line);
                  if (fields.size() != 5) {
                    return "expected 5 fields, got " + std::to_string(fields.size());
                  }
                  const auto millis = parse_int<std::int64_t>(fields[0]);
                  if (!millis || *millis <= 0) return "bad timestamp";
                  const auto visitor = parse_int<std::int64_t>(fields[1]);
                  if (!visitor) return "bad visitor id";
                  const auto item = parse_int<ItemId>(fields[3]);
                  if (!item) return "bad item id";
                  const std::string_view event = fields[2];
                  bool is_buy = false;
                  if (event == "view") {
                    is_buy = false;
                  } else if (event == "transaction") {
                    is_buy = true;
                  } else if (event == "addtocart") {
                    ++result.dropped_addtocart;
                    return {};
                  } else {
                    return "unknown event '" + std::string(event) + "'";
                  }
                  rows.push_back({*visitor, *millis / 1000, *item, is_buy, rows.size()});
                  return {};
                });
  enforce_reject_budget(result.rejects, result.data_lines, options.parse);

  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.visitor != b.visitor) return a.visitor < b.visitor;
    return a.timestamp < b.timestamp;
  });

  SessionId next_id = 0;
  std::int64_t current_visitor = 0;
  EpochSeconds last_seen = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& row = rows[i];
    const bool new_visitor = i == 0 || row.visitor != current_visitor;
    if (new_visitor || row.timestamp - last_seen > options.session_gap_seconds) ++next_id;
    current_visitor = row.visitor;
    last_seen = row.timestamp;
    if (row.is_buy) {
      result.buys.push_back({next_id, row.timestamp, row.item, std::nullopt, std::nullopt});
    } else {
      result.clicks.push_back({next_id, row.timestamp, row.item, "0"});
    }
  }
  return result;
}

AssembleResult assemble_sessions(std::vector<ClickEvent> clicks,
                                 const std::vector<BuyEvent>& buys) {
  std::stable_sort(clicks.begin(), clicks.end(), [](const ClickEvent& a, const ClickEvent& b) {
    if (a.session_id != b.session_id) return a.session_id < b.session_id;
    return a.timestamp < b.timestamp;
  });

  AssembleResult result;
  for (auto& click : clicks) {
    if (result.sessions.empty() || result.sessions.back().id != click.session_id) {
      Session session;
      session.id = click.session_id;
      result.sessions.push_back(std::move(session));
    }
    result.sessions.back().events.push_back(std::move(click));
  }

  for (const BuyEvent& buy : buys) {
    auto it = std::lower_bound(result.sessions.begin(), result.sessions.end(), buy.session_id,
                               [](const Session& s, SessionId id) { return s.id < id; });
    if (it == result.sessions.end() || it->id != buy.session_id) {
      ++result.orphan_buys;
      continue;
    }
    it->purchases.push_back(buy);
    it->label = Label::kBuyer;
  }
  return result;
}

void SplitSpec::validate() const {
  for (double f : {train_fraction, valid_fraction, test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("split fraction outside [0,1]");
  }
  if (std::abs(train_fraction + valid_fraction + test_fraction - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
}

SplitPart split_assignment(SessionId id, const SplitSpec& spec) {
  // splitmix64 finalizer over the id keyed by the seed
  std::uint64_t z = static_cast<std::uint64_t>(id) + spec.seed * 0x9E3779B97F4A7C15ULL +
                    0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  z ^= z >> 31;
  const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
  if (u < spec.train_fraction) return SplitPart::kTrain;
  if (u < spec.train_fraction + spec.valid_fraction) return SplitPart::kValid;
  // guard against rounding leaving a few sessions in an empty test part
  if (spec.test_fraction == 0.0) {
    return spec.valid_fraction > 0.0 ? SplitPart::kValid : SplitPart::kTrain;
  }
  return SplitPart::kTest;
}

SplitSessions split_sessions(std::vector<Session> sessions, const SplitSpec& spec) {
  spec.validate();
  SplitSessions out;
  for (auto& session : sessions) {
    switch (split_assignment(session.id, spec)) {
      case SplitPart::kTrain: out.train.push_back(std::move(session)); break;
      case SplitPart::kValid: out.valid.push_back(std::move(session)); break;
      case SplitPart::kTest: out.test.push_back(std::move(session)); break;
    }
  }
  return out;
}

}  // namespace intentr
