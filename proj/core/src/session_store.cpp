#include "intentr/session_store.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "intentr/error.hpp"
#include "intentr/synth.hpp"

namespace intentr {
namespace {

std::filesystem::path part_path(const std::string& dir, const std::string& name,
                                const char* suffix) {
  return std::filesystem::path(dir) / (name + suffix);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

ParseOptions options_for(const std::string& path) {
  ParseOptions options;
  options.source_name = path;
  return options;
}

void append_rejects(std::vector<Reject>* log, const std::vector<Reject>& rejects) {
  if (log) log->insert(log->end(), rejects.begin(), rejects.end());
}

}  // namespace

void write_sessions(const std::string& dir, const std::string& name,
                    std::span<const Session> sessions) {
  std::filesystem::create_directories(dir);
  const auto clicks_path = part_path(dir, name, ".clicks.csv");
  const auto buys_path = part_path(dir, name, ".buys.csv");
  std::ofstream clicks(clicks_path, std::ios::binary | std::ios::trunc);
  std::ofstream buys(buys_path, std::ios::binary | std::ios::trunc);
  if (!clicks) throw IoError("cannot write " + clicks_path.string());
  if (!buys) throw IoError("cannot write " + buys_path.string());
  for (const Session& s : sessions) {
    for (const ClickEvent& e : s.events) {
      clicks << e.session_id << ',' << format_iso8601(e.timestamp) << ',' << e.item_id << ','
             << e.category_id << '\n';
    }
    for (const BuyEvent& b : s.purchases) {
      buys << b.session_id << ',' << format_iso8601(b.timestamp) << ',' << b.item_id << ','
           << b.price.value_or(0) << ',' << b.quantity.value_or(0) << '\n';
    }
  }
  if (!clicks || !buys) throw IoError("failed writing sessions to " + dir);
}

std::vector<Session> read_sessions(const std::string& dir, const std::string& name) {
  return load_recsys(part_path(dir, name, ".clicks.csv").string(),
                     part_path(dir, name, ".buys.csv").string());
}

std::vector<Session> load_recsys(const std::string& clicks_path, const std::string& buys_path,
                                 std::vector<Reject>* reject_log, std::size_t* orphan_buys) {
  auto clicks_in = open_input(clicks_path);
  auto clicks = parse_recsys_clicks(clicks_in, options_for(clicks_path));
  auto buys_in = open_input(buys_path);
  auto buys = parse_recsys_buys(buys_in, options_for(buys_path));
  append_rejects(reject_log, clicks.rejects);
  append_rejects(reject_log, buys.rejects);
  auto assembled = assemble_sessions(std::move(clicks.events), buys.events);
  if (orphan_buys) *orphan_buys = assembled.orphan_buys;
  return std::move(assembled.sessions);
}

std::vector<Session> load_retailrocket(const std::string& events_path,
                                       EpochSeconds session_gap_seconds,
                                       std::vector<Reject>* reject_log,
                                       std::size_t* orphan_buys) {
  auto in = open_input(events_path);
  RetailRocketOptions options;
  options.parse = options_for(events_path);
  options.session_gap_seconds = session_gap_seconds;
  auto parsed = parse_retailrocket(in, options);
  append_rejects(reject_log, parsed.rejects);
  auto assembled = assemble_sessions(std::move(parsed.clicks), parsed.buys);
  if (orphan_buys) *orphan_buys = assembled.orphan_buys;
  return std::move(assembled.sessions);
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(hash));
  return out;
}

}  // namespace intentr
