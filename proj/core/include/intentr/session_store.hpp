#pragma once

#include <span>
#include <string>
#include <vector>

#include "intentr/ingest.hpp"

namespace intentr {

/// Sessions are stored as a pair of RecSys-format files,
/// `<dir>/<name>.clicks.csv` and `<dir>/<name>.buys.csv`, so a prepared split
/// can be read back with the ordinary parsers.
void write_sessions(const std::string& dir, const std::string& name,
                    std::span<const Session> sessions);
std::vector<Session> read_sessions(const std::string& dir, const std::string& name);

/// Loads and assembles a RecSys clicks/buys pair. Rejects are appended to
/// `reject_log` when given.
std::vector<Session> load_recsys(const std::string& clicks_path, const std::string& buys_path,
                                 std::vector<Reject>* reject_log = nullptr,
                                 std::size_t* orphan_buys = nullptr);

std::vector<Session> load_retailrocket(const std::string& events_path,
                                       EpochSeconds session_gap_seconds,
                                       std::vector<Reject>* reject_log = nullptr,
                                       std::size_t* orphan_buys = nullptr);

/// FNV-1a 64 digest of a file as 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace intentr
