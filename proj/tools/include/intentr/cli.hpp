#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "intentr/model.hpp"
#include "intentr/nn.hpp"
#include "intentr/trainer.hpp"

namespace intentr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitUndefinedMetric = 2;
inline constexpr int kExitCheckFailed = 3;
inline constexpr int kExitUsage = 64;

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct GradcheckArgs {
  std::string cell = "lstm";
  int layers = 1;
  int hidden = 8;
  int embed = 12;
  std::vector<std::size_t> lengths{1, 2, 5, 2};
  double tolerance = 1e-4;
  double step = 1e-5;
  bool corrupt = false;
  bool skip = true;
  bool share = true;
  std::uint64_t seed = 1;
};

/// Builds the random model and batch described by `args` and checks its
/// gradients against central differences.
GradCheckReport run_gradcheck(const GradcheckArgs& args);

/// Parses `cells=rnn,gru layers=1,2 hidden=64,128`; omitted keys keep the
/// defaults. Throws std::invalid_argument on malformed input.
GridSpec parse_grid_spec(const std::string& text);

/// Reads `key = value` lines; `#` starts a comment and `[section]` headers
/// are ignored.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

}  // namespace intentr::cli
