#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace uvtdoa::cli
{

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;    // bad configuration or arguments
inline constexpr int kExitNumerical = 3; // e.g. geometry singular at every point
inline constexpr int kExitIo = 4;        // unreadable input, unwritable output, empty log

struct CommandOptions
{
  std::string config_path;
  std::optional<std::uint64_t> seed; // overrides [campaign] seed
  std::string out_dir = ".";
  std::optional<int> workers; // overrides [campaign] workers
  std::string format = "csv"; // csv | json
  std::string log_path;         // replay, diffcal
  std::string calibration_path; // diffcal
  std::vector<double> powers_w; // sweep; empty: [campaign] sweep_powers
};

// Each command writes its files under out_dir, prints a summary to `out`,
// diagnostics to `err`, and returns an exit code.
int cmd_theory(const CommandOptions& opt, std::ostream& out, std::ostream& err);
int cmd_simulate(const CommandOptions& opt, std::ostream& out, std::ostream& err);
int cmd_sweep(const CommandOptions& opt, std::ostream& out, std::ostream& err);
int cmd_replay(const CommandOptions& opt, std::ostream& out, std::ostream& err);
int cmd_diffcal(const CommandOptions& opt, std::ostream& out, std::ostream& err);
int cmd_pilot(const CommandOptions& opt, std::ostream& out, std::ostream& err);

/// Command-line front end: `uvtdoa <theory|simulate|sweep|replay|diffcal|pilot> [flags]`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace uvtdoa::cli
