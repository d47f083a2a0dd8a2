#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uvtdoa/montecarlo.hpp"

namespace uvtdoa::cli
{

/// Invalid configuration: syntax, unknown key, missing unit, or a value that
/// fails module validation. `line` is 0 when no single line is to blame.
class ConfigError : public std::runtime_error
{
public:
  ConfigError(const std::string& what, int line = 0) : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

// Unreadable input or unwritable output.
class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct ConfigSection
{
  std::string name;
  std::vector<std::pair<std::string, std::string>> entries; // key, value as written
};

/// Parsed INI configuration. Every physical quantity carries a unit suffix in
/// its key (e.g. `clock_hi_ns = 100`, `power_mw = 100`); values are converted
/// to SI on load. The raw entries are kept for serialization and hashing.
struct Config
{
  Scene scene;
  std::optional<GridSpec> grid;   // explicit bounds; otherwise the default inset grid
  double grid_inset_fraction = 0.10;
  int grid_steps_x = 9;
  int grid_steps_y = 9;
  std::vector<Point2> points;     // explicit receiver list; overrides the grid when non-empty
  LinkBudget budget;
  SignalParams signal;
  ClockModel clock;
  ClockDrawMode clock_mode = ClockDrawMode::per_frame;
  TheoryOptions theory;
  SolverOptions solver;
  int trials_per_point = 10;
  std::uint64_t seed = 1;
  int workers = 1;
  std::vector<double> sweep_powers_w{0.01, 0.03, 0.1, 0.3, 1.0};
  int diffcal_frames = 10;
  std::optional<double> replay_tolerance_m; // default: 2 c T_c
  double cluster_min_separation_m = 1.0;

  std::vector<ConfigSection> sections;
  std::string source = "<config>";

  /// Receiver points: the explicit list if given, else the grid.
  std::vector<Point2> receiver_points() const;
  double replay_tolerance() const;
};

Config parse_config(const std::string& text, const std::string& source_name = "<config>");
Config load_config(const std::string& path);

/// Canonical text: known sections in a fixed order, keys sorted, values as written.
/// parse_config(serialize_config(c)) has the same key set and values as c.
std::string serialize_config(const Config& config);

// FNV-1a 64-bit over the canonical text, as 16 hex digits.
std::string config_hash(const Config& config);

CampaignSpec campaign_spec(const Config& config);

} // namespace uvtdoa::cli
