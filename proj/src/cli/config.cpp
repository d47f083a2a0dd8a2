#include "uvtdoa/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "uvtdoa/sync.hpp"

namespace uvtdoa::cli
{

namespace
{

enum class Quantity
{
  none,
  length,
  time,
  power,
  frequency,
  angle,
  area,
  speed,
  rate,
};

enum class Kind
{
  real,
  integer,
  uint64,
  text,
  real_list,
  point_list,
};

struct Unit
{
  const char* suffix;
  double scale; // to SI
};

constexpr Unit kLength[] = {{"m", 1.0}, {"km", 1e3}, {"cm", 1e-2}, {"mm", 1e-3}, {"um", 1e-6}, {"nm", 1e-9}};
constexpr Unit kTime[] = {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}};
constexpr Unit kPower[] = {{"w", 1.0}, {"mw", 1e-3}, {"kw", 1e3}};
constexpr Unit kFrequency[] = {{"hz", 1.0}, {"khz", 1e3}, {"mhz", 1e6}, {"ghz", 1e9}};
constexpr Unit kAngle[] = {{"rad", 1.0}, {"deg", M_PI / 180.0}};
constexpr Unit kArea[] = {{"m2", 1.0}, {"cm2", 1e-4}, {"mm2", 1e-6}};
constexpr Unit kSpeed[] = {{"m_per_s", 1.0}};
constexpr Unit kRate[] = {{"per_symbol", 1.0}};

std::span<const Unit> units_of(Quantity q)
{
  switch (q)
  {
  case Quantity::length: return kLength;
  case Quantity::time: return kTime;
  case Quantity::power: return kPower;
  case Quantity::frequency: return kFrequency;
  case Quantity::angle: return kAngle;
  case Quantity::area: return kArea;
  case Quantity::speed: return kSpeed;
  case Quantity::rate: return kRate;
  case Quantity::none: break;
  }
  return {};
}

struct KeySpec
{
  const char* section;
  const char* base;
  Quantity quantity;
  Kind kind;
};

// Canonical section order doubles as the serialization order.
constexpr const char* kSections[] = {"scene", "grid", "budget", "signal", "clock", "theory", "solver", "campaign", "replay"};

constexpr KeySpec kKeys[] = {
    {"scene", "a_x", Quantity::length, Kind::real},
    {"scene", "a_y", Quantity::length, Kind::real},
    {"scene", "b_x", Quantity::length, Kind::real},
    {"scene", "b_y", Quantity::length, Kind::real},
    {"scene", "c_x", Quantity::length, Kind::real},
    {"scene", "c_y", Quantity::length, Kind::real},
    {"scene", "rx_x", Quantity::length, Kind::real},
    {"scene", "rx_y", Quantity::length, Kind::real},
    {"scene", "speed_of_light", Quantity::speed, Kind::real},
    {"grid", "x_min", Quantity::length, Kind::real},
    {"grid", "x_max", Quantity::length, Kind::real},
    {"grid", "y_min", Quantity::length, Kind::real},
    {"grid", "y_max", Quantity::length, Kind::real},
    {"grid", "steps_x", Quantity::none, Kind::integer},
    {"grid", "steps_y", Quantity::none, Kind::integer},
    {"grid", "inset_fraction", Quantity::none, Kind::real},
    {"grid", "points", Quantity::length, Kind::point_list},
    {"budget", "power", Quantity::power, Kind::real},
    {"budget", "rx_area", Quantity::area, Kind::real},
    {"budget", "divergence", Quantity::angle, Kind::real},
    {"budget", "wavelength", Quantity::length, Kind::real},
    {"budget", "detector_efficiency", Quantity::none, Kind::real},
    {"budget", "lambda_b", Quantity::rate, Kind::real},
    {"budget", "lambda_clip", Quantity::rate, Kind::real},
    {"signal", "sequence_length", Quantity::none, Kind::integer},
    {"signal", "sequence_seed", Quantity::none, Kind::uint64},
    {"signal", "sequence", Quantity::none, Kind::text},
    {"signal", "symbol_rate", Quantity::frequency, Kind::real},
    {"signal", "chips_per_symbol", Quantity::none, Kind::integer},
    {"signal", "slot_interval", Quantity::time, Kind::real},
    {"signal", "guard_chips", Quantity::none, Kind::integer},
    {"clock", "model", Quantity::none, Kind::text},
    {"clock", "clock_lo", Quantity::time, Kind::real},
    {"clock", "clock_hi", Quantity::time, Kind::real},
    {"clock", "draw_mode", Quantity::none, Kind::text},
    {"theory", "m_max", Quantity::none, Kind::integer},
    {"theory", "quadrature_points", Quantity::none, Kind::integer},
    {"solver", "step_tolerance", Quantity::length, Kind::real},
    {"solver", "residual_tolerance", Quantity::length, Kind::real},
    {"solver", "max_iterations", Quantity::none, Kind::integer},
    {"solver", "multistart_grid", Quantity::none, Kind::integer},
    {"solver", "search_radius_factor", Quantity::none, Kind::real},
    {"campaign", "trials_per_point", Quantity::none, Kind::integer},
    {"campaign", "seed", Quantity::none, Kind::uint64},
    {"campaign", "workers", Quantity::none, Kind::integer},
    {"campaign", "sweep_powers", Quantity::power, Kind::real_list},
    {"campaign", "diffcal_frames", Quantity::none, Kind::integer},
    {"replay", "tolerance", Quantity::length, Kind::real},
    {"replay", "cluster_min_separation", Quantity::length, Kind::real},
};

struct Value
{
  double real = 0.0;
  long long integer = 0;
  std::uint64_t u64 = 0;
  std::string text;
  std::vector<double> list;
  std::vector<Point2> points;
  int line = 0;
};

std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// "section.key" (and "[section]" for headers) -> 1-based line number, for diagnostics.
std::map<std::string, int> key_lines(const std::string& text)
{
  std::map<std::string, int> out;
  std::istringstream is(text);
  std::string line, section;
  for (int n = 1; std::getline(is, line); ++n)
  {
    const std::string t = trim(line);
    if (t.empty() || t[0] == ';' || t[0] == '#')
      continue;
    if (t.front() == '[' && t.back() == ']')
    {
      section = trim(t.substr(1, t.size() - 2));
      out.emplace("[" + section + "]", n);
      continue;
    }
    const auto eq = t.find('=');
    if (eq != std::string::npos)
      out.emplace(section + "." + trim(t.substr(0, eq)), n);
  }
  return out;
}

std::string where(const std::string& source, int line, const std::string& section, const std::string& key)
{
  std::string s = source;
  if (line > 0)
    s += ":" + std::to_string(line);
  s += ": [" + section + "] " + key;
  return s;
}

double parse_real(const std::string& raw, const std::string& ctx, int line)
{
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(ctx + ": expected a number, got '" + raw + "'", line);
  return v;
}

template <typename Int>
Int parse_int(const std::string& raw, const std::string& ctx, int line)
{
  const std::string s = trim(raw);
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
    throw ConfigError(ctx + ": expected an integer, got '" + raw + "'", line);
  return v;
}

std::vector<std::string> split(const std::string& s, char sep)
{
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep))
    out.push_back(item);
  return out;
}

// Resolves a written key to its spec and unit scale.
const KeySpec* resolve_key(const std::string& section, const std::string& key, double& scale, std::string& base,
                           const std::string& ctx, int line)
{
  for (const KeySpec& spec : kKeys)
  {
    if (section != spec.section)
      continue;
    const std::string b = spec.base;
    if (spec.quantity == Quantity::none)
    {
      if (key == b)
      {
        scale = 1.0;
        base = b;
        return &spec;
      }
      continue;
    }
    if (key == b)
    {
      std::string allowed;
      for (const Unit& u : units_of(spec.quantity))
        allowed += (allowed.empty() ? "" : ", ") + b + "_" + u.suffix;
      throw ConfigError(ctx + ": missing unit suffix (use one of " + allowed + ")", line);
    }
    for (const Unit& u : units_of(spec.quantity))
      if (key == b + "_" + u.suffix)
      {
        scale = u.scale;
        base = b;
        return &spec;
      }
  }
  return nullptr;
}

Value parse_value(const KeySpec& spec, const std::string& raw, double scale, const std::string& ctx, int line)
{
  Value v;
  v.line = line;
  switch (spec.kind)
  {
  case Kind::real: v.real = parse_real(raw, ctx, line) * scale; break;
  case Kind::integer: v.integer = parse_int<long long>(raw, ctx, line); break;
  case Kind::uint64: v.u64 = parse_int<std::uint64_t>(raw, ctx, line); break;
  case Kind::text: v.text = trim(raw); break;
  case Kind::real_list:
    for (const std::string& item : split(raw, ','))
      v.list.push_back(parse_real(item, ctx, line) * scale);
    if (v.list.empty())
      throw ConfigError(ctx + ": empty list", line);
    break;
  case Kind::point_list:
    for (const std::string& item : split(raw, ';'))
    {
      if (trim(item).empty())
        continue;
      const auto xy = split(item, ',');
      if (xy.size() != 2)
        throw ConfigError(ctx + ": points are written 'x, y; x, y; ...'", line);
      v.points.emplace_back(parse_real(xy[0], ctx, line) * scale, parse_real(xy[1], ctx, line) * scale);
    }
    if (v.points.empty())
      throw ConfigError(ctx + ": empty point list", line);
    break;
  }
  return v;
}

int checked_int(long long v, long long lo, const std::string& name, int line)
{
  if (v < lo || v > 100000000)
    throw ConfigError(name + " must be in [" + std::to_string(lo) + ", 1e8]", line);
  return static_cast<int>(v);
}

} // namespace

std::vector<Point2> Config::receiver_points() const
{
  if (!points.empty())
    return points;
  if (grid)
    return grid->points();
  return default_grid(scene, grid_steps_x, grid_steps_y, grid_inset_fraction).points();
}

double Config::replay_tolerance() const
{
  return replay_tolerance_m.value_or(feasibility_tolerance(scene.c, signal.chip_duration()));
}

Config parse_config(const std::string& text, const std::string& source_name)
{
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try
  {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, tree);
  }
  catch (const pt::ini_parser_error& e)
  {
    throw ConfigError(source_name + ":" + std::to_string(e.line()) + ": " + e.message(), static_cast<int>(e.line()));
  }

  const auto lines = key_lines(text);
  Config cfg;
  cfg.source = source_name;
  std::map<std::string, Value> values; // "section.base"

  for (const auto& [section, body] : tree)
  {
    if (body.empty())
    {
      // Either a key outside any section or an empty section.
      const auto top = lines.find("." + section);
      if (top != lines.end())
        throw ConfigError(source_name + ":" + std::to_string(top->second) + ": key '" + section +
                              "' is outside any [section]",
                          top->second);
    }
    if (std::find(std::begin(kSections), std::end(kSections), section) == std::end(kSections))
    {
      const auto at = lines.find("[" + section + "]");
      const int line = at == lines.end() ? 0 : at->second;
      throw ConfigError(source_name + ":" + std::to_string(line) + ": unknown section [" + section + "]", line);
    }
    ConfigSection sec{section, {}};
    for (const auto& [key, node] : body)
    {
      const std::string raw = node.get_value<std::string>();
      const auto it = lines.find(section + "." + key);
      const int line = it == lines.end() ? 0 : it->second;
      const std::string ctx = where(source_name, line, section, key);
      if (!node.empty())
        throw ConfigError(ctx + ": nested keys are not supported", line);
      double scale = 1.0;
      std::string base;
      const KeySpec* spec = resolve_key(section, key, scale, base, ctx, line);
      if (spec == nullptr)
        throw ConfigError(ctx + ": unknown key", line);
      const std::string id = section + "." + base;
      if (values.count(id))
        throw ConfigError(ctx + ": '" + base + "' is given more than once (in different units?)", line);
      values.emplace(id, parse_value(*spec, raw, scale, ctx, line));
      sec.entries.emplace_back(key, trim(raw));
    }
    cfg.sections.push_back(std::move(sec));
  }

  auto get = [&](const char* id) -> const Value* {
    const auto it = values.find(id);
    return it == values.end() ? nullptr : &it->second;
  };
  auto real_or = [&](const char* id, double fallback) { const Value* v = get(id); return v ? v->real : fallback; };
  auto int_or = [&](const char* id, int fallback, long long lo) {
    const Value* v = get(id);
    return v ? checked_int(v->integer, lo, id, v->line) : fallback;
  };

  // [scene]
  for (const char* id : {"scene.a_x", "scene.a_y", "scene.b_x", "scene.b_y", "scene.c_x", "scene.c_y"})
    if (!get(id))
      throw ConfigError(source_name + ": [scene] requires anchors a_x/a_y, b_x/b_y, c_x/c_y (with unit suffix, e.g. a_x_m)");
  const Point2 a(real_or("scene.a_x", 0), real_or("scene.a_y", 0));
  const Point2 b(real_or("scene.b_x", 0), real_or("scene.b_y", 0));
  const Point2 c(real_or("scene.c_x", 0), real_or("scene.c_y", 0));
  if (static_cast<bool>(get("scene.rx_x")) != static_cast<bool>(get("scene.rx_y")))
    throw ConfigError(source_name + ": [scene] rx_x and rx_y must be given together");
  const Point2 rx = get("scene.rx_x") ? Point2(real_or("scene.rx_x", 0), real_or("scene.rx_y", 0)) : (a + b + c) / 3.0;
  try
  {
    cfg.scene = make_scene(a, b, c, rx, real_or("scene.speed_of_light", kSpeedOfLight));
  }
  catch (const std::invalid_argument& e)
  {
    throw ConfigError(source_name + ": [scene] " + e.what());
  }

  // [grid]
  cfg.grid_steps_x = int_or("grid.steps_x", 9, 1);
  cfg.grid_steps_y = int_or("grid.steps_y", 9, 1);
  cfg.grid_inset_fraction = real_or("grid.inset_fraction", 0.10);
  if (!(cfg.grid_inset_fraction >= 0.0 && cfg.grid_inset_fraction < 0.5))
    throw ConfigError(source_name + ": [grid] inset_fraction must lie in [0, 0.5)");
  const int bounds = (get("grid.x_min") ? 1 : 0) + (get("grid.x_max") ? 1 : 0) + (get("grid.y_min") ? 1 : 0) +
                     (get("grid.y_max") ? 1 : 0);
  if (bounds != 0 && bounds != 4)
    throw ConfigError(source_name + ": [grid] give all of x_min, x_max, y_min, y_max or none");
  if (bounds == 4)
  {
    GridSpec g;
    g.x_min = real_or("grid.x_min", 0);
    g.x_max = real_or("grid.x_max", 0);
    g.y_min = real_or("grid.y_min", 0);
    g.y_max = real_or("grid.y_max", 0);
    g.steps_x = cfg.grid_steps_x;
    g.steps_y = cfg.grid_steps_y;
    try
    {
      g.validate();
    }
    catch (const std::invalid_argument& e)
    {
      throw ConfigError(source_name + ": [grid] " + e.what());
    }
    cfg.grid = g;
  }
  if (const Value* v = get("grid.points"))
    cfg.points = v->points;

  // [budget]
  cfg.budget.power_w = real_or("budget.power", cfg.budget.power_w);
  cfg.budget.rx_area_m2 = real_or("budget.rx_area", cfg.budget.rx_area_m2);
  cfg.budget.divergence_full_angle_rad = real_or("budget.divergence", cfg.budget.divergence_full_angle_rad);
  cfg.budget.wavelength_m = real_or("budget.wavelength", cfg.budget.wavelength_m);
  cfg.budget.detector_efficiency = real_or("budget.detector_efficiency", cfg.budget.detector_efficiency);
  cfg.budget.lambda_b = real_or("budget.lambda_b", cfg.budget.lambda_b);
  cfg.budget.lambda_clip = real_or("budget.lambda_clip", cfg.budget.lambda_clip);
  try
  {
    cfg.budget.validate();
  }
  catch (const std::invalid_argument& e)
  {
    throw ConfigError(source_name + ": [budget] " + e.what());
  }

  // [signal]
  if (const Value* v = get("signal.sequence"))
  {
    if (get("signal.sequence_length") || get("signal.sequence_seed"))
      throw ConfigError(source_name + ": [signal] give either sequence or sequence_length/sequence_seed", v->line);
    try
    {
      cfg.signal.sequence = pilot_from_text(v->text);
    }
    catch (const std::invalid_argument& e)
    {
      throw ConfigError(source_name + ": [signal] sequence: " + e.what(), v->line);
    }
  }
  else
  {
    const int len = int_or("signal.sequence_length", 256, 2);
    const Value* seed = get("signal.sequence_seed");
    try
    {
      cfg.signal.sequence = generate_pilot(static_cast<std::size_t>(len), seed ? seed->u64 : 1);
    }
    catch (const std::exception& e)
    {
      throw ConfigError(source_name + ": [signal] " + e.what());
    }
  }
  cfg.signal.symbol_rate_hz = real_or("signal.symbol_rate", cfg.signal.symbol_rate_hz);
  cfg.signal.chips_per_symbol = int_or("signal.chips_per_symbol", cfg.signal.chips_per_symbol, 1);
  cfg.signal.slot_interval_s = real_or("signal.slot_interval", cfg.signal.slot_interval_s);
  if (get("signal.guard_chips"))
    cfg.signal.guard_chips = int_or("signal.guard_chips", 0, 1);
  try
  {
    cfg.signal.validate();
  }
  catch (const std::invalid_argument& e)
  {
    throw ConfigError(source_name + ": [signal] " + e.what());
  }

  // [clock]
  const Value* model = get("clock.model");
  const std::string model_name = model ? model->text : (get("clock.clock_hi") ? "uniform" : "degenerate");
  if (model_name == "uniform")
  {
    if (!get("clock.clock_hi"))
      throw ConfigError(source_name + ": [clock] uniform model needs clock_hi (e.g. clock_hi_ns = 100)");
    try
    {
      cfg.clock = ClockModel::uniform(real_or("clock.clock_lo", 0.0), real_or("clock.clock_hi", 0.0));
    }
    catch (const std::invalid_argument& e)
    {
      throw ConfigError(source_name + ": [clock] " + e.what());
    }
  }
  else if (model_name == "degenerate")
  {
    if (get("clock.clock_lo") || get("clock.clock_hi"))
      throw ConfigError(source_name + ": [clock] degenerate model takes no bounds");
    cfg.clock = ClockModel::degenerate();
  }
  else
  {
    throw ConfigError(source_name + ": [clock] model must be 'uniform' or 'degenerate'", model ? model->line : 0);
  }
  if (const Value* v = get("clock.draw_mode"))
  {
    try
    {
      cfg.clock_mode = clock_mode_from_string(v->text);
    }
    catch (const std::invalid_argument& e)
    {
      throw ConfigError(source_name + ": [clock] " + e.what(), v->line);
    }
  }

  // [theory]
  cfg.theory.m_max = int_or("theory.m_max", cfg.theory.m_max, 1);
  cfg.theory.quadrature_points = int_or("theory.quadrature_points", cfg.theory.quadrature_points, 8);
  if (cfg.theory.quadrature_points % 8 != 0)
    throw ConfigError(source_name + ": [theory] quadrature_points must be a multiple of 8");

  // [solver]
  cfg.solver.step_tolerance_m = real_or("solver.step_tolerance", cfg.solver.step_tolerance_m);
  cfg.solver.residual_tolerance_m = real_or("solver.residual_tolerance", cfg.solver.residual_tolerance_m);
  cfg.solver.max_iterations = int_or("solver.max_iterations", cfg.solver.max_iterations, 1);
  cfg.solver.multistart_grid = int_or("solver.multistart_grid", cfg.solver.multistart_grid, 2);
  cfg.solver.search_radius_factor = real_or("solver.search_radius_factor", cfg.solver.search_radius_factor);
  if (!(cfg.solver.step_tolerance_m > 0.0 && cfg.solver.residual_tolerance_m > 0.0))
    throw ConfigError(source_name + ": [solver] tolerances must be positive");
  if (!(cfg.solver.search_radius_factor >= 1.0))
    throw ConfigError(source_name + ": [solver] search_radius_factor must be >= 1");

  // [campaign]
  cfg.trials_per_point = int_or("campaign.trials_per_point", cfg.trials_per_point, 1);
  if (const Value* v = get("campaign.seed"))
    cfg.seed = v->u64;
  cfg.workers = int_or("campaign.workers", cfg.workers, 1);
  if (const Value* v = get("campaign.sweep_powers"))
  {
    cfg.sweep_powers_w = v->list;
    for (double p : cfg.sweep_powers_w)
      if (!(p > 0.0))
        throw ConfigError(source_name + ": [campaign] sweep powers must be positive", v->line);
  }
  cfg.diffcal_frames = int_or("campaign.diffcal_frames", cfg.diffcal_frames, 2);

  // [replay]
  if (const Value* v = get("replay.tolerance"))
  {
    if (!(v->real >= 0.0))
      throw ConfigError(source_name + ": [replay] tolerance must be non-negative", v->line);
    cfg.replay_tolerance_m = v->real;
  }
  cfg.cluster_min_separation_m = real_or("replay.cluster_min_separation", cfg.cluster_min_separation_m);

  if (cfg.receiver_points().empty())
    throw ConfigError(source_name + ": no receiver points");
  return cfg;
}

Config load_config(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string serialize_config(const Config& config)
{
  std::ostringstream os;
  bool first = true;
  for (const char* name : kSections)
  {
    const auto it = std::find_if(config.sections.begin(), config.sections.end(),
                                 [&](const ConfigSection& s) { return s.name == name; });
    if (it == config.sections.end())
      continue;
    auto entries = it->entries;
    std::sort(entries.begin(), entries.end());
    if (!first)
      os << '\n';
    first = false;
    os << '[' << name << "]\n";
    for (const auto& [k, v] : entries)
      os << k << " = " << v << '\n';
  }
  return os.str();
}

std::string config_hash(const Config& config)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(config))
  {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CampaignSpec campaign_spec(const Config& config)
{
  CampaignSpec s;
  s.scene = config.scene;
  s.points = config.receiver_points();
  s.budget = config.budget;
  s.signal = config.signal;
  s.clock = config.clock;
  s.trials_per_point = config.trials_per_point;
  s.seed = config.seed;
  s.clock_mode = config.clock_mode;
  s.workers = config.workers;
  s.theory = config.theory;
  s.solver = config.solver;
  s.config_hash = config_hash(config);
  return s;
}

} // namespace uvtdoa::cli
