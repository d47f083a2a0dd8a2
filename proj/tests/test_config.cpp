#include <doctest.h>

#include <cmath>
#include <string>

#include "uvtdoa/cli/config.hpp"

using namespace uvtdoa;
using namespace uvtdoa::cli;

namespace
{

const std::string kBase = R"([scene]
a_x_m = 30.2
a_y_m = 53.9
b_x_m = 0
b_y_m = 0
c_x_m = 60.7
c_y_m = 0
)";

// Line number reported for a config error, or -1 if parsing succeeded.
int error_line(const std::string& text)
{
  try
  {
    parse_config(text);
  }
  catch (const ConfigError& e)
  {
    return e.line();
  }
  return -1;
}

std::string error_text(const std::string& text)
{
  try
  {
    parse_config(text);
  }
  catch (const ConfigError& e)
  {
    return e.what();
  }
  return {};
}

} // namespace

TEST_CASE("minimal config takes documented defaults")
{
  const Config c = parse_config(kBase);
  CHECK(c.scene.tx_a == Point2(30.2, 53.9));
  CHECK(c.scene.tx_c == Point2(60.7, 0));
  CHECK(c.budget.power_w == doctest::Approx(0.1));
  CHECK(c.signal.length() == 256);
  CHECK(c.signal.chips_per_symbol == 100);
  CHECK(c.signal.slot_interval_s == doctest::Approx(300e-6));
  CHECK(c.clock.kind == ClockModel::Kind::degenerate);
  CHECK(c.clock_mode == ClockDrawMode::per_frame);
  CHECK(c.trials_per_point == 10);
  CHECK(c.seed == 1);
  CHECK(c.receiver_points().size() == 81);
  CHECK(c.replay_tolerance() == doctest::Approx(2 * kSpeedOfLight * 10e-9));
}

TEST_CASE("unit suffixes convert to SI")
{
  const Config c = parse_config(kBase + R"(
[budget]
power_mw = 150
rx_area_cm2 = 1.77
divergence_deg = 120
wavelength_nm = 266
lambda_b_per_symbol = 0.5

[signal]
symbol_rate_khz = 1000
slot_interval_ms = 0.3

[clock]
clock_lo_ns = 0
clock_hi_us = 0.1

[campaign]
sweep_powers_mw = 10, 30, 100
)");
  CHECK(c.budget.power_w == doctest::Approx(0.15));
  CHECK(c.budget.rx_area_m2 == doctest::Approx(1.77e-4));
  CHECK(c.budget.divergence_full_angle_rad == doctest::Approx(2.0943951023931953));
  CHECK(c.budget.wavelength_m == doctest::Approx(266e-9));
  CHECK(c.budget.lambda_b == 0.5);
  CHECK(c.signal.symbol_rate_hz == doctest::Approx(1e6));
  CHECK(c.signal.slot_interval_s == doctest::Approx(300e-6));
  CHECK(c.clock.kind == ClockModel::Kind::uniform);
  CHECK(c.clock.hi_s == doctest::Approx(100e-9));
  REQUIRE(c.sweep_powers_w.size() == 3);
  CHECK(c.sweep_powers_w[1] == doctest::Approx(0.03));
}

TEST_CASE("explicit grid and point list")
{
  const Config g = parse_config(kBase + "[grid]\nx_min_m = 0\nx_max_m = 10\ny_min_m = 0\ny_max_m = 5\nsteps_x = 3\nsteps_y = 2\n");
  REQUIRE(g.grid);
  const auto pts = g.receiver_points();
  REQUIRE(pts.size() == 6);
  CHECK(pts.front() == Point2(0, 0));
  CHECK(pts.back() == Point2(10, 5));

  const Config p = parse_config(kBase + "[grid]\npoints_cm = 100,200; 300,400\n");
  const auto list = p.receiver_points();
  REQUIRE(list.size() == 2);
  CHECK(list[1].x() == doctest::Approx(3.0));
  CHECK(list[1].y() == doctest::Approx(4.0));
}

TEST_CASE("bare numbers for dimensioned keys are rejected with the line")
{
  const std::string text = kBase + "\n[clock]\nclock_hi = 100\n";
  CHECK(error_line(text) == 10);
  CHECK(error_text(text).find("missing unit suffix") != std::string::npos);
  CHECK(error_line(kBase + "[budget]\npower_furlongs = 1\n") == 9);
}

TEST_CASE("unknown keys, sections and duplicates are rejected")
{
  CHECK(error_line(kBase + "[budget]\ncolour = red\n") == 9);
  CHECK(error_line(kBase + "[antenna]\ngain = 1\n") == 8);
  CHECK(error_line(kBase + "[budget]\npower_mw = 1\npower_w = 2\n") > 0);
  CHECK(error_line("a_x_m = 1\n" + kBase) == 1);
}

TEST_CASE("module invariants are revalidated")
{
  // Collinear anchors.
  CHECK(error_line("[scene]\na_x_m = 0\na_y_m = 0\nb_x_m = 1\nb_y_m = 0\nc_x_m = 2\nc_y_m = 0\n") >= 0);
  CHECK_THROWS_AS(parse_config(kBase + "[budget]\npower_w = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(kBase + "[signal]\nslot_interval_us = 100\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(kBase + "[signal]\nsequence = 0120\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(kBase + "[clock]\nclock_lo_ns = 50\nclock_hi_ns = 10\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(kBase + "[clock]\ndraw_mode = hourly\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(kBase + "[campaign]\ntrials_per_point = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(kBase + "[theory]\nquadrature_points = 12\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(kBase + "[budget]\npower_mw = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[budget]\npower_mw = 1\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/dir/x.ini"), IoError);
}

TEST_CASE("serialization round trip keeps keys and values")
{
  const std::string text = kBase + R"(
[campaign]
seed = 42
trials_per_point = 3

[clock]
model = uniform
clock_hi_ns = 100
draw_mode = per_session

[budget]
power_mw = 150
)";
  const Config a = parse_config(text);
  const Config b = parse_config(serialize_config(a));
  CHECK(serialize_config(a) == serialize_config(b));
  CHECK(config_hash(a) == config_hash(b));
  CHECK(b.seed == 42);
  CHECK(b.clock_mode == ClockDrawMode::per_session);
  CHECK(b.budget.power_w == a.budget.power_w);
  CHECK(b.clock.hi_s == a.clock.hi_s);
}

TEST_CASE("hash ignores layout but not values")
{
  const Config a = parse_config(kBase + "[campaign]\nseed = 1\ntrials_per_point = 2\n");
  const Config b = parse_config("# comment\n" + kBase + "\n[campaign]\ntrials_per_point   =   2\nseed = 1\n");
  const Config c = parse_config(kBase + "[campaign]\nseed = 2\ntrials_per_point = 2\n");
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("campaign spec mirrors the config")
{
  const Config c = parse_config(kBase + "[campaign]\nseed = 9\nworkers = 3\ntrials_per_point = 4\n");
  const CampaignSpec s = campaign_spec(c);
  CHECK(s.seed == 9);
  CHECK(s.workers == 3);
  CHECK(s.trials_per_point == 4);
  CHECK(s.points.size() == 81);
  CHECK(s.config_hash == config_hash(c));
}
