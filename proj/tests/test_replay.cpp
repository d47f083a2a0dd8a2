#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "uvtdoa/cli/replay.hpp"

using namespace uvtdoa;
using namespace uvtdoa::cli;

namespace
{

const Scene kLayout2 = make_scene({0, 0}, {75.6, 0}, {32.2, 76.6}, {36, 25});

// Detection log rows "BA"/"CB" for an exact fix at p, repeated over frames.
std::string difference_log(const std::string& session, const Point2& p, int frames, int first_frame = 0)
{
  const TdoaMeasurement m = exact_measurement(kLayout2, p);
  std::string s;
  for (int f = 0; f < frames; ++f)
  {
    const int frame = first_frame + f;
    s += fmt::format("{},{},{},BA,{:.17g},,{},{}\n", session, frame, frame, m.t_ba_s, p.x(), p.y());
    s += fmt::format("{},{},{},CB,{:.17g},,{},{}\n", session, frame, frame, m.t_cb_s, p.x(), p.y());
  }
  return s;
}

LogParse parse(const std::string& text)
{
  std::istringstream is(text);
  return parse_log(is);
}

} // namespace

TEST_CASE("zero-error difference log replays to the true position")
{
  const Point2 p(36, 25);
  const LogParse log = parse(std::string(kLogHeader) + "\n" + difference_log("s1", p, 10));
  CHECK_FALSE(log.trials_format);
  CHECK(log.data_lines == 20);
  REQUIRE(log.frames.size() == 10);
  const auto fixes = replay_frames(kLayout2, log.frames, 6.0);
  for (const auto& f : fixes)
    CHECK((f.fix.position - p).norm() < 1e-6);
  const auto stats = cluster_stats(fixes, 1.0);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].count == 10);
  CHECK(stats[0].clusters == 1);
  CHECK(stats[0].spread_m < 1e-6);
  REQUIRE(stats[0].mean_to_truth_m);
  CHECK(*stats[0].mean_to_truth_m < 1e-6);
}

TEST_CASE("chip detections convert to differences")
{
  // B arrives 10 chips after A, C 4 chips before B, 10 ns chips.
  const std::string text = std::string(kLogHeader) +
                           "\nx,0,0.0,A,100,10\n"
                           "x,0,0.0,B,110,10\n"
                           "x,0,0.0,C,106,10\n";
  const LogParse log = parse(text);
  REQUIRE(log.frames.size() == 1);
  CHECK(log.frames[0].t_ba_s == doctest::Approx(100e-9));
  CHECK(log.frames[0].t_cb_s == doctest::Approx(-40e-9));
  CHECK_FALSE(log.frames[0].truth);
}

TEST_CASE("malformed, non-monotone and incomplete lines are counted")
{
  const std::string text = std::string(kLogHeader) +
                           "\n# comment\n"
                           "s,0,1.0,A,5,10\n"
                           "s,0,1.0,B,7,10\n"
                           "s,0,1.0,C,9,10\n"
                           "s,1,0.5,A,5,10\n"     // timestamp backwards
                           "s,2,2.0,Q,5,10\n"     // unknown label
                           "s,2,2.0,A,five,10\n"  // bad chip
                           "s,3,3.0,A,5\n"        // too few fields
                           "s,4,4.0,A,5,10\n"     // frame missing B and C
                           "t,0,0.0,BA,1e-8,,,\n"
                           "t,0,0.0,CB,2e-8,,,\n";
  const LogParse log = parse(text);
  CHECK(log.data_lines == 10);
  CHECK(log.non_monotone == 1);
  CHECK(log.malformed == 3);
  CHECK(log.incomplete == 2); // frames s/2 and s/4 (s/3 never opened)
  REQUIRE(log.frames.size() == 2);
  CHECK(log.frames[0].session == "s");
  CHECK(log.frames[1].session == "t");
  CHECK_FALSE(log.diagnostics.empty());
}

TEST_CASE("empty or headerless logs are errors")
{
  CHECK_THROWS_AS(parse(""), LogError);
  CHECK_THROWS_AS(parse(std::string(kLogHeader) + "\n"), LogError);
  CHECK_THROWS_AS(parse("# only comments\n\n"), LogError);
  CHECK_THROWS_AS(parse("a,b,c\n1,2,3\n"), LogError);
  CHECK_THROWS_AS(parse("point,trial,x\n0,0,1\n"), LogError);
}

TEST_CASE("two offset clusters are identified")
{
  const LogParse log = parse(std::string(kLogHeader) + "\n" + difference_log("p", {30, 20}, 5) +
                             difference_log("p", {38, 24}, 5, 5));
  REQUIRE(log.frames.size() == 10);
  const auto stats = cluster_stats(replay_frames(kLayout2, log.frames, 6.0), 1.0);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].clusters == 2);
  CHECK(stats[0].separation_m == doctest::Approx(std::hypot(8.0, 4.0)).epsilon(1e-6));
  CHECK_FALSE(stats[0].truth); // truth differs across the session

  // The same fixes with a separation floor above the offset stay one cluster.
  CHECK(cluster_stats(replay_frames(kLayout2, log.frames, 6.0), 20.0)[0].clusters == 1);
}

TEST_CASE("a single noisy cloud is not split")
{
  std::string text = std::string(kLogHeader) + "\n";
  const Point2 base(36, 25);
  for (int f = 0; f < 20; ++f)
  {
    const Point2 p = base + Point2(std::cos(f * 2.4), std::sin(f * 2.4)) * (0.5 + 0.1 * (f % 5));
    const TdoaMeasurement m = exact_measurement(kLayout2, p);
    text += fmt::format("c,{},{},BA,{:.17g},,,\n", f, f, m.t_ba_s);
    text += fmt::format("c,{},{},CB,{:.17g},,,\n", f, f, m.t_cb_s);
  }
  const auto stats = cluster_stats(replay_frames(kLayout2, parse(text).frames, 6.0), 1.0);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].clusters == 1);
  CHECK(stats[0].spread_m > 0.4);
}

TEST_CASE("per-trial CSV replays to its recorded fixes exactly")
{
  CampaignSpec spec;
  spec.scene = kLayout2;
  spec.points = {{36, 25}, {20, 10}, {60, 40}};
  spec.signal.sequence = generate_pilot(64, 1);
  spec.signal.chips_per_symbol = 20;
  spec.signal.slot_interval_s = 100e-6;
  spec.clock = ClockModel::uniform(0, 100e-9);
  spec.trials_per_point = 6;
  spec.seed = 77;
  const CampaignResult r = run_campaign(spec);
  std::stringstream csv;
  write_trials_csv(csv, spec, r);

  const LogParse log = parse_log(csv);
  CHECK(log.trials_format);
  CHECK(log.malformed == 0);
  REQUIRE(log.frames.size() == r.trials.size());
  const auto fixes = replay_frames(kLayout2, log.frames, feasibility_tolerance(kLayout2.c, spec.signal.chip_duration()),
                                   spec.solver);
  for (std::size_t i = 0; i < fixes.size(); ++i)
  {
    REQUIRE(fixes[i].record.recorded_fix);
    CHECK(fixes[i].fix.position == *fixes[i].record.recorded_fix);
    CHECK(fixes[i].fix.position == r.trials[i].fix.position);
  }
}

TEST_CASE("calibration offsets from known-position frames")
{
  const Point2 p(36, 25);
  const TdoaMeasurement m = exact_measurement(kLayout2, p);
  FrameRecord f;
  f.truth = p;
  f.t_ba_s = m.t_ba_s + 30e-9;
  f.t_cb_s = m.t_cb_s - 20e-9;
  FrameRecord unknown = f;
  unknown.truth.reset();
  const CalibrationSet cal = calibration_from_frames(kLayout2, {f, unknown});
  REQUIRE(cal.ab_offsets_s.size() == 1);
  CHECK(cal.ab_offsets_s[0] == doctest::Approx(30e-9));
  CHECK(cal.cb_offsets_s[0] == doctest::Approx(-20e-9));
}
