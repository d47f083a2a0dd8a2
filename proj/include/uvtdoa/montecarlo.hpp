#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "uvtdoa/channel.hpp"
#include "uvtdoa/errortheory.hpp"
#include "uvtdoa/scene.hpp"
#include "uvtdoa/sync.hpp"
#include "uvtdoa/tdoa.hpp"

namespace uvtdoa
{

inline constexpr const char* kCampaignSchema = "uvtdoa.campaign/1";

enum class ClockDrawMode
{
  per_frame,   // fresh clock offsets for every frame
  per_session, // one draw per receiver point, held for all of its trials
};

const char* to_string(ClockDrawMode mode);
ClockDrawMode clock_mode_from_string(const std::string& s);

struct CampaignSpec
{
  Scene scene;
  std::vector<Point2> points;
  LinkBudget budget;
  SignalParams signal; // lambda_s fields are recomputed per point from the budget
  ClockModel clock;
  int trials_per_point = 1;
  std::uint64_t seed = 1;
  ClockDrawMode clock_mode = ClockDrawMode::per_frame;
  int workers = 1;
  TheoryOptions theory;
  SolverOptions solver;
  std::string config_hash; // carried into persisted outputs

  void validate() const;
};

struct TrialRecord
{
  std::size_t point = 0;
  int trial = 0;
  std::array<double, 3> clock_offsets_s{};
  double eps_s = 0.0;
  std::array<std::int64_t, 3> start_chip{}; // slot-relative
  double t_ba_s = 0.0;
  double t_cb_s = 0.0;
  bool clamped = false;
  PositionFix fix;
  double error_m = 0.0;
};

struct PointSummary
{
  Point2 position = Point2::Zero();
  bool inside = false;
  std::array<double, 3> lambda_s{};
  double rmse_m = 0.0;
  double mean_error_m = 0.0;
  double theory_e_p_m = 0.0; // NaN where the geometry is singular
  int failures = 0;          // trials whose solver did not converge (best iterate still counted)
  int clamped = 0;
};

struct CampaignResult
{
  std::vector<PointSummary> points;
  std::vector<TrialRecord> trials; // ordered by (point, trial)
  std::uint64_t seed = 0;
  int trials_per_point = 0;
  double wall_time_s = 0.0; // not persisted

  double average_rmse(bool inside_only = false) const;
  double average_theory(bool inside_only = false) const;
};

/// Simulates one receiver point: clock draw, frame rendering, correlation sync,
/// TDOA solve, per trial. Trials run on `spec.workers` threads; RNG substreams
/// are keyed by (seed, point, trial) so results do not depend on scheduling.
std::vector<TrialRecord> run_point(const CampaignSpec& spec, std::size_t point_index);

CampaignResult run_campaign(const CampaignSpec& spec);

struct SweepRow
{
  double power_w = 0.0;
  double sim_avg_m = 0.0;
  double theory_avg_m = 0.0;
  double sim_avg_inside_m = 0.0;
  double theory_avg_inside_m = 0.0;
};

// One campaign per power, each with the spec's seed (common random numbers across powers).
std::vector<SweepRow> power_sweep(const CampaignSpec& spec, const std::vector<double>& powers_w);

/// Empirical synchronization MSE: frames rendered at a fixed lambda_s for all
/// three anchors; each anchor slot contributes one sample of
/// (estimated arrival - true arrival).
struct SyncMseEstimate
{
  double mse_s2 = 0.0;
  double std_error_s2 = 0.0;
  int samples = 0;
};

SyncMseEstimate empirical_sync_mse(double lambda_s, double lambda_b, std::size_t length_l, int chips_per_symbol,
                                   double symbol_rate_hz, int samples, std::uint64_t seed);

// --- differential clock correction -----------------------------------------

/// Timing-bias estimates for the A-B and B-C pairs, each from a frame taken at
/// a known position: measured t_BA minus (r2 - r1)/c, likewise for t_CB.
struct CalibrationSet
{
  std::vector<double> ab_offsets_s;
  std::vector<double> cb_offsets_s;
};

std::array<double, 2> calibration_offsets(const Scene& scene, const Point2& truth, double t_ba_s, double t_cb_s);

struct TimeDifference
{
  double t_ba_s = 0.0;
  double t_cb_s = 0.0;
};

struct CorrectionResult
{
  std::optional<double> ab_correction_s; // empty: pair skipped
  std::optional<double> cb_correction_s;
  std::vector<PositionFix> corrected;
  std::vector<PositionFix> uncorrected;
  std::optional<double> corrected_rmse_m; // set when truth was given
  std::optional<double> uncorrected_rmse_m;
  std::vector<std::string> warnings;
};

/// Picks one calibration estimate per pair uniformly at random (seeded), subtracts
/// it from every subsequent t_BA / t_CB and solves both corrected and raw fixes.
CorrectionResult differential_correction(const Scene& scene, const CalibrationSet& calibration,
                                         const std::vector<TimeDifference>& measurements, double tolerance_m,
                                         std::optional<Point2> truth, std::uint64_t seed);

struct DifferentialPoint
{
  Point2 position = Point2::Zero();
  double uncorrected_rmse_m = 0.0;
  double corrected_rmse_m = 0.0;
};

/// For each point: `frames` trials; one randomly chosen frame is the calibration
/// (held out), the rest are corrected with it. Clock draws follow spec.clock_mode.
std::vector<DifferentialPoint> differential_experiment(const CampaignSpec& spec, int frames);

// --- persistence ------------------------------------------------------------

void write_campaign_json(std::ostream& os, const CampaignSpec& spec, const CampaignResult& result);
void write_trials_csv(std::ostream& os, const CampaignSpec& spec, const CampaignResult& result);

} // namespace uvtdoa
