#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uvtdoa/montecarlo.hpp"
#include "uvtdoa/tdoa.hpp"

namespace uvtdoa::cli
{

inline constexpr const char* kLogHeader = "session,frame,timestamp_s,label,value,chip_ns,truth_x_m,truth_y_m";

// A log that cannot be used at all (e.g. empty).
class LogError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// One positioning frame assembled from a log: either three detections (A, B, C
/// with slot-relative start chips) or the two differences BA and CB directly.
struct FrameRecord
{
  std::string session;
  long long frame = 0;
  double timestamp_s = 0.0;
  double t_ba_s = 0.0;
  double t_cb_s = 0.0;
  std::optional<Point2> truth;
  std::optional<Point2> recorded_fix; // present when replaying a per-trial CSV
};

struct LogParse
{
  std::vector<FrameRecord> frames; // in order of first appearance
  bool trials_format = false;      // input was a simulator per-trial CSV
  int data_lines = 0;
  int malformed = 0;     // unparseable lines, skipped
  int non_monotone = 0;  // timestamp went backwards within a session, skipped
  int incomplete = 0;    // frames missing an anchor or a difference
  std::vector<std::string> diagnostics; // first few problems, with line numbers
};

/// Parses a detection log (header `kLogHeader`) or a per-trial CSV written by
/// write_trials_csv (detected from its header). Lines starting with '#' are
/// comments. Throws LogError if there are no data lines.
LogParse parse_log(std::istream& in);

struct ReplayFix
{
  FrameRecord record;
  TdoaMeasurement measurement;
  PositionFix fix;
};

std::vector<ReplayFix> replay_frames(const Scene& scene, const std::vector<FrameRecord>& frames, double tolerance_m,
                                     const SolverOptions& solver = {});

/// Per-session summary of the fixes. `spread_m` is the mean distance of the
/// fixes to their mean. A 2-means split is reported as two clusters when both
/// parts hold at least two fixes and their centres are further apart than
/// both `min_separation_m` and twice the sum of the parts' RMS radii.
struct ClusterStats
{
  std::string session;
  int count = 0;
  Point2 mean = Point2::Zero();
  double spread_m = 0.0;
  std::optional<Point2> truth;
  std::optional<double> mean_to_truth_m;
  std::optional<double> rmse_m;
  int clusters = 1;
  std::array<Point2, 2> centres{Point2::Zero(), Point2::Zero()};
  double separation_m = 0.0;
};

std::vector<ClusterStats> cluster_stats(const std::vector<ReplayFix>& fixes, double min_separation_m);

/// Per-frame clock-bias estimates of the A-B and B-C pairs from frames with a
/// known position.
CalibrationSet calibration_from_frames(const Scene& scene, const std::vector<FrameRecord>& frames);

} // namespace uvtdoa::cli
