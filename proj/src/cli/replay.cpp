#include "uvtdoa/cli/replay.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <sstream>

namespace uvtdoa::cli
{

namespace
{

constexpr std::size_t kMaxDiagnostics = 20;

std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line)
{
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(line);
  while (std::getline(is, item, ','))
    out.push_back(trim(item));
  if (!line.empty() && line.back() == ',')
    out.emplace_back();
  return out;
}

bool to_real(const std::string& s, double& v)
{
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(v);
}

bool to_int(const std::string& s, long long& v)
{
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return !s.empty() && ec == std::errc{} && ptr == s.data() + s.size();
}

struct PartialFrame
{
  std::string session;
  long long frame = 0;
  double timestamp_s = 0.0;
  std::array<std::optional<long long>, 3> chip;
  std::optional<double> chip_s;
  std::optional<double> t_ba_s;
  std::optional<double> t_cb_s;
  std::optional<Point2> truth;
};

class Parser
{
public:
  explicit Parser(LogParse& out) : out_(out) {}

  void fail(int line, const std::string& why)
  {
    ++out_.malformed;
    if (out_.diagnostics.size() < kMaxDiagnostics)
      out_.diagnostics.push_back("line " + std::to_string(line) + ": " + why);
  }

  void detection_row(int line, const std::vector<std::string>& f)
  {
    if (f.size() != 6 && f.size() != 8)
    {
      fail(line, "expected 6 or 8 fields, got " + std::to_string(f.size()));
      return;
    }
    const std::string& session = f[0];
    long long frame = 0;
    double ts = 0.0;
    if (session.empty() || !to_int(f[1], frame) || !to_real(f[2], ts))
    {
      fail(line, "bad session, frame or timestamp");
      return;
    }
    const std::string& label = f[3];
    std::optional<Point2> truth;
    if (f.size() == 8 && !(f[6].empty() && f[7].empty()))
    {
      double x = 0, y = 0;
      if (!to_real(f[6], x) || !to_real(f[7], y))
      {
        fail(line, "bad truth position");
        return;
      }
      truth = Point2(x, y);
    }

    auto last = last_ts_.find(session);
    if (last != last_ts_.end() && ts < last->second)
    {
      ++out_.non_monotone;
      if (out_.diagnostics.size() < kMaxDiagnostics)
        out_.diagnostics.push_back("line " + std::to_string(line) + ": timestamp goes backwards in session " + session);
      return;
    }

    PartialFrame pending;
    pending.session = session;
    pending.frame = frame;
    pending.timestamp_s = ts;
    PartialFrame& pf = lookup(session, frame, pending);
    if (truth)
    {
      if (pf.truth && (*pf.truth - *truth).norm() > 0.0)
      {
        fail(line, "truth position differs within the frame");
        return;
      }
      pf.truth = truth;
    }

    if (label == "A" || label == "B" || label == "C")
    {
      long long chip = 0;
      double chip_ns = 0.0;
      if (!to_int(f[4], chip) || !to_real(f[5], chip_ns) || !(chip_ns > 0.0))
      {
        fail(line, "detections need an integer chip and a positive chip_ns");
        return;
      }
      const int k = label[0] - 'A';
      if (pf.chip[k])
      {
        fail(line, "duplicate detection " + label + " in frame");
        return;
      }
      if (pf.chip_s && std::abs(*pf.chip_s - chip_ns * 1e-9) > 1e-12 * *pf.chip_s)
      {
        fail(line, "chip duration differs within the frame");
        return;
      }
      pf.chip[k] = chip;
      pf.chip_s = chip_ns * 1e-9;
    }
    else if (label == "BA" || label == "CB")
    {
      double v = 0.0;
      if (!to_real(f[4], v))
      {
        fail(line, "bad time difference");
        return;
      }
      auto& slot = label == "BA" ? pf.t_ba_s : pf.t_cb_s;
      if (slot)
      {
        fail(line, "duplicate " + label + " in frame");
        return;
      }
      slot = v;
    }
    else
    {
      fail(line, "unknown label '" + label + "'");
      return;
    }
    last_ts_[session] = ts;
  }

  void trials_header(const std::vector<std::string>& f)
  {
    for (std::size_t i = 0; i < f.size(); ++i)
      columns_[f[i]] = i;
    for (const char* need : {"point", "trial", "truth_x_m", "truth_y_m", "t_ba_s", "t_cb_s", "est_x_m", "est_y_m"})
      if (!columns_.count(need))
        throw LogError(std::string("per-trial CSV lacks column '") + need + "'");
  }

  void trials_row(int line, const std::vector<std::string>& f)
  {
    if (f.size() != columns_.size())
    {
      fail(line, "expected " + std::to_string(columns_.size()) + " fields, got " + std::to_string(f.size()));
      return;
    }
    auto col = [&](const char* name) -> const std::string& { return f[columns_.at(name)]; };
    long long trial = 0;
    double tx = 0, ty = 0, ba = 0, cb = 0, ex = 0, ey = 0;
    if (col("point").empty() || !to_int(col("trial"), trial) || !to_real(col("truth_x_m"), tx) ||
        !to_real(col("truth_y_m"), ty) || !to_real(col("t_ba_s"), ba) || !to_real(col("t_cb_s"), cb) ||
        !to_real(col("est_x_m"), ex) || !to_real(col("est_y_m"), ey))
    {
      fail(line, "bad per-trial row");
      return;
    }
    PartialFrame pending;
    pending.session = col("point");
    pending.frame = trial;
    pending.timestamp_s = static_cast<double>(trial);
    PartialFrame& pf = lookup(pending.session, trial, pending);
    if (pf.t_ba_s)
    {
      fail(line, "duplicate trial");
      return;
    }
    pf.t_ba_s = ba;
    pf.t_cb_s = cb;
    pf.truth = Point2(tx, ty);
    recorded_[index_.at({pending.session, trial})] = Point2(ex, ey);
  }

  void finish()
  {
    for (std::size_t i = 0; i < order_.size(); ++i)
    {
      const PartialFrame& pf = order_[i];
      FrameRecord r;
      r.session = pf.session;
      r.frame = pf.frame;
      r.timestamp_s = pf.timestamp_s;
      r.truth = pf.truth;
      if (pf.t_ba_s && pf.t_cb_s)
      {
        r.t_ba_s = *pf.t_ba_s;
        r.t_cb_s = *pf.t_cb_s;
      }
      else if (pf.chip[0] && pf.chip[1] && pf.chip[2])
      {
        r.t_ba_s = static_cast<double>(*pf.chip[1] - *pf.chip[0]) * *pf.chip_s;
        r.t_cb_s = static_cast<double>(*pf.chip[2] - *pf.chip[1]) * *pf.chip_s;
      }
      else
      {
        ++out_.incomplete;
        if (out_.diagnostics.size() < kMaxDiagnostics)
          out_.diagnostics.push_back("session " + pf.session + " frame " + std::to_string(pf.frame) +
                                     ": incomplete (needs A, B, C or BA, CB)");
        continue;
      }
      const auto rec = recorded_.find(i);
      if (rec != recorded_.end())
        r.recorded_fix = rec->second;
      out_.frames.push_back(std::move(r));
    }
  }

private:
  PartialFrame& lookup(const std::string& session, long long frame, const PartialFrame& init)
  {
    const auto key = std::make_pair(session, frame);
    auto it = index_.find(key);
    if (it == index_.end())
    {
      it = index_.emplace(key, order_.size()).first;
      order_.push_back(init);
    }
    return order_[it->second];
  }

  LogParse& out_;
  std::map<std::string, double> last_ts_;
  std::map<std::pair<std::string, long long>, std::size_t> index_;
  std::vector<PartialFrame> order_;
  std::map<std::size_t, Point2> recorded_;
  std::map<std::string, std::size_t> columns_;
};

double mean_distance(const std::vector<Point2>& pts, const Point2& c)
{
  double s = 0.0;
  for (const auto& p : pts)
    s += (p - c).norm();
  return pts.empty() ? 0.0 : s / static_cast<double>(pts.size());
}

double rms_radius(const std::vector<Point2>& pts, const Point2& c)
{
  double s = 0.0;
  for (const auto& p : pts)
    s += (p - c).squaredNorm();
  return pts.empty() ? 0.0 : std::sqrt(s / static_cast<double>(pts.size()));
}

Point2 centroid(const std::vector<Point2>& pts)
{
  Point2 c = Point2::Zero();
  for (const auto& p : pts)
    c += p;
  return pts.empty() ? c : Point2(c / static_cast<double>(pts.size()));
}

} // namespace

LogParse parse_log(std::istream& in)
{
  LogParse out;
  Parser parser(out);
  std::string raw;
  bool have_header = false;
  for (int line = 1; std::getline(in, raw); ++line)
  {
    const std::string t = trim(raw);
    if (t.empty() || t[0] == '#')
      continue;
    const auto fields = split_csv(t);
    if (!have_header)
    {
      have_header = true;
      if (t == kLogHeader || t == std::string(kLogHeader).substr(0, std::string(kLogHeader).rfind(",truth_x_m")))
        continue;
      if (fields.size() >= 2 && fields[0] == "point" && fields[1] == "trial")
      {
        out.trials_format = true;
        parser.trials_header(fields);
        continue;
      }
      throw LogError("unrecognized log header '" + t + "' (expected '" + std::string(kLogHeader) +
                     "' or a per-trial CSV)");
    }
    ++out.data_lines;
    if (out.trials_format)
      parser.trials_row(line, fields);
    else
      parser.detection_row(line, fields);
  }
  if (out.data_lines == 0)
    throw LogError("log contains no data lines");
  parser.finish();
  return out;
}

std::vector<ReplayFix> replay_frames(const Scene& scene, const std::vector<FrameRecord>& frames, double tolerance_m,
                                     const SolverOptions& solver)
{
  std::vector<ReplayFix> out;
  out.reserve(frames.size());
  for (const FrameRecord& f : frames)
  {
    ReplayFix r;
    r.record = f;
    r.measurement = measurement_from_times(scene, f.t_ba_s, f.t_cb_s, tolerance_m);
    r.fix = solve_position(scene, r.measurement, std::nullopt, solver);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ClusterStats> cluster_stats(const std::vector<ReplayFix>& fixes, double min_separation_m)
{
  std::vector<std::string> sessions;
  std::map<std::string, std::vector<const ReplayFix*>> groups;
  for (const auto& f : fixes)
  {
    if (!groups.count(f.record.session))
      sessions.push_back(f.record.session);
    groups[f.record.session].push_back(&f);
  }

  std::vector<ClusterStats> out;
  for (const auto& name : sessions)
  {
    const auto& g = groups[name];
    ClusterStats s;
    s.session = name;
    s.count = static_cast<int>(g.size());
    std::vector<Point2> pts;
    for (const auto* f : g)
      pts.push_back(f->fix.position);
    s.mean = centroid(pts);
    s.spread_m = mean_distance(pts, s.mean);
    s.centres = {s.mean, s.mean};

    bool same_truth = g.front()->record.truth.has_value();
    for (const auto* f : g)
      same_truth = same_truth && f->record.truth && (*f->record.truth - *g.front()->record.truth).norm() == 0.0;
    if (same_truth)
    {
      s.truth = g.front()->record.truth;
      s.mean_to_truth_m = (s.mean - *s.truth).norm();
      double sq = 0.0;
      for (const auto& p : pts)
        sq += (p - *s.truth).squaredNorm();
      s.rmse_m = std::sqrt(sq / static_cast<double>(pts.size()));
    }

    if (pts.size() >= 4)
    {
      // 2-means seeded with the farthest pair (first such pair in input order).
      std::size_t ia = 0, ib = 0;
      double far = -1.0;
      for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
          if ((pts[i] - pts[j]).norm() > far)
          {
            far = (pts[i] - pts[j]).norm();
            ia = i;
            ib = j;
          }
      Point2 c0 = pts[ia], c1 = pts[ib];
      std::vector<Point2> p0, p1;
      for (int iter = 0; iter < 100; ++iter)
      {
        p0.clear();
        p1.clear();
        for (const auto& p : pts)
          ((p - c0).squaredNorm() <= (p - c1).squaredNorm() ? p0 : p1).push_back(p);
        const Point2 n0 = centroid(p0), n1 = centroid(p1);
        if (n0 == c0 && n1 == c1)
          break;
        c0 = n0;
        c1 = n1;
      }
      const double sep = (c0 - c1).norm();
      const double radii = rms_radius(p0, c0) + rms_radius(p1, c1);
      if (p0.size() >= 2 && p1.size() >= 2 && sep > min_separation_m && sep > 2.0 * radii)
      {
        s.clusters = 2;
        s.centres = {c0, c1};
        s.separation_m = sep;
      }
    }
    out.push_back(s);
  }
  return out;
}

CalibrationSet calibration_from_frames(const Scene& scene, const std::vector<FrameRecord>& frames)
{
  CalibrationSet cal;
  for (const auto& f : frames)
  {
    if (!f.truth)
      continue;
    const auto off = calibration_offsets(scene, *f.truth, f.t_ba_s, f.t_cb_s);
    cal.ab_offsets_s.push_back(off[0]);
    cal.cb_offsets_s.push_back(off[1]);
  }
  return cal;
}

} // namespace uvtdoa::cli
