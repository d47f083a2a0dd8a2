#include "uvtdoa/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace uvtdoa
{

namespace
{

// Substream purposes.
constexpr std::uint64_t kStreamTrial = 0;
constexpr std::uint64_t kStreamRender = 1;
constexpr std::uint64_t kStreamSession = 0x5e55;
constexpr std::uint64_t kStreamCalibration = 0xca1;

template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn)
{
  const std::size_t nthreads = std::min<std::size_t>(std::max(workers, 1), std::max<std::size_t>(count, 1));
  if (nthreads <= 1)
  {
    for (std::size_t i = 0; i < count; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto body = [&] {
    for (;;)
    {
      const std::size_t i = next.fetch_add(1);
      if (i >= count || failed.load())
        return;
      try
      {
        fn(i);
      }
      catch (...)
      {
        if (!failed.exchange(true))
          error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (std::size_t t = 0; t < nthreads; ++t)
    pool.emplace_back(body);
  for (auto& th : pool)
    th.join();
  if (error)
    std::rethrow_exception(error);
}

struct PreparedPoint
{
  Scene scene;
  SignalParams signal;
  std::array<double, 3> session_clock{};
};

PreparedPoint prepare_point(const CampaignSpec& spec, std::size_t point_index)
{
  PreparedPoint pp;
  pp.scene = with_receiver(spec.scene, spec.points.at(point_index));
  pp.signal = spec.signal;
  fill_signal_rates(pp.signal, pp.scene, spec.budget);
  Rng session = make_rng(substream_seed(spec.seed, {point_index, kStreamSession}));
  for (auto& c : pp.session_clock)
    c = spec.clock.sample(session);
  return pp;
}

double draw_eps(Rng& rng, double chip_s)
{
  // (-T_c/2, T_c/2]
  return -std::uniform_real_distribution<double>(-0.5 * chip_s, 0.5 * chip_s)(rng);
}

TrialRecord simulate_trial(const CampaignSpec& spec, std::size_t point_index, const PreparedPoint& pp, int trial)
{
  TrialRecord rec;
  rec.point = point_index;
  rec.trial = trial;
  const auto t = static_cast<std::uint64_t>(trial);
  Rng rng = make_rng(substream_seed(spec.seed, {point_index, t, kStreamTrial}));
  if (spec.clock_mode == ClockDrawMode::per_session)
    rec.clock_offsets_s = pp.session_clock;
  else
    for (auto& c : rec.clock_offsets_s)
      c = spec.clock.sample(rng);
  rec.eps_s = draw_eps(rng, pp.signal.chip_duration());

  const ChipTrace trace = render_frame(pp.scene, pp.signal, spec.budget, rec.clock_offsets_s, rec.eps_s,
                                       substream_seed(spec.seed, {point_index, t, kStreamRender}));
  const SyncResult sync = synchronize(trace, pp.signal);
  const FrameLayout layout = frame_layout(pp.signal);
  for (int i = 0; i < 3; ++i)
    rec.start_chip[i] = static_cast<std::int64_t>(sync.start_chip[i]) - static_cast<std::int64_t>(layout.slot_start(i));
  const ArrivalTimes at = arrival_times(sync, pp.signal);
  rec.t_ba_s = at.t_ba();
  rec.t_cb_s = at.t_cb();
  const TdoaMeasurement meas = measurement_from_times(
      pp.scene, rec.t_ba_s, rec.t_cb_s, feasibility_tolerance(pp.scene.c, layout.chip_duration_s));
  rec.clamped = meas.clamped;
  rec.fix = solve_position(pp.scene, meas, std::nullopt, spec.solver);
  rec.error_m = (rec.fix.position - pp.scene.rx_true).norm();
  return rec;
}

double mean_of(const std::vector<double>& v)
{
  if (v.empty())
    return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v)
    s += x;
  return s / static_cast<double>(v.size());
}

} // namespace

const char* to_string(ClockDrawMode mode)
{
  return mode == ClockDrawMode::per_session ? "per_session" : "per_frame";
}

ClockDrawMode clock_mode_from_string(const std::string& s)
{
  if (s == "per_frame")
    return ClockDrawMode::per_frame;
  if (s == "per_session")
    return ClockDrawMode::per_session;
  throw std::invalid_argument("unknown clock draw mode '" + s + "' (expected per_frame or per_session)");
}

void CampaignSpec::validate() const
{
  scene.validate();
  budget.validate();
  SignalParams probe = signal;
  probe.lambda_s_a = probe.lambda_s_b = probe.lambda_s_c = 0.0;
  probe.validate();
  clock.validate();
  if (points.empty())
    throw std::invalid_argument("campaign: no receiver points");
  if (trials_per_point < 1)
    throw std::invalid_argument("campaign: trials_per_point must be >= 1");
}

double CampaignResult::average_rmse(bool inside_only) const
{
  std::vector<double> v;
  for (const auto& p : points)
    if ((!inside_only || p.inside) && std::isfinite(p.rmse_m))
      v.push_back(p.rmse_m);
  return mean_of(v);
}

double CampaignResult::average_theory(bool inside_only) const
{
  std::vector<double> v;
  for (const auto& p : points)
    if ((!inside_only || p.inside) && std::isfinite(p.theory_e_p_m))
      v.push_back(p.theory_e_p_m);
  return mean_of(v);
}

std::vector<TrialRecord> run_point(const CampaignSpec& spec, std::size_t point_index)
{
  spec.validate();
  const PreparedPoint pp = prepare_point(spec, point_index);
  std::vector<TrialRecord> out(static_cast<std::size_t>(spec.trials_per_point));
  parallel_for(out.size(), spec.workers,
               [&](std::size_t t) { out[t] = simulate_trial(spec, point_index, pp, static_cast<int>(t)); });
  return out;
}

CampaignResult run_campaign(const CampaignSpec& spec)
{
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t npoints = spec.points.size();
  const auto trials = static_cast<std::size_t>(spec.trials_per_point);

  std::vector<PreparedPoint> prepared;
  prepared.reserve(npoints);
  for (std::size_t i = 0; i < npoints; ++i)
    prepared.push_back(prepare_point(spec, i));

  CampaignResult result;
  result.seed = spec.seed;
  result.trials_per_point = spec.trials_per_point;
  result.trials.resize(npoints * trials);
  parallel_for(result.trials.size(), spec.workers, [&](std::size_t k) {
    const std::size_t p = k / trials;
    result.trials[k] = simulate_trial(spec, p, prepared[p], static_cast<int>(k % trials));
  });

  const auto theory = theory_points(spec.scene, spec.points, spec.budget, spec.signal, spec.clock, spec.theory);
  result.points.resize(npoints);
  for (std::size_t p = 0; p < npoints; ++p)
  {
    PointSummary& s = result.points[p];
    s.position = spec.points[p];
    s.inside = inside_triangle(spec.scene, s.position);
    s.lambda_s = prepared[p].signal.lambda_s();
    s.theory_e_p_m = theory[p].e_p;
    double sq = 0.0, sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t)
    {
      const TrialRecord& r = result.trials[p * trials + t];
      sq += r.error_m * r.error_m;
      sum += r.error_m;
      s.failures += r.fix.converged ? 0 : 1;
      s.clamped += r.clamped ? 1 : 0;
    }
    s.rmse_m = std::sqrt(sq / static_cast<double>(trials));
    s.mean_error_m = sum / static_cast<double>(trials);
  }
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<SweepRow> power_sweep(const CampaignSpec& spec, const std::vector<double>& powers_w)
{
  if (powers_w.empty())
    throw std::invalid_argument("power_sweep: no power levels");
  std::vector<SweepRow> rows;
  for (double pw : powers_w)
  {
    CampaignSpec s = spec;
    s.budget.power_w = pw;
    const CampaignResult r = run_campaign(s);
    rows.push_back({pw, r.average_rmse(false), r.average_theory(false), r.average_rmse(true), r.average_theory(true)});
  }
  return rows;
}

SyncMseEstimate empirical_sync_mse(double lambda_s, double lambda_b, std::size_t length_l, int chips_per_symbol,
                                   double symbol_rate_hz, int samples, std::uint64_t seed)
{
  if (samples < 1)
    throw std::invalid_argument("empirical_sync_mse: samples must be >= 1");
  const Scene scene = make_scene({0.0, 0.0}, {3.0, 0.0}, {0.0, 3.0}, {1.0, 1.0});
  SignalParams sig;
  sig.sequence = generate_pilot(length_l, 1);
  sig.symbol_rate_hz = symbol_rate_hz;
  sig.chips_per_symbol = chips_per_symbol;
  sig.slot_interval_s = static_cast<double>(length_l + 4) / symbol_rate_hz;
  sig.lambda_s_a = sig.lambda_s_b = sig.lambda_s_c = lambda_s;
  LinkBudget budget;
  budget.lambda_b = lambda_b;
  const double tc = sig.chip_duration();

  std::vector<double> sq;
  sq.reserve(static_cast<std::size_t>(samples));
  for (std::uint64_t frame = 0; sq.size() < static_cast<std::size_t>(samples); ++frame)
  {
    Rng rng = make_rng(substream_seed(seed, {frame, kStreamTrial}));
    const double eps = draw_eps(rng, tc);
    const std::array<double, 3> no_clock{};
    const ChipTrace trace = render_frame(scene, sig, budget, no_clock, eps, substream_seed(seed, {frame, kStreamRender}));
    const SyncResult sync = synchronize(trace, sig);
    const ArrivalTimes at = arrival_times(sync, sig);
    const auto delays = pilot_delays(scene, no_clock, eps);
    const std::array<double, 3> est{at.t_a, at.t_b, at.t_c};
    for (int i = 0; i < 3 && sq.size() < static_cast<std::size_t>(samples); ++i)
    {
      const double e = est[i] - delays[i];
      sq.push_back(e * e);
    }
  }
  SyncMseEstimate out;
  out.samples = samples;
  out.mse_s2 = mean_of(sq);
  double var = 0.0;
  for (double v : sq)
    var += (v - out.mse_s2) * (v - out.mse_s2);
  var /= std::max<std::size_t>(sq.size() - 1, 1);
  out.std_error_s2 = std::sqrt(var / static_cast<double>(sq.size()));
  return out;
}

std::array<double, 2> calibration_offsets(const Scene& scene, const Point2& truth, double t_ba_s, double t_cb_s)
{
  const TdoaMeasurement exact = exact_measurement(scene, truth);
  return {t_ba_s - exact.t_ba_s, t_cb_s - exact.t_cb_s};
}

CorrectionResult differential_correction(const Scene& scene, const CalibrationSet& calibration,
                                         const std::vector<TimeDifference>& measurements, double tolerance_m,
                                         std::optional<Point2> truth, std::uint64_t seed)
{
  if (calibration.ab_offsets_s.empty() && calibration.cb_offsets_s.empty())
    throw std::invalid_argument("differential_correction: no calibration estimates");
  CorrectionResult out;
  Rng rng = make_rng(seed);
  auto pick = [&](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty())
      return std::nullopt;
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  out.ab_correction_s = pick(calibration.ab_offsets_s);
  out.cb_correction_s = pick(calibration.cb_offsets_s);
  if (!out.ab_correction_s)
    out.warnings.push_back("no A-B calibration; t_BA left uncorrected");
  if (!out.cb_correction_s)
    out.warnings.push_back("no B-C calibration; t_CB left uncorrected");

  double sq_c = 0.0, sq_u = 0.0;
  for (const auto& m : measurements)
  {
    const TdoaMeasurement raw = measurement_from_times(scene, m.t_ba_s, m.t_cb_s, tolerance_m);
    const TdoaMeasurement cor = measurement_from_times(scene, m.t_ba_s - out.ab_correction_s.value_or(0.0),
                                                       m.t_cb_s - out.cb_correction_s.value_or(0.0), tolerance_m);
    out.uncorrected.push_back(solve_position(scene, raw));
    out.corrected.push_back(solve_position(scene, cor));
    if (truth)
    {
      sq_u += (out.uncorrected.back().position - *truth).squaredNorm();
      sq_c += (out.corrected.back().position - *truth).squaredNorm();
    }
  }
  if (truth && !measurements.empty())
  {
    const auto n = static_cast<double>(measurements.size());
    out.uncorrected_rmse_m = std::sqrt(sq_u / n);
    out.corrected_rmse_m = std::sqrt(sq_c / n);
  }
  return out;
}

std::vector<DifferentialPoint> differential_experiment(const CampaignSpec& spec, int frames)
{
  if (frames < 2)
    throw std::invalid_argument("differential_experiment: need at least two frames per point");
  CampaignSpec s = spec;
  s.trials_per_point = frames;
  std::vector<DifferentialPoint> out;
  for (std::size_t p = 0; p < s.points.size(); ++p)
  {
    const auto trials = run_point(s, p);
    const Scene scene = with_receiver(s.scene, s.points[p]);
    Rng pick = make_rng(substream_seed(s.seed, {p, kStreamCalibration}));
    const std::size_t cal = std::uniform_int_distribution<std::size_t>(0, trials.size() - 1)(pick);
    const auto off = calibration_offsets(scene, s.points[p], trials[cal].t_ba_s, trials[cal].t_cb_s);
    std::vector<TimeDifference> rest;
    for (std::size_t t = 0; t < trials.size(); ++t)
      if (t != cal)
        rest.push_back({trials[t].t_ba_s, trials[t].t_cb_s});
    const CorrectionResult r =
        differential_correction(scene, {{off[0]}, {off[1]}}, rest, feasibility_tolerance(scene.c, s.signal.chip_duration()),
                                s.points[p], substream_seed(s.seed, {p, kStreamCalibration, 1}));
    out.push_back({s.points[p], *r.uncorrected_rmse_m, *r.corrected_rmse_m});
  }
  return out;
}

namespace
{

std::string num(double v)
{
  if (std::isnan(v))
    return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

} // namespace

void write_campaign_json(std::ostream& os, const CampaignSpec& spec, const CampaignResult& result)
{
  using nlohmann::ordered_json;
  ordered_json j;
  j["schema"] = kCampaignSchema;
  ordered_json meta;
  meta["seed"] = result.seed;
  meta["config_hash"] = spec.config_hash;
  meta["trials_per_point"] = result.trials_per_point;
  meta["clock_mode"] = to_string(spec.clock_mode);
  meta["anchors_m"] = {{spec.scene.tx_a.x(), spec.scene.tx_a.y()},
                       {spec.scene.tx_b.x(), spec.scene.tx_b.y()},
                       {spec.scene.tx_c.x(), spec.scene.tx_c.y()}};
  meta["power_w"] = spec.budget.power_w;
  meta["lambda_b"] = spec.budget.lambda_b;
  meta["lambda_clip"] = spec.budget.lambda_clip;
  meta["detector_efficiency"] = spec.budget.detector_efficiency;
  meta["sequence_length"] = spec.signal.length();
  meta["chips_per_symbol"] = spec.signal.chips_per_symbol;
  meta["symbol_rate_hz"] = spec.signal.symbol_rate_hz;
  meta["slot_interval_s"] = spec.signal.slot_interval_s;
  meta["clock_variance_s2"] = clock_variance(spec.clock);
  j["metadata"] = meta;

  ordered_json pts = ordered_json::array();
  for (std::size_t i = 0; i < result.points.size(); ++i)
  {
    const auto& p = result.points[i];
    ordered_json e;
    e["index"] = i;
    e["x_m"] = p.position.x();
    e["y_m"] = p.position.y();
    e["inside_triangle"] = p.inside;
    e["lambda_s"] = {p.lambda_s[0], p.lambda_s[1], p.lambda_s[2]};
    e["rmse_m"] = p.rmse_m;
    e["mean_error_m"] = p.mean_error_m;
    if (std::isfinite(p.theory_e_p_m))
      e["theory_e_p_m"] = p.theory_e_p_m;
    else
      e["theory_e_p_m"] = nullptr;
    e["solver_failures"] = p.failures;
    e["clamped_measurements"] = p.clamped;
    pts.push_back(std::move(e));
  }
  j["points"] = std::move(pts);
  ordered_json summary;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  summary["average_rmse_m"] = finite_or_null(result.average_rmse(false));
  summary["average_theory_m"] = finite_or_null(result.average_theory(false));
  summary["average_rmse_inside_m"] = finite_or_null(result.average_rmse(true));
  summary["average_theory_inside_m"] = finite_or_null(result.average_theory(true));
  j["summary"] = summary;
  os << j.dump(2) << '\n';
}

void write_trials_csv(std::ostream& os, const CampaignSpec& spec, const CampaignResult& result)
{
  os << "# schema=uvtdoa.trials/1 config_hash=" << spec.config_hash << " seed=" << result.seed << '\n';
  os << "point,trial,truth_x_m,truth_y_m,clock_a_s,clock_b_s,clock_c_s,eps_s,chip_a,chip_b,chip_c,"
        "t_ba_s,t_cb_s,est_x_m,est_y_m,residual_m,iterations,converged,clamped,error_m\n";
  for (const auto& r : result.trials)
  {
    const Point2& truth = result.points.at(r.point).position;
    os << r.point << ',' << r.trial << ',' << num(truth.x()) << ',' << num(truth.y()) << ','
       << num(r.clock_offsets_s[0]) << ',' << num(r.clock_offsets_s[1]) << ',' << num(r.clock_offsets_s[2]) << ','
       << num(r.eps_s) << ',' << r.start_chip[0] << ',' << r.start_chip[1] << ',' << r.start_chip[2] << ','
       << num(r.t_ba_s) << ',' << num(r.t_cb_s) << ',' << num(r.fix.position.x()) << ',' << num(r.fix.position.y())
       << ',' << num(r.fix.residual_norm) << ',' << r.fix.iterations << ',' << (r.fix.converged ? 1 : 0) << ','
       << (r.clamped ? 1 : 0) << ',' << num(r.error_m) << '\n';
  }
}

} // namespace uvtdoa
