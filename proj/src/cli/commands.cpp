#include "uvtdoa/cli/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "uvtdoa/cli/config.hpp"
#include "uvtdoa/cli/replay.hpp"
#include "uvtdoa/errortheory.hpp"
#include "uvtdoa/montecarlo.hpp"
#include "uvtdoa/sync.hpp"

namespace uvtdoa::cli
{

namespace
{

using nlohmann::ordered_json;

std::string num(double v)
{
  return fmt::format("{:.17g}", v);
}

ordered_json json_num(double v)
{
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

std::string opt_num(const std::optional<double>& v)
{
  return v ? num(*v) : std::string();
}

Config load(const CommandOptions& opt)
{
  if (opt.config_path.empty())
    throw ConfigError("no configuration given (--config PATH)");
  Config cfg = load_config(opt.config_path);
  if (opt.seed)
    cfg.seed = *opt.seed;
  if (opt.workers)
  {
    if (*opt.workers < 1)
      throw ConfigError("--workers must be >= 1");
    cfg.workers = *opt.workers;
  }
  return cfg;
}

std::ofstream open_output(const CommandOptions& opt, const std::string& name)
{
  std::error_code ec;
  std::filesystem::create_directories(opt.out_dir, ec);
  const std::filesystem::path path = std::filesystem::path(opt.out_dir) / name;
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot write '" + path.string() + "'");
  return os;
}

void close_output(std::ofstream& os, const std::string& name)
{
  os.close();
  if (!os)
    throw IoError("failed writing '" + name + "'");
}

std::ifstream open_input(const std::string& path, const char* what)
{
  if (path.empty())
    throw ConfigError(std::string("no ") + what + " file given");
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(std::string("cannot open ") + what + " file '" + path + "'");
  return in;
}

std::string header_comment(const char* schema, const Config& cfg)
{
  return fmt::format("# schema={} config_hash={} seed={}\n", schema, config_hash(cfg), cfg.seed);
}

ordered_json json_header(const char* schema, const Config& cfg)
{
  ordered_json j;
  j["schema"] = schema;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  return j;
}

double average(const std::vector<double>& v)
{
  if (v.empty())
    return std::nan("");
  double s = 0.0;
  for (double x : v)
    s += x;
  return s / static_cast<double>(v.size());
}

// Maps exceptions onto exit codes.
int guarded(std::ostream& err, const std::function<int()>& body)
{
  try
  {
    return body();
  }
  catch (const ConfigError& e)
  {
    fmt::print(err, "config error: {}\n", e.what());
    return kExitConfig;
  }
  catch (const IoError& e)
  {
    fmt::print(err, "I/O error: {}\n", e.what());
    return kExitIo;
  }
  catch (const LogError& e)
  {
    fmt::print(err, "log error: {}\n", e.what());
    return kExitIo;
  }
  catch (const SingularGeometryError& e)
  {
    fmt::print(err, "numerical failure: {} (condition number {:.3g})\n", e.what(), e.condition_number());
    return kExitNumerical;
  }
  catch (const std::invalid_argument& e)
  {
    fmt::print(err, "invalid parameters: {}\n", e.what());
    return kExitConfig;
  }
  catch (const std::exception& e)
  {
    fmt::print(err, "numerical failure: {}\n", e.what());
    return kExitNumerical;
  }
}

} // namespace

int cmd_theory(const CommandOptions& opt, std::ostream& out, std::ostream& err)
{
  return guarded(err, [&] {
    const Config cfg = load(opt);
    const auto pts =
        theory_points(cfg.scene, cfg.receiver_points(), cfg.budget, cfg.signal, cfg.clock, cfg.theory);
    std::vector<double> all, inside;
    int singular = 0;
    for (const auto& p : pts)
    {
      if (p.singular)
      {
        ++singular;
        continue;
      }
      all.push_back(p.e_p);
      if (p.inside)
        inside.push_back(p.e_p);
    }

    if (opt.format == "json")
    {
      ordered_json j = json_header("uvtdoa.theory/1", cfg);
      ordered_json arr = ordered_json::array();
      for (const auto& p : pts)
        arr.push_back({{"x_m", p.position.x()},
                       {"y_m", p.position.y()},
                       {"e_p_m", json_num(p.e_p)},
                       {"condition_number", json_num(p.condition_number)},
                       {"inside_triangle", p.inside},
                       {"singular", p.singular}});
      j["points"] = std::move(arr);
      j["summary"] = {{"points", pts.size()},
                      {"singular", singular},
                      {"average_e_p_m", json_num(average(all))},
                      {"inside_points", inside.size()},
                      {"average_e_p_inside_m", json_num(average(inside))}};
      auto os = open_output(opt, "theory.json");
      os << j.dump(2) << '\n';
      close_output(os, "theory.json");
    }
    else
    {
      auto os = open_output(opt, "theory.csv");
      os << header_comment("uvtdoa.theory/1", cfg);
      os << "x_m,y_m,e_p_m,condition_number,inside,singular\n";
      for (const auto& p : pts)
        fmt::print(os, "{},{},{},{},{},{}\n", num(p.position.x()), num(p.position.y()), num(p.e_p),
                   num(p.condition_number), p.inside ? 1 : 0, p.singular ? 1 : 0);
      close_output(os, "theory.csv");
    }

    fmt::print(out, "theory: points={} singular={} average_e_p_m={:.4f} inside_points={} average_e_p_inside_m={:.4f}\n",
               pts.size(), singular, average(all), inside.size(), average(inside));
    if (all.empty())
    {
      fmt::print(err, "numerical failure: geometry matrix singular at every point\n");
      return kExitNumerical;
    }
    return kExitOk;
  });
}

int cmd_simulate(const CommandOptions& opt, std::ostream& out, std::ostream& err)
{
  return guarded(err, [&] {
    const Config cfg = load(opt);
    const CampaignSpec spec = campaign_spec(cfg);
    const CampaignResult r = run_campaign(spec);
    {
      auto os = open_output(opt, "campaign.json");
      write_campaign_json(os, spec, r);
      close_output(os, "campaign.json");
    }
    {
      auto os = open_output(opt, "trials.csv");
      write_trials_csv(os, spec, r);
      close_output(os, "trials.csv");
    }
    int failures = 0, clamped = 0;
    for (const auto& p : r.points)
    {
      failures += p.failures;
      clamped += p.clamped;
    }
    fmt::print(out,
               "simulate: points={} trials_per_point={} clock_mode={} average_rmse_m={:.4f} average_theory_m={:.4f} "
               "average_rmse_inside_m={:.4f} average_theory_inside_m={:.4f} solver_failures={} clamped={} "
               "wall_time_s={:.2f}\n",
               r.points.size(), r.trials_per_point, to_string(spec.clock_mode), r.average_rmse(false),
               r.average_theory(false), r.average_rmse(true), r.average_theory(true), failures, clamped,
               r.wall_time_s);
    return kExitOk;
  });
}

int cmd_sweep(const CommandOptions& opt, std::ostream& out, std::ostream& err)
{
  return guarded(err, [&] {
    const Config cfg = load(opt);
    const auto powers = opt.powers_w.empty() ? cfg.sweep_powers_w : opt.powers_w;
    for (double p : powers)
      if (!(p > 0.0))
        throw ConfigError("sweep powers must be positive");
    const auto rows = power_sweep(campaign_spec(cfg), powers);
    if (opt.format == "json")
    {
      ordered_json j = json_header("uvtdoa.sweep/1", cfg);
      ordered_json arr = ordered_json::array();
      for (const auto& r : rows)
        arr.push_back({{"power_w", r.power_w},
                       {"sim_avg_m", json_num(r.sim_avg_m)},
                       {"theory_avg_m", json_num(r.theory_avg_m)},
                       {"sim_avg_inside_m", json_num(r.sim_avg_inside_m)},
                       {"theory_avg_inside_m", json_num(r.theory_avg_inside_m)}});
      j["rows"] = std::move(arr);
      auto os = open_output(opt, "sweep.json");
      os << j.dump(2) << '\n';
      close_output(os, "sweep.json");
    }
    else
    {
      auto os = open_output(opt, "sweep.csv");
      os << header_comment("uvtdoa.sweep/1", cfg);
      os << "power_w,sim_avg_m,theory_avg_m,sim_avg_inside_m,theory_avg_inside_m\n";
      for (const auto& r : rows)
        fmt::print(os, "{},{},{},{},{}\n", num(r.power_w), num(r.sim_avg_m), num(r.theory_avg_m),
                   num(r.sim_avg_inside_m), num(r.theory_avg_inside_m));
      close_output(os, "sweep.csv");
    }
    for (const auto& r : rows)
      fmt::print(out, "sweep: power_w={:g} sim_avg_m={:.4f} theory_avg_m={:.4f} sim_avg_inside_m={:.4f} "
                      "theory_avg_inside_m={:.4f}\n",
                 r.power_w, r.sim_avg_m, r.theory_avg_m, r.sim_avg_inside_m, r.theory_avg_inside_m);
    return kExitOk;
  });
}

int cmd_replay(const CommandOptions& opt, std::ostream& out, std::ostream& err)
{
  return guarded(err, [&] {
    const Config cfg = load(opt);
    auto in = open_input(opt.log_path, "log");
    const LogParse log = parse_log(in);
    for (const auto& d : log.diagnostics)
      fmt::print(err, "replay: {}\n", d);
    const auto fixes = replay_frames(cfg.scene, log.frames, cfg.replay_tolerance(), cfg.solver);
    const auto stats = cluster_stats(fixes, cfg.cluster_min_separation_m);

    double max_dev = 0.0;
    int compared = 0;
    for (const auto& f : fixes)
      if (f.record.recorded_fix)
      {
        max_dev = std::max(max_dev, (f.fix.position - *f.record.recorded_fix).norm());
        ++compared;
      }

    if (opt.format == "json")
    {
      ordered_json j = json_header("uvtdoa.replay/1", cfg);
      ordered_json arr = ordered_json::array();
      for (const auto& f : fixes)
      {
        ordered_json e{{"session", f.record.session},
                       {"frame", f.record.frame},
                       {"timestamp_s", f.record.timestamp_s},
                       {"t_ba_s", f.record.t_ba_s},
                       {"t_cb_s", f.record.t_cb_s},
                       {"est_x_m", f.fix.position.x()},
                       {"est_y_m", f.fix.position.y()},
                       {"residual_m", f.fix.residual_norm},
                       {"converged", f.fix.converged},
                       {"clamped", f.measurement.clamped}};
        if (f.record.truth)
          e["error_m"] = (f.fix.position - *f.record.truth).norm();
        arr.push_back(std::move(e));
      }
      j["fixes"] = std::move(arr);
      ordered_json cl = ordered_json::array();
      for (const auto& s : stats)
      {
        ordered_json e{{"session", s.session},
                       {"count", s.count},
                       {"mean_x_m", s.mean.x()},
                       {"mean_y_m", s.mean.y()},
                       {"spread_m", s.spread_m},
                       {"clusters", s.clusters},
                       {"separation_m", s.separation_m}};
        if (s.mean_to_truth_m)
        {
          e["mean_to_truth_m"] = *s.mean_to_truth_m;
          e["rmse_m"] = *s.rmse_m;
        }
        cl.push_back(std::move(e));
      }
      j["clusters"] = std::move(cl);
      auto os = open_output(opt, "replay.json");
      os << j.dump(2) << '\n';
      close_output(os, "replay.json");
    }
    else
    {
      auto os = open_output(opt, "fixes.csv");
      os << header_comment("uvtdoa.fixes/1", cfg);
      os << "session,frame,timestamp_s,t_ba_s,t_cb_s,est_x_m,est_y_m,residual_m,iterations,converged,clamped,"
            "truth_x_m,truth_y_m,error_m\n";
      for (const auto& f : fixes)
      {
        const auto& t = f.record.truth;
        fmt::print(os, "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", f.record.session, f.record.frame,
                   num(f.record.timestamp_s), num(f.record.t_ba_s), num(f.record.t_cb_s), num(f.fix.position.x()),
                   num(f.fix.position.y()), num(f.fix.residual_norm), f.fix.iterations, f.fix.converged ? 1 : 0,
                   f.measurement.clamped ? 1 : 0, t ? num(t->x()) : "", t ? num(t->y()) : "",
                   t ? num((f.fix.position - *t).norm()) : "");
      }
      close_output(os, "fixes.csv");

      auto cs = open_output(opt, "clusters.csv");
      cs << header_comment("uvtdoa.clusters/1", cfg);
      cs << "session,count,mean_x_m,mean_y_m,spread_m,truth_x_m,truth_y_m,mean_to_truth_m,rmse_m,clusters,"
            "separation_m\n";
      for (const auto& s : stats)
        fmt::print(cs, "{},{},{},{},{},{},{},{},{},{},{}\n", s.session, s.count, num(s.mean.x()), num(s.mean.y()),
                   num(s.spread_m), s.truth ? num(s.truth->x()) : "", s.truth ? num(s.truth->y()) : "",
                   opt_num(s.mean_to_truth_m), opt_num(s.rmse_m), s.clusters, num(s.separation_m));
      close_output(cs, "clusters.csv");
    }

    int two = 0;
    for (const auto& s : stats)
      two += s.clusters == 2 ? 1 : 0;
    fmt::print(out, "replay: format={} lines={} frames={} malformed={} non_monotone={} incomplete={} sessions={} "
                    "two_cluster_sessions={}",
               log.trials_format ? "trials" : "detections", log.data_lines, fixes.size(), log.malformed,
               log.non_monotone, log.incomplete, stats.size(), two);
    if (compared > 0)
      fmt::print(out, " recorded_fixes={} max_deviation_m={:.3g}", compared, max_dev);
    fmt::print(out, "\n");
    return kExitOk;
  });
}

int cmd_diffcal(const CommandOptions& opt, std::ostream& out, std::ostream& err)
{
  return guarded(err, [&] {
    const Config cfg = load(opt);
    auto cal_in = open_input(opt.calibration_path, "calibration log");
    auto log_in = open_input(opt.log_path, "log");
    const LogParse cal_log = parse_log(cal_in);
    const LogParse log = parse_log(log_in);
    for (const auto& d : cal_log.diagnostics)
      fmt::print(err, "diffcal: calibration {}\n", d);
    for (const auto& d : log.diagnostics)
      fmt::print(err, "diffcal: log {}\n", d);

    // Calibration frames per session.
    std::map<std::string, std::vector<FrameRecord>> cal_by_session;
    for (const auto& f : cal_log.frames)
      cal_by_session[f.session].push_back(f);
    std::vector<std::string> sessions;
    std::map<std::string, std::vector<FrameRecord>> by_session;
    for (const auto& f : log.frames)
    {
      if (!by_session.count(f.session))
        sessions.push_back(f.session);
      by_session[f.session].push_back(f);
    }

    auto os = open_output(opt, "corrected.csv");
    os << header_comment("uvtdoa.corrected/1", cfg);
    os << "session,frame,raw_x_m,raw_y_m,corrected_x_m,corrected_y_m,ab_correction_s,cb_correction_s,truth_x_m,"
          "truth_y_m,raw_error_m,corrected_error_m\n";
    const double tol = cfg.replay_tolerance();
    int warnings = 0;
    for (std::size_t si = 0; si < sessions.size(); ++si)
    {
      const std::string& name = sessions[si];
      const auto& frames = by_session[name];
      CalibrationSet cal;
      const auto it = cal_by_session.find(name);
      if (it != cal_by_session.end())
        cal = calibration_from_frames(cfg.scene, it->second);
      std::optional<Point2> truth = frames.front().truth;
      for (const auto& f : frames)
        if (!f.truth || (truth && (*f.truth - *truth).norm() != 0.0))
          truth.reset();

      std::vector<TimeDifference> meas;
      for (const auto& f : frames)
        meas.push_back({f.t_ba_s, f.t_cb_s});

      CorrectionResult r;
      if (cal.ab_offsets_s.empty() && cal.cb_offsets_s.empty())
      {
        ++warnings;
        fmt::print(err, "diffcal: warning: no calibration with known position for session {}; output uncorrected\n",
                   name);
        r = differential_correction(cfg.scene, {{0.0}, {0.0}}, meas, tol, truth, 0);
        r.ab_correction_s.reset();
        r.cb_correction_s.reset();
      }
      else
      {
        r = differential_correction(cfg.scene, cal, meas, tol, truth, substream_seed(cfg.seed, {si}));
        for (const auto& w : r.warnings)
        {
          ++warnings;
          fmt::print(err, "diffcal: warning: session {}: {}\n", name, w);
        }
      }

      for (std::size_t k = 0; k < frames.size(); ++k)
      {
        const Point2 raw = r.uncorrected[k].position;
        const Point2 cor = r.corrected[k].position;
        const auto& t = frames[k].truth;
        fmt::print(os, "{},{},{},{},{},{},{},{},{},{},{},{}\n", name, frames[k].frame, num(raw.x()), num(raw.y()),
                   num(cor.x()), num(cor.y()), opt_num(r.ab_correction_s), opt_num(r.cb_correction_s),
                   t ? num(t->x()) : "", t ? num(t->y()) : "", t ? num((raw - *t).norm()) : "",
                   t ? num((cor - *t).norm()) : "");
      }
      fmt::print(out, "diffcal: session={} frames={} calibration_frames={} uncorrected_rmse_m={} corrected_rmse_m={}\n",
                 name, frames.size(), cal.ab_offsets_s.size(),
                 r.uncorrected_rmse_m ? fmt::format("{:.4f}", *r.uncorrected_rmse_m) : "n/a",
                 r.corrected_rmse_m ? fmt::format("{:.4f}", *r.corrected_rmse_m) : "n/a");
    }
    close_output(os, "corrected.csv");
    fmt::print(out, "diffcal: sessions={} warnings={}\n", sessions.size(), warnings);
    return kExitOk;
  });
}

int cmd_pilot(const CommandOptions& opt, std::ostream& out, std::ostream& err)
{
  return guarded(err, [&] {
    const Config cfg = load(opt);
    auto os = open_output(opt, "pilot.txt");
    os << pilot_to_text(cfg.signal.sequence) << '\n';
    close_output(os, "pilot.txt");
    fmt::print(out, "pilot: length={} ones={}\n", cfg.signal.length(),
               std::count(cfg.signal.sequence.begin(), cfg.signal.sequence.end(), std::uint8_t{1}));
    return kExitOk;
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Time-division UV photon-counting TDOA positioning toolkit", "uvtdoa"};
  app.require_subcommand(1);
  CommandOptions opt;
  std::uint64_t seed = 0;
  int workers = 0;
  std::vector<double> powers_mw;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "Configuration file (INI)")->required();
    sub->add_option("--seed", seed, "Override the campaign seed");
    sub->add_option("--out", opt.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--workers", workers, "Worker threads (results do not depend on it)");
    sub->add_option("--format", opt.format, "Tabular output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
  };

  using Command = int (*)(const CommandOptions&, std::ostream&, std::ostream&);
  std::vector<std::pair<CLI::App*, Command>> commands;
  auto* theory = app.add_subcommand("theory", "Analytical error map over the receiver grid");
  common(theory);
  commands.emplace_back(theory, cmd_theory);
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo campaign (JSON summary + per-trial CSV)");
  common(simulate);
  commands.emplace_back(simulate, cmd_simulate);
  auto* sweep = app.add_subcommand("sweep", "Average error versus transmit power");
  common(sweep);
  sweep->add_option("--powers-mw", powers_mw, "Transmit powers in mW (default: [campaign] sweep_powers)")
      ->delimiter(',');
  commands.emplace_back(sweep, cmd_sweep);
  auto* replay = app.add_subcommand("replay", "Re-solve logged detections or a per-trial CSV");
  common(replay);
  replay->add_option("--log", opt.log_path, "Detection log or per-trial CSV")->required();
  commands.emplace_back(replay, cmd_replay);
  auto* diffcal = app.add_subcommand("diffcal", "Differential clock correction of logged frames");
  common(diffcal);
  diffcal->add_option("--log", opt.log_path, "Frames to correct")->required();
  diffcal->add_option("--calibration", opt.calibration_path, "Frames taken at known positions")->required();
  commands.emplace_back(diffcal, cmd_diffcal);
  auto* pilot = app.add_subcommand("pilot", "Write the pilot sequence as a 0/1 text line");
  common(pilot);
  commands.emplace_back(pilot, cmd_pilot);

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  for (auto* sub : app.get_subcommands())
  {
    if (sub->count("--seed"))
      opt.seed = seed;
    if (sub->count("--workers"))
      opt.workers = workers;
    if (sub == sweep)
      for (double p : powers_mw)
        opt.powers_w.push_back(p * 1e-3);
    for (const auto& [app_ptr, fn] : commands)
      if (app_ptr == sub)
        return fn(opt, out, err);
  }
  return kExitConfig;
}

} // namespace uvtdoa::cli
