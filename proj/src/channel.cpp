#include "uvtdoa/channel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace uvtdoa
{

void LinkBudget::validate() const
{
  if (!(power_w > 0.0))
    throw std::invalid_argument("link budget: power must be positive");
  if (!(rx_area_m2 > 0.0))
    throw std::invalid_argument("link budget: receiver area must be positive");
  if (!(divergence_full_angle_rad > 0.0 && divergence_full_angle_rad < M_PI))
    throw std::invalid_argument("link budget: divergence must lie in (0, pi)");
  if (!(wavelength_m > 0.0))
    throw std::invalid_argument("link budget: wavelength must be positive");
  if (!(detector_efficiency > 0.0 && detector_efficiency <= 1.0))
    throw std::invalid_argument("link budget: detector efficiency must lie in (0, 1]");
  if (!(lambda_b >= 0.0))
    throw std::invalid_argument("link budget: lambda_b must be non-negative");
  if (!(lambda_clip > 0.0))
    throw std::invalid_argument("link budget: lambda_clip must be positive");
}

void SignalParams::validate() const
{
  if (sequence.size() < 2)
    throw std::invalid_argument("signal: pilot length must be >= 2");
  if (chips_per_symbol < 1)
    throw std::invalid_argument("signal: chips per symbol must be >= 1");
  if (!(symbol_rate_hz > 0.0))
    throw std::invalid_argument("signal: symbol rate must be positive");
  if (guard_chips && *guard_chips < 1)
    throw std::invalid_argument("signal: guard must be at least one chip");
  const double pilot_s = static_cast<double>(sequence.size()) * symbol_duration();
  if (!(slot_interval_s >= pilot_s))
    throw std::invalid_argument("signal: slot interval shorter than the pilot");
  const double slots = slot_interval_s / chip_duration();
  if (std::abs(slots - std::round(slots)) > 1e-6)
    throw std::invalid_argument("signal: slot interval must be a whole number of chips");
  if (slot_chips() < pilot_chips() + guard() + 1)
    throw std::invalid_argument("signal: slot leaves no room for the search window");
  for (double l : lambda_s())
    if (!(l >= 0.0 && std::isfinite(l)))
      throw std::invalid_argument("signal: lambda_s must be finite and non-negative");
}

std::size_t SignalParams::slot_chips() const
{
  return static_cast<std::size_t>(std::llround(slot_interval_s / chip_duration()));
}

FrameLayout frame_layout(const SignalParams& params)
{
  FrameLayout f;
  f.guard = params.guard();
  f.slot_chips = params.slot_chips();
  f.total_chips = f.guard + 3 * f.slot_chips;
  f.chip_duration_s = params.chip_duration();
  f.origin_time_s = -static_cast<double>(f.guard) * f.chip_duration_s;
  return f;
}

double los_photon_rate_unclipped(const LinkBudget& budget, double distance_m, double symbol_duration_s)
{
  if (!(distance_m > 0.0))
    throw std::invalid_argument("los_photon_rate: distance must be positive");
  const double photon_energy = kPlanck * kSpeedOfLight / budget.wavelength_m;
  const double photons_per_symbol = budget.power_w * symbol_duration_s / photon_energy;
  const double solid_angle = 2.0 * M_PI * (1.0 - std::cos(0.5 * budget.divergence_full_angle_rad));
  return budget.detector_efficiency * photons_per_symbol * budget.rx_area_m2 / (solid_angle * distance_m * distance_m);
}

double los_photon_rate(const LinkBudget& budget, double distance_m, double symbol_duration_s)
{
  return std::min(budget.lambda_clip, los_photon_rate_unclipped(budget, distance_m, symbol_duration_s));
}

void fill_signal_rates(SignalParams& params, const Scene& scene, const LinkBudget& budget)
{
  const Ranges r = ranges(scene, scene.rx_true);
  const double ts = params.symbol_duration();
  params.lambda_s_a = los_photon_rate(budget, r.r1, ts);
  params.lambda_s_b = los_photon_rate(budget, r.r2, ts);
  params.lambda_s_c = los_photon_rate(budget, r.r3, ts);
}

void add_pilot_means(std::span<double> chip_means, double origin_s, double chip_s, double arrival_s,
                     const Sequence& sequence, int chips_per_symbol, double lambda_s)
{
  if (lambda_s <= 0.0 || chip_means.empty())
    return;
  const double symbol_s = chip_s * chips_per_symbol;
  const double per_chip = lambda_s / chips_per_symbol;
  const auto n_chips = static_cast<std::ptrdiff_t>(chip_means.size());

  std::size_t k = 0;
  while (k < sequence.size())
  {
    if (!sequence[k])
    {
      ++k;
      continue;
    }
    std::size_t end = k;
    while (end < sequence.size() && sequence[end])
      ++end;
    // "On" run covers [u, v) in seconds, i.e. [a, b) in fractional chip units.
    const double u = arrival_s + static_cast<double>(k) * symbol_s;
    const double v = arrival_s + static_cast<double>(end) * symbol_s;
    const double a = (u - origin_s) / chip_s;
    const double b = (v - origin_s) / chip_s;
    const auto first = static_cast<std::ptrdiff_t>(std::floor(a));
    const auto last = static_cast<std::ptrdiff_t>(std::ceil(b)) - 1;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(first, 0); j <= std::min(last, n_chips - 1); ++j)
    {
      const double lo = std::max(a, static_cast<double>(j));
      const double hi = std::min(b, static_cast<double>(j + 1));
      if (j > first && j < last)
        chip_means[static_cast<std::size_t>(j)] += per_chip;
      else if (hi > lo)
        chip_means[static_cast<std::size_t>(j)] += per_chip * (hi - lo);
    }
    k = end;
  }
}

void sample_poisson_counts(std::span<const double> chip_means, Rng& rng, std::span<std::uint32_t> out)
{
  if (out.size() != chip_means.size())
    throw std::invalid_argument("sample_poisson_counts: size mismatch");
  double cached_mean = -1.0;
  std::poisson_distribution<std::uint32_t> dist(1.0);
  for (std::size_t i = 0; i < chip_means.size(); ++i)
  {
    const double mean = chip_means[i];
    if (!(mean > 0.0))
    {
      out[i] = 0;
      continue;
    }
    if (mean != cached_mean)
    {
      dist = std::poisson_distribution<std::uint32_t>(mean);
      cached_mean = mean;
    }
    out[i] = dist(rng);
  }
}

std::array<double, 3> pilot_delays(const Scene& scene, const std::array<double, 3>& clock_offsets_s, double frac_offset_eps)
{
  const Ranges r = ranges(scene, scene.rx_true);
  return {clock_offsets_s[0] + r.r1 / scene.c + frac_offset_eps,
          clock_offsets_s[1] + r.r2 / scene.c + frac_offset_eps,
          clock_offsets_s[2] + r.r3 / scene.c + frac_offset_eps};
}

ChipTrace render_frame(const Scene& scene, const SignalParams& params, const LinkBudget& budget,
                       const std::array<double, 3>& clock_offsets_s, double frac_offset_eps, std::uint64_t rng_seed)
{
  params.validate();
  budget.validate();
  const FrameLayout layout = frame_layout(params);
  const double tc = layout.chip_duration_s;
  const double pilot_s = static_cast<double>(params.length()) * params.symbol_duration();
  const double earliest = -static_cast<double>(layout.guard - 1) * tc;
  const double latest = params.slot_interval_s - pilot_s - static_cast<double>(layout.guard + 1) * tc;

  const auto delays = pilot_delays(scene, clock_offsets_s, frac_offset_eps);
  for (int i = 0; i < 3; ++i)
  {
    if (!(delays[i] >= earliest && delays[i] <= latest))
      throw std::invalid_argument("render_frame: pilot of anchor " + std::string(1, static_cast<char>('A' + i)) +
                                  " would overlap an adjacent slot (delay " + std::to_string(delays[i]) + " s)");
  }

  std::vector<double> means(layout.total_chips, budget.lambda_b / params.chips_per_symbol);
  const auto lambda_s = params.lambda_s();
  for (int i = 0; i < 3; ++i)
  {
    const double arrival = static_cast<double>(i) * params.slot_interval_s + delays[i];
    add_pilot_means(means, layout.origin_time_s, tc, arrival, params.sequence, params.chips_per_symbol, lambda_s[i]);
  }

  ChipTrace trace;
  trace.chip_duration_s = tc;
  trace.origin_time_s = layout.origin_time_s;
  trace.counts.resize(layout.total_chips);
  Rng rng = make_rng(rng_seed);
  sample_poisson_counts(means, rng, trace.counts);
  return trace;
}

namespace
{

constexpr char kTraceMagic[4] = {'U', 'V', 'C', 'T'};
constexpr std::uint32_t kTraceVersion = 1;

template <typename T>
void put_le(std::ostream& os, T value)
{
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is)
{
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw std::runtime_error("chip trace: truncated input");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

} // namespace

void write_trace_binary(std::ostream& os, const ChipTrace& trace)
{
  os.write(kTraceMagic, sizeof(kTraceMagic));
  put_le<std::uint32_t>(os, kTraceVersion);
  put_le<double>(os, trace.chip_duration_s);
  put_le<double>(os, trace.origin_time_s);
  put_le<std::uint64_t>(os, trace.counts.size());
  for (std::uint32_t c : trace.counts)
    put_le<std::uint32_t>(os, c);
}

ChipTrace read_trace_binary(std::istream& is)
{
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kTraceMagic))
    throw std::runtime_error("chip trace: bad magic");
  if (get_le<std::uint32_t>(is) != kTraceVersion)
    throw std::runtime_error("chip trace: unsupported version");
  ChipTrace t;
  t.chip_duration_s = get_le<double>(is);
  t.origin_time_s = get_le<double>(is);
  const auto n = get_le<std::uint64_t>(is);
  t.counts.resize(n);
  for (auto& c : t.counts)
    c = get_le<std::uint32_t>(is);
  return t;
}

void write_trace_csv(std::ostream& os, const ChipTrace& trace)
{
  os << "chip,time_s,count\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.counts.size(); ++i)
  {
    const double t = trace.origin_time_s + static_cast<double>(i) * trace.chip_duration_s;
    std::snprintf(buf, sizeof(buf), "%.12g", t);
    os << i << ',' << buf << ',' << trace.counts[i] << '\n';
  }
}

} // namespace uvtdoa
