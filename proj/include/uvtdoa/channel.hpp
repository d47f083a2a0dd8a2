#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "uvtdoa/rng.hpp"
#include "uvtdoa/scene.hpp"

namespace uvtdoa
{

inline constexpr double kPlanck = 6.62607015e-34;

/// Transmitter/receiver link parameters. Rates are photoelectrons per symbol.
struct LinkBudget
{
  double power_w = 0.1;
  double rx_area_m2 = 1.77e-4;
  double divergence_full_angle_rad = 2.0943951023931953; // 120 deg
  double wavelength_m = 266e-9;
  double detector_efficiency = 0.15;
  double lambda_b = 1.0;
  double lambda_clip = 100.0;

  void validate() const;
};

using Sequence = std::vector<std::uint8_t>;

/// Time-division pilot parameters shared by the three anchors.
struct SignalParams
{
  Sequence sequence;
  double symbol_rate_hz = 1e6;
  int chips_per_symbol = 100;
  double slot_interval_s = 300e-6;
  // Per-anchor signal rates (photoelectrons/symbol); see fill_signal_rates().
  double lambda_s_a = 0.0;
  double lambda_s_b = 0.0;
  double lambda_s_c = 0.0;
  // Chips searched before each slot's nominal transmit instant. Defaults to one symbol.
  std::optional<int> guard_chips;

  void validate() const;

  std::size_t length() const { return sequence.size(); }
  double symbol_duration() const { return 1.0 / symbol_rate_hz; }
  double chip_duration() const { return 1.0 / (symbol_rate_hz * chips_per_symbol); }
  std::size_t pilot_chips() const { return sequence.size() * static_cast<std::size_t>(chips_per_symbol); }
  std::size_t slot_chips() const;
  std::size_t guard() const { return static_cast<std::size_t>(guard_chips.value_or(chips_per_symbol)); }
  std::array<double, 3> lambda_s() const { return {lambda_s_a, lambda_s_b, lambda_s_c}; }
};

/// Chip index layout of a rendered three-slot frame. Slot i's nominal transmit
/// instant is t = i * T, which falls on chip slot_start(i).
struct FrameLayout
{
  std::size_t guard = 0;
  std::size_t slot_chips = 0;
  std::size_t total_chips = 0;
  double chip_duration_s = 0.0;
  double origin_time_s = 0.0;

  std::size_t slot_start(int slot) const { return guard + static_cast<std::size_t>(slot) * slot_chips; }
};

FrameLayout frame_layout(const SignalParams& params);

/// Per-chip photoelectron counts.
struct ChipTrace
{
  std::vector<std::uint32_t> counts;
  double chip_duration_s = 0.0;
  double origin_time_s = 0.0;

  bool operator==(const ChipTrace&) const = default;
};

// Unclipped line-of-sight rate: eta * (P*T_s/E_photon) * A_r / (Omega d^2).
double los_photon_rate_unclipped(const LinkBudget& budget, double distance_m, double symbol_duration_s);

// Same, clipped at budget.lambda_clip. Throws on distance_m <= 0.
double los_photon_rate(const LinkBudget& budget, double distance_m, double symbol_duration_s);

// Sets params.lambda_s_{a,b,c} from the link budget at the scene's receiver position.
void fill_signal_rates(SignalParams& params, const Scene& scene, const LinkBudget& budget);

/// Adds the pilot's per-chip signal mean to `chip_means`. The pilot starts at
/// `arrival_s` (same time base as `origin_s`, the start of chip 0); a chip
/// partially covered by "on" symbols receives the covered fraction of
/// lambda_s / n.
void add_pilot_means(std::span<double> chip_means, double origin_s, double chip_s, double arrival_s,
                     const Sequence& sequence, int chips_per_symbol, double lambda_s);

// Draws independent Poisson counts with the given per-chip means.
void sample_poisson_counts(std::span<const double> chip_means, Rng& rng, std::span<std::uint32_t> out);

/// Pilot delay (seconds after the slot's nominal transmit instant) for each anchor.
std::array<double, 3> pilot_delays(const Scene& scene, const std::array<double, 3>& clock_offsets_s, double frac_offset_eps);

/// Renders the three time-division slots. Anchor i's pilot reaches the receiver
/// at i*T + clock_offsets_s[i] + r_i/c + frac_offset_eps. Background lambda_b/n
/// per chip everywhere. Throws std::invalid_argument if a delayed pilot would
/// leave its slot's search region.
ChipTrace render_frame(const Scene& scene, const SignalParams& params, const LinkBudget& budget,
                       const std::array<double, 3>& clock_offsets_s, double frac_offset_eps, std::uint64_t rng_seed);

// Little-endian binary layout, see docs/formats.md.
void write_trace_binary(std::ostream& os, const ChipTrace& trace);
ChipTrace read_trace_binary(std::istream& is);
void write_trace_csv(std::ostream& os, const ChipTrace& trace);

} // namespace uvtdoa
