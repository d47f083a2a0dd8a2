#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "uvtdoa/channel.hpp"

namespace uvtdoa
{

/// Half-open range of candidate start chips [first, first + count).
struct SearchWindow
{
  std::size_t first = 0;
  std::size_t count = 0;
};

struct SyncResult
{
  std::array<std::size_t, 3> start_chip{}; // absolute trace indices for A, B, C
  std::array<std::int64_t, 3> peak_score{};
  std::array<SearchWindow, 3> window{};
};

struct ArrivalTimes
{
  double t_a = 0.0;
  double t_b = 0.0;
  double t_c = 0.0;

  double t_ba() const { return t_b - t_a; }
  double t_cb() const { return t_c - t_b; }
};

/// Maximal-length LFSR sequence of the smallest degree whose period covers L,
/// truncated to L. The seed selects the starting phase; phases are advanced
/// until the window has ones-count within sqrt(L) of L/2 and every aperiodic
/// on/off-versus-bipolar correlation sidelobe is below the mainlobe.
Sequence generate_pilot(std::size_t length_l, std::uint64_t seed);

// Feedback taps (1-based bit positions) of the primitive polynomial used for `degree`.
std::span<const int> lfsr_taps(int degree);

// Full period of the Fibonacci LFSR for `degree`, from state 1.
std::vector<std::uint8_t> msequence(int degree, std::uint32_t initial_state);

// Correlator response sum_i s_{i+shift} (2 s_i - 1), with s zero outside [0, L).
std::int64_t pilot_response(const Sequence& seq, std::ptrdiff_t shift);

/// score[t] = sum_i u_i^t (2 s_i - 1), u_i^t = sum_{j<n} counts[t + n i + j], for t in the window.
/// Exact integer arithmetic. Throws std::out_of_range if the window overruns the trace.
std::vector<std::int64_t> correlate(std::span<const std::uint32_t> counts, const Sequence& sequence, int chips_per_symbol,
                                    SearchWindow window);

// Index of the maximum score; ties go to the smallest index. Throws on empty input.
std::size_t estimate_start(std::span<const std::int64_t> scores);

// Candidate-start window for each anchor slot of a frame rendered with `params`.
SearchWindow slot_window(const SignalParams& params, int slot);

SyncResult synchronize(const ChipTrace& trace, const SignalParams& params);

/// Slot-relative arrival times: (start chip - slot's nominal transmit chip) * T_c.
/// Their differences are the flying-time differences t_BA and t_CB.
ArrivalTimes arrival_times(const SyncResult& sync, const SignalParams& params);

// 0/1 text line (no separators).
std::string pilot_to_text(const Sequence& seq);
Sequence pilot_from_text(const std::string& line);

} // namespace uvtdoa
