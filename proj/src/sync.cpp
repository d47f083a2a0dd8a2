#include "uvtdoa/sync.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uvtdoa
{

namespace
{

// Primitive trinomials/pentanomials, x^m + ... + 1, as 1-based tap positions.
constexpr int kTaps2[] = {2, 1};
constexpr int kTaps3[] = {3, 2};
constexpr int kTaps4[] = {4, 3};
constexpr int kTaps5[] = {5, 3};
constexpr int kTaps6[] = {6, 5};
constexpr int kTaps7[] = {7, 6};
constexpr int kTaps8[] = {8, 6, 5, 4};
constexpr int kTaps9[] = {9, 5};
constexpr int kTaps10[] = {10, 7};
constexpr int kTaps11[] = {11, 9};
constexpr int kTaps12[] = {12, 11, 10, 4};
constexpr int kTaps13[] = {13, 12, 11, 8};
constexpr int kTaps14[] = {14, 13, 12, 2};
constexpr int kTaps15[] = {15, 14};
constexpr int kTaps16[] = {16, 15, 13, 4};
constexpr int kTaps17[] = {17, 14};
constexpr int kTaps18[] = {18, 11};
constexpr int kTaps19[] = {19, 18, 17, 14};
constexpr int kTaps20[] = {20, 17};

constexpr int kMinDegree = 2;
constexpr int kMaxDegree = 20;

bool pilot_acceptable(const Sequence& seq)
{
  const auto len = static_cast<std::ptrdiff_t>(seq.size());
  const auto ones = std::count(seq.begin(), seq.end(), std::uint8_t{1});
  const double half = 0.5 * static_cast<double>(len);
  if (std::abs(static_cast<double>(ones) - half) > std::sqrt(static_cast<double>(len)))
    return false;
  const std::int64_t main = pilot_response(seq, 0);
  for (std::ptrdiff_t k = 1; k < len; ++k)
    if (pilot_response(seq, k) >= main || pilot_response(seq, -k) >= main)
      return false;
  return true;
}

} // namespace

std::span<const int> lfsr_taps(int degree)
{
  switch (degree)
  {
  case 2: return kTaps2;
  case 3: return kTaps3;
  case 4: return kTaps4;
  case 5: return kTaps5;
  case 6: return kTaps6;
  case 7: return kTaps7;
  case 8: return kTaps8;
  case 9: return kTaps9;
  case 10: return kTaps10;
  case 11: return kTaps11;
  case 12: return kTaps12;
  case 13: return kTaps13;
  case 14: return kTaps14;
  case 15: return kTaps15;
  case 16: return kTaps16;
  case 17: return kTaps17;
  case 18: return kTaps18;
  case 19: return kTaps19;
  case 20: return kTaps20;
  default: throw std::invalid_argument("lfsr_taps: unsupported degree " + std::to_string(degree));
  }
}

std::vector<std::uint8_t> msequence(int degree, std::uint32_t initial_state)
{
  const auto taps = lfsr_taps(degree);
  const std::uint32_t mask = (1u << degree) - 1u;
  std::uint32_t state = initial_state & mask;
  if (state == 0)
    throw std::invalid_argument("msequence: LFSR state must be non-zero");
  const std::size_t period = mask;
  std::vector<std::uint8_t> out(period);
  for (std::size_t i = 0; i < period; ++i)
  {
    out[i] = static_cast<std::uint8_t>(state & 1u);
    std::uint32_t bit = 0;
    for (int t : taps)
      bit ^= state >> (degree - t);
    state = ((state >> 1) | ((bit & 1u) << (degree - 1))) & mask;
  }
  return out;
}

std::int64_t pilot_response(const Sequence& seq, std::ptrdiff_t shift)
{
  const auto len = static_cast<std::ptrdiff_t>(seq.size());
  std::int64_t acc = 0;
  for (std::ptrdiff_t i = 0; i < len; ++i)
  {
    const std::ptrdiff_t j = i + shift;
    if (j < 0 || j >= len || !seq[static_cast<std::size_t>(j)])
      continue;
    acc += seq[static_cast<std::size_t>(i)] ? 1 : -1;
  }
  return acc;
}

Sequence generate_pilot(std::size_t length_l, std::uint64_t seed)
{
  if (length_l < 2)
    throw std::invalid_argument("generate_pilot: length must be >= 2");
  int degree = kMinDegree;
  while (degree <= kMaxDegree && ((std::size_t{1} << degree) - 1) < length_l)
    ++degree;
  if (degree > kMaxDegree)
    throw std::invalid_argument("generate_pilot: length exceeds the largest supported m-sequence");

  const auto period_seq = msequence(degree, 1u);
  const std::size_t period = period_seq.size();
  const std::size_t phase0 = static_cast<std::size_t>(seed % period);
  Sequence window(length_l);
  for (std::size_t step = 0; step < period; ++step)
  {
    const std::size_t phase = (phase0 + step) % period;
    for (std::size_t i = 0; i < length_l; ++i)
      window[i] = period_seq[(phase + i) % period];
    if (pilot_acceptable(window))
      return window;
  }
  throw std::logic_error("generate_pilot: no acceptable phase for length " + std::to_string(length_l));
}

std::vector<std::int64_t> correlate(std::span<const std::uint32_t> counts, const Sequence& sequence, int chips_per_symbol,
                                    SearchWindow window)
{
  if (chips_per_symbol < 1 || sequence.empty())
    throw std::invalid_argument("correlate: empty sequence or invalid chips per symbol");
  const std::size_t n = static_cast<std::size_t>(chips_per_symbol);
  const std::size_t span_len = sequence.size() * n;
  if (window.count == 0)
    return {};
  if (window.first + window.count - 1 + span_len > counts.size())
    throw std::out_of_range("correlate: search window overruns the trace");

  // Local prefix sums over the chips any candidate can touch.
  const std::size_t needed = window.count - 1 + span_len;
  std::vector<std::int64_t> prefix(needed + 1, 0);
  for (std::size_t k = 0; k < needed; ++k)
    prefix[k + 1] = prefix[k] + counts[window.first + k];

  // score[t] = sum_{j=0..L} (w_j - w_{j+1}) P[t + n j] with w_0 = w_{L+1} = 0, w_i = 2 s_i - 1.
  struct Term
  {
    std::size_t offset;
    std::int64_t coef;
  };
  std::vector<Term> terms;
  const std::size_t len = sequence.size();
  auto weight = [&](std::size_t i) -> std::int64_t { // 1-based
    if (i == 0 || i > len)
      return 0;
    return sequence[i - 1] ? 1 : -1;
  };
  for (std::size_t j = 0; j <= len; ++j)
  {
    const std::int64_t c = weight(j) - weight(j + 1);
    if (c != 0)
      terms.push_back({n * j, c});
  }

  std::vector<std::int64_t> scores(window.count);
  for (std::size_t t = 0; t < window.count; ++t)
  {
    std::int64_t acc = 0;
    for (const Term& term : terms)
      acc += term.coef * prefix[t + term.offset];
    scores[t] = acc;
  }
  return scores;
}

std::size_t estimate_start(std::span<const std::int64_t> scores)
{
  if (scores.empty())
    throw std::invalid_argument("estimate_start: no scores");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

SearchWindow slot_window(const SignalParams& params, int slot)
{
  const FrameLayout layout = frame_layout(params);
  return {layout.slot_start(slot) - layout.guard, layout.slot_chips - params.pilot_chips()};
}

SyncResult synchronize(const ChipTrace& trace, const SignalParams& params)
{
  SyncResult r;
  for (int i = 0; i < 3; ++i)
  {
    const SearchWindow w = slot_window(params, i);
    const auto scores = correlate(trace.counts, params.sequence, params.chips_per_symbol, w);
    const std::size_t best = estimate_start(scores);
    r.start_chip[i] = w.first + best;
    r.peak_score[i] = scores[best];
    r.window[i] = w;
  }
  return r;
}

ArrivalTimes arrival_times(const SyncResult& sync, const SignalParams& params)
{
  const FrameLayout layout = frame_layout(params);
  const double tc = layout.chip_duration_s;
  auto rel = [&](int i) {
    return (static_cast<double>(sync.start_chip[i]) - static_cast<double>(layout.slot_start(i))) * tc;
  };
  return {rel(0), rel(1), rel(2)};
}

std::string pilot_to_text(const Sequence& seq)
{
  std::string s;
  s.reserve(seq.size());
  for (auto b : seq)
    s.push_back(b ? '1' : '0');
  return s;
}

Sequence pilot_from_text(const std::string& line)
{
  Sequence seq;
  for (char ch : line)
  {
    if (ch == '0' || ch == '1')
      seq.push_back(static_cast<std::uint8_t>(ch - '0'));
    else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n')
      continue;
    else
      throw std::invalid_argument("pilot_from_text: unexpected character '" + std::string(1, ch) + "'");
  }
  return seq;
}

} // namespace uvtdoa
