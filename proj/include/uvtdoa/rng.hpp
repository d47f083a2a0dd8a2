#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace uvtdoa
{

using Rng = std::mt19937_64;

// SplitMix64 finalizer; bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent substream seed from a root seed and a path of indices,
/// e.g. substream_seed(campaign_seed, {point, trial, purpose}). Scheduling-independent.
std::uint64_t substream_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

Rng make_rng(std::uint64_t seed);

} // namespace uvtdoa
