#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fairenergy {

using Rng = std::mt19937_64;

// Named, independently derived random streams. Every stream is a pure
// function of (master seed, name, indices), so strategies that share a seed
// see identical environment randomness no matter how many draws another
// stream consumed.
namespace streams {
inline constexpr std::string_view kTask = "task";
inline constexpr std::string_view kPartition = "partition";
inline constexpr std::string_view kDevices = "devices";
inline constexpr std::string_view kChannels = "channels";
inline constexpr std::string_view kModelInit = "model-init";
inline constexpr std::string_view kTraining = "training";
inline constexpr std::string_view kBaselineSelection = "baseline-selection";
inline constexpr std::string_view kSweep = "sweep";
}  // namespace streams

std::uint64_t splitmix64(std::uint64_t x) noexcept;

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t a = 0, std::uint64_t b = 0) noexcept;

inline Rng make_rng(std::uint64_t master, std::string_view stream,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(master, stream, a, b));
}

}  // namespace fairenergy
