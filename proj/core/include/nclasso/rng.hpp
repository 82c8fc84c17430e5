#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nclasso {

using Engine = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent sub-stream seed from (master, purpose tag, index).
/// Used everywhere a computation needs its own stream so results never depend
/// on the order in which replicates or probes are scheduled.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) noexcept;

inline Engine make_engine(std::uint64_t master, std::string_view tag, std::uint64_t index = 0) {
    return Engine(derive_seed(master, tag, index));
}

/// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace nclasso
