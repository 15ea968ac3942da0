#pragma once

#include <cstdint>
#include <random>

namespace autogen {

/// Independent stream seed for (base seed, purpose tag, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace seed_tag {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kEpoch = 2;
inline constexpr std::uint64_t kStep = 3;
inline constexpr std::uint64_t kEval = 4;
inline constexpr std::uint64_t kDecode = 5;
inline constexpr std::uint64_t kSurvey = 6;
}  // namespace seed_tag

}  // namespace autogen
