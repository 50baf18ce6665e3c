#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

namespace kschem {

/// Identifier recorded in run metadata. Bump the suffix if the draw
/// mapping below ever changes.
inline constexpr std::string_view kRngId = "mt19937_64/u53-v1";

/// Maps a 64-bit draw onto [0, 1) using its top 53 bits. Unlike
/// std::uniform_real_distribution the mapping is fixed across standard libraries.
template <typename Urbg>
double uniform01(Urbg& g) {
  static_assert(sizeof(typename Urbg::result_type) == 8, "64-bit generator required");
  return static_cast<double>(static_cast<std::uint64_t>(g()) >> 11) * 0x1.0p-53;
}

using Uniform01 = std::function<double()>;

/// Seeded engine shared by one run; split per run with seed + run index.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uniform01(engine_); }
  Uniform01 source() {
    return [this] { return uniform(); };
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace kschem
