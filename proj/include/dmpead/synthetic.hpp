#pragma once

#include "dmpead/time_series.hpp"

#include <cstdint>
#include <string_view>

namespace dmpead {

enum class Regime { sine, ar1, trend_season, mixed };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view name);

// Deterministic synthetic series with timestamps 0..m-1 and no labels.
TimeSeries generate_regime(Regime regime, std::size_t m, std::size_t n, std::uint64_t seed);

inline constexpr std::size_t kProbeLength = 512;
inline constexpr std::size_t kProbeDims = 4;
inline constexpr std::uint64_t kProbeSeed = 42;
inline constexpr int kProbeGeneratorVersion = 1;

// Fixed reference series used for model fingerprints: four 128-step blocks
// per column cycling through sinusoid, AR(1), trend and level-shift
// regimes. Normalized.
const TimeSeries& probe_series();

}  // namespace dmpead
