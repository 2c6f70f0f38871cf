#pragma once

#include "dmpead/time_series.hpp"

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace dmpead {

inline constexpr std::size_t kBaseFeatureCount = 14;
inline constexpr std::size_t kCrossFeatureCount = 6;
inline constexpr std::size_t kFeatureCount = 2 * kBaseFeatureCount + kCrossFeatureCount;  // 34
inline constexpr std::size_t kMinFeatureLength = 8;

using FeatureVector = std::array<double, kFeatureCount>;

// Names of the per-column base features, in output order. Entry i of the
// vector is the mean across columns of base feature i, entry 14 + i its std.
inline constexpr std::array<std::string_view, kBaseFeatureCount> kBaseFeatureNames{
    "mean",        "variance",      "skewness",       "kurtosis",      "acf1",
    "acf2",        "acf3",          "acf_first_zero", "dominant_period", "seasonal_strength",
    "drift",       "std_ratio",     "outlier_frac",   "max_abs_z"};

inline constexpr std::array<std::string_view, kCrossFeatureCount> kCrossFeatureNames{
    "log_dims", "log_length", "mean_corr", "max_corr", "mean_std", "global_outlier_frac"};

// Base features of one column.
std::array<double, kBaseFeatureCount> column_features(std::span<const double> x);

// Biased autocorrelation for lags 0..max_lag (0 for a constant series).
std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag);

FeatureVector extract_features(const TimeSeries& ts);

// Univariate convenience (e.g. a reconstruction-error series).
FeatureVector extract_features(std::span<const double> series);

}  // namespace dmpead
