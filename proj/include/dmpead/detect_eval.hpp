#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dmpead {

enum class ThresholdKind { mean_std, epsilon, percentile };
std::string_view to_string(ThresholdKind k);
ThresholdKind parse_threshold_kind(std::string_view name);

struct ThresholdMethod {
    ThresholdKind kind = ThresholdKind::mean_std;
    double multiplier = 2.5;     // mean_std
    double anomaly_ratio = 0.01; // percentile

    void validate() const;
};

// z values searched by the epsilon method: 2.0, 2.5, ..., 6.0.
std::vector<double> epsilon_grid();

double threshold_mean_std(std::span<const double> scores, double multiplier = 2.5);
double threshold_epsilon(std::span<const double> scores);
double threshold_percentile(std::span<const double> scores, double anomaly_ratio);
double select_threshold(std::span<const double> scores, const ThresholdMethod& method);

struct AnomalyRange {
    std::size_t start = 0;  // inclusive
    std::size_t end = 0;    // inclusive

    friend bool operator==(const AnomalyRange&, const AnomalyRange&) = default;
};

// Maximal runs of 1s.
std::vector<AnomalyRange> label_ranges(std::span<const std::uint8_t> labels);

struct DetectionResult {
    std::vector<double> scores;
    double threshold = 0.0;
    std::vector<std::uint8_t> labels;
    std::vector<AnomalyRange> ranges;
};

// labels[i] = scores[i] > epsilon.
DetectionResult identify(std::span<const double> scores, double epsilon);

// Average precision: scores descending, tied scores form one threshold step.
double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Average precision against soft labels in [0, 1]; precision and recall
// use sums of soft labels.
double soft_average_precision(std::span<const double> scores, std::span<const double> soft_labels);

// Each labelled range extended by a linear ramp of `buffer` points on both
// sides: at distance d the soft label is 1 - d / (buffer + 1).
std::vector<double> soft_labels(std::span<const std::uint8_t> labels, std::size_t buffer);

double range_auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t buffer);

// Mean of range_auc_pr over buffers 0..max_buffer.
double vus_pr(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t max_buffer = 16);

struct Metrics {
    double ts_auc_pr = 0.0;
    double range_auc_pr = 0.0;
    double vus_pr = 0.0;
};

// range_auc_pr is reported at buffer = max_buffer.
Metrics evaluate(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t max_buffer = 16);

}  // namespace dmpead
