#include "dmpead/detect_eval.hpp"

#include "dmpead/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dmpead {

std::string_view to_string(ThresholdKind k) {
    switch (k) {
        case ThresholdKind::mean_std: return "mean_std";
        case ThresholdKind::epsilon: return "epsilon";
        case ThresholdKind::percentile: return "percentile";
    }
    return "unknown";
}

ThresholdKind parse_threshold_kind(std::string_view name) {
    if (name == "mean_std") return ThresholdKind::mean_std;
    if (name == "epsilon") return ThresholdKind::epsilon;
    if (name == "percentile") return ThresholdKind::percentile;
    throw UsageError("unknown threshold method '" + std::string(name) + "'");
}

void ThresholdMethod::validate() const {
    if (!(multiplier >= 0.0) || !std::isfinite(multiplier)) throw UsageError("threshold multiplier must be >= 0");
    if (!(anomaly_ratio > 0.0 && anomaly_ratio < 1.0)) throw UsageError("anomaly_ratio must be in (0, 1)");
}

namespace {

void require_scores(std::span<const double> scores) {
    if (scores.size() < 2) throw DataError("threshold selection needs at least 2 scores");
    for (double s : scores) {
        if (!std::isfinite(s)) throw DataError("scores must be finite");
    }
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd population_stats(std::span<const double> v) {
    MeanStd out;
    if (v.empty()) return out;
    out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(acc / static_cast<double>(v.size()));
    return out;
}

double guarded_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

void require_labels(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                         std::to_string(labels.size()) + ")");
    }
    std::size_t positives = 0;
    for (auto l : labels) positives += l != 0;
    if (positives == 0 || positives == labels.size()) {
        throw DataError("degenerate labels: need at least one positive and one negative");
    }
}

}  // namespace

std::vector<double> epsilon_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 8; ++i) grid.push_back(2.0 + 0.5 * i);
    return grid;
}

double threshold_mean_std(std::span<const double> scores, double multiplier) {
    require_scores(scores);
    const auto s = population_stats(scores);
    return s.mean + multiplier * s.std;
}

double threshold_epsilon(std::span<const double> scores) {
    require_scores(scores);
    const auto base = population_stats(scores);
    double best_quality = -std::numeric_limits<double>::infinity();
    double best = *std::max_element(scores.begin(), scores.end());
    bool found = false;
    std::vector<double> rest;
    for (double z : epsilon_grid()) {
        const double eps = base.mean + z * base.std;
        rest.clear();
        std::size_t above = 0;
        std::size_t runs = 0;
        bool in_run = false;
        for (double s : scores) {
            if (s > eps) {
                ++above;
                if (!in_run) ++runs;
                in_run = true;
            } else {
                rest.push_back(s);
                in_run = false;
            }
        }
        if (above == 0 || rest.empty()) continue;
        const auto reduced = population_stats(rest);
        const double gain = guarded_ratio(base.mean - reduced.mean, base.mean) +
                            guarded_ratio(base.std - reduced.std, base.std);
        const double quality =
            gain / (static_cast<double>(above) + static_cast<double>(runs) * static_cast<double>(runs));
        if (!found || quality > best_quality) {
            best_quality = quality;
            best = eps;
            found = true;
        }
    }
    return best;
}

double threshold_percentile(std::span<const double> scores, double anomaly_ratio) {
    require_scores(scores);
    if (!(anomaly_ratio > 0.0 && anomaly_ratio < 1.0)) throw UsageError("anomaly_ratio must be in (0, 1)");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = (1.0 - anomaly_ratio) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double select_threshold(std::span<const double> scores, const ThresholdMethod& method) {
    method.validate();
    switch (method.kind) {
        case ThresholdKind::mean_std: return threshold_mean_std(scores, method.multiplier);
        case ThresholdKind::epsilon: return threshold_epsilon(scores);
        case ThresholdKind::percentile: return threshold_percentile(scores, method.anomaly_ratio);
    }
    return threshold_mean_std(scores, method.multiplier);
}

std::vector<AnomalyRange> label_ranges(std::span<const std::uint8_t> labels) {
    std::vector<AnomalyRange> ranges;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        if (!ranges.empty() && ranges.back().end + 1 == i) {
            ranges.back().end = i;
        } else {
            ranges.push_back({i, i});
        }
    }
    return ranges;
}

DetectionResult identify(std::span<const double> scores, double epsilon) {
    DetectionResult r;
    r.scores.assign(scores.begin(), scores.end());
    r.threshold = epsilon;
    r.labels.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) r.labels[i] = scores[i] > epsilon ? 1 : 0;
    r.ranges = label_ranges(r.labels);
    return r;
}

double soft_average_precision(std::span<const double> scores, std::span<const double> soft) {
    if (scores.size() != soft.size()) throw ShapeError("scores and labels differ in length");
    const double total = std::accumulate(soft.begin(), soft.end(), 0.0);
    if (!(total > 0.0)) throw DataError("degenerate labels: need at least one positive and one negative");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double tp = 0.0;
    double prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += soft[order[j]];
            ++j;
        }
        const double precision = tp / static_cast<double>(j);
        const double recall = tp / total;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
        i = j;
    }
    return std::clamp(ap, 0.0, 1.0);
}

std::vector<double> soft_labels(std::span<const std::uint8_t> labels, std::size_t buffer) {
    const std::size_t m = labels.size();
    std::vector<double> soft(m, 0.0);
    for (const auto& r : label_ranges(labels)) {
        for (std::size_t i = r.start; i <= r.end; ++i) soft[i] = 1.0;
        for (std::size_t d = 1; d <= buffer; ++d) {
            const double w = 1.0 - static_cast<double>(d) / static_cast<double>(buffer + 1);
            if (r.start >= d) soft[r.start - d] = std::max(soft[r.start - d], w);
            if (r.end + d < m) soft[r.end + d] = std::max(soft[r.end + d], w);
        }
    }
    return soft;
}

double auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    return range_auc_pr(scores, labels, 0);
}

double range_auc_pr(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t buffer) {
    require_labels(scores, labels);
    return soft_average_precision(scores, soft_labels(labels, buffer));
}

double vus_pr(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t max_buffer) {
    require_labels(scores, labels);
    double sum = 0.0;
    for (std::size_t b = 0; b <= max_buffer; ++b) sum += soft_average_precision(scores, soft_labels(labels, b));
    return sum / static_cast<double>(max_buffer + 1);
}

Metrics evaluate(std::span<const double> scores, std::span<const std::uint8_t> labels, std::size_t max_buffer) {
    Metrics m;
    m.ts_auc_pr = auc_pr(scores, labels);
    m.range_auc_pr = range_auc_pr(scores, labels, max_buffer);
    m.vus_pr = vus_pr(scores, labels, max_buffer);
    return m;
}

}  // namespace dmpead
