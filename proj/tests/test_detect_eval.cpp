#include "dmpead/detect_eval.hpp"
#include "dmpead/error.hpp"
#include "dmpead/random.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dmpead;
using Catch::Approx;

namespace {

double pop_mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double pop_std(const std::vector<double>& v) {
    const double m = pop_mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / v.size());
}

// Average precision by brute force: one step per distinct score, highest first.
double brute_ap(const std::vector<double>& scores, const std::vector<double>& soft) {
    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    const double total = std::accumulate(soft.begin(), soft.end(), 0.0);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (double thr : thresholds) {
        double tp = 0.0;
        double n = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= thr) {
                tp += soft[i];
                n += 1.0;
            }
        }
        const double recall = tp / total;
        ap += (tp / n) * (recall - prev_recall);
        prev_recall = recall;
    }
    return ap;
}

std::vector<double> as_double(const std::vector<std::uint8_t>& labels) { return {labels.begin(), labels.end()}; }

}  // namespace

TEST_CASE("threshold_mean_std", "[detect][threshold]") {
    SECTION("constant scores") {
        const std::vector<double> s(8, 0.4);
        const double eps = threshold_mean_std(s);
        REQUIRE(eps == Approx(0.4));
        REQUIRE(identify(s, eps).ranges.empty());
    }
    SECTION("hand arithmetic") {
        const std::vector<double> s{0, 0, 0, 0, 10};
        REQUIRE(threshold_mean_std(s) == Approx(12.0));
        REQUIRE(identify(s, threshold_mean_std(s)).ranges.empty());
    }
    SECTION("multiplier zero") {
        const std::vector<double> s{1, 5, 3, 7};
        REQUIRE(threshold_mean_std(s, 0.0) == Approx(4.0));
    }
    SECTION("too few scores") { REQUIRE_THROWS(threshold_mean_std(std::vector<double>{1.0})); }
}

TEST_CASE("threshold_epsilon - grid search", "[detect][threshold]") {
    SECTION("monotone scores with one outlier") {
        const std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8, 9, 100};
        // Oracle: the same search written out directly.
        const double mean = pop_mean(s);
        const double sd = pop_std(s);
        double best_q = -1.0;
        double best_eps = *std::max_element(s.begin(), s.end());
        for (double z = 2.0; z <= 6.0 + 1e-9; z += 0.5) {
            const double eps = mean + z * sd;
            std::vector<double> rest;
            std::size_t above = 0;
            std::size_t runs = 0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s[i] > eps) {
                    ++above;
                    if (i == 0 || !(s[i - 1] > eps)) ++runs;
                } else {
                    rest.push_back(s[i]);
                }
            }
            if (above == 0) continue;
            const double q = ((mean - pop_mean(rest)) / mean + (sd - pop_std(rest)) / sd) /
                             static_cast<double>(above + runs * runs);
            if (q > best_q) {
                best_q = q;
                best_eps = eps;
            }
        }
        const double eps = threshold_epsilon(s);
        REQUIRE(eps == Approx(best_eps));
        REQUIRE(eps < 100.0);
        const auto r = identify(s, eps);
        REQUIRE(std::accumulate(r.labels.begin(), r.labels.end(), 0) == 1);
        REQUIRE(r.labels.back() == 1);
    }

    SECTION("constant scores") {
        const std::vector<double> s(10, 2.0);
        const double eps = threshold_epsilon(s);
        REQUIRE(eps == 2.0);
        REQUIRE(identify(s, eps).ranges.empty());
    }

    SECTION("result lies on the grid or at the maximum") {
        Rng rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> s(200);
            for (auto& v : s) v = std::exp(rng.normal());
            const double eps = threshold_epsilon(s);
            const double mean = pop_mean(s);
            const double sd = pop_std(s);
            bool on_grid = eps == *std::max_element(s.begin(), s.end());
            for (double z : epsilon_grid()) on_grid = on_grid || std::abs(eps - (mean + z * sd)) < 1e-9;
            REQUIRE(on_grid);
        }
        REQUIRE(epsilon_grid().size() == 9);
    }
}

TEST_CASE("threshold_percentile", "[detect][threshold]") {
    SECTION("median") {
        const std::vector<double> s{1, 2, 3, 4};
        const double eps = threshold_percentile(s, 0.5);
        REQUIRE(eps == Approx(2.5));
        REQUIRE(identify(s, eps).labels == std::vector<std::uint8_t>{0, 0, 1, 1});
    }
    SECTION("tiny ratio") {
        const std::vector<double> s{1, 2, 3, 4, 9};
        const double eps = threshold_percentile(s, 1e-9);
        REQUIRE(eps == Approx(9.0));
        const auto labels = identify(s, eps).labels;
        REQUIRE(std::accumulate(labels.begin(), labels.end(), 0) <= 1);
    }
    SECTION("duplication") {
        const std::vector<double> s{0.3, 1.5, 0.1, 2.2, 0.9};
        std::vector<double> doubled = s;
        doubled.insert(doubled.end(), s.begin(), s.end());
        // Linear interpolation moves slightly under duplication; the labelled set does not.
        const auto a = identify(s, threshold_percentile(s, 0.2));
        const auto b = identify(doubled, threshold_percentile(doubled, 0.2));
        for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(a.labels[i] == b.labels[i]);
        REQUIRE(threshold_percentile(s, 0.5) == threshold_percentile(doubled, 0.5));
    }
    SECTION("labelled count near the ratio") {
        Rng rng(8);
        for (double ratio : {0.01, 0.05, 0.2}) {
            std::vector<double> s(1000);
            for (auto& v : s) v = rng.uniform();
            const auto r = identify(s, threshold_percentile(s, ratio));
            const auto count = std::accumulate(r.labels.begin(), r.labels.end(), 0);
            const double expected = std::ceil(ratio * s.size());
            REQUIRE(std::abs(count - expected) <= 1.0);
        }
    }
    SECTION("ratio bounds") {
        REQUIRE_THROWS_AS(threshold_percentile(std::vector<double>{1, 2}, 0.0), UsageError);
        REQUIRE_THROWS_AS(threshold_percentile(std::vector<double>{1, 2}, 1.0), UsageError);
    }
}

TEST_CASE("identify - strict threshold", "[detect][identify]") {
    SECTION("example") {
        const auto r = identify(std::vector<double>{0.1, 0.9, 0.8, 0.1}, 0.5);
        REQUIRE(r.labels == std::vector<std::uint8_t>{0, 1, 1, 0});
        REQUIRE(r.ranges == std::vector<AnomalyRange>{{1, 2}});
    }
    SECTION("epsilon at the maximum") {
        const std::vector<double> s{0.2, 0.7, 0.7};
        REQUIRE(identify(s, 0.7).ranges.empty());
    }
    SECTION("epsilon below the minimum") {
        const auto r = identify(std::vector<double>{0.2, 0.7, 0.3}, 0.1);
        REQUIRE(r.labels == std::vector<std::uint8_t>{1, 1, 1});
        REQUIRE(r.ranges == std::vector<AnomalyRange>{{0, 2}});
    }
    SECTION("several ranges") {
        const std::vector<std::uint8_t> labels{1, 0, 1, 1, 0, 0, 1};
        REQUIRE(label_ranges(labels) == std::vector<AnomalyRange>{{0, 0}, {2, 3}, {6, 6}});
    }
}

TEST_CASE("auc_pr - point-wise average precision", "[detect][metrics]") {
    SECTION("perfect separation") {
        REQUIRE(auc_pr(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}) == Approx(1.0));
    }
    SECTION("inverted pair") {
        REQUIRE(auc_pr(std::vector<double>{0.1, 0.9}, std::vector<std::uint8_t>{1, 0}) == Approx(0.5));
    }
    SECTION("matches brute force with ties") {
        Rng rng(2);
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<double> s(40);
            std::vector<std::uint8_t> l(40);
            for (std::size_t i = 0; i < s.size(); ++i) {
                s[i] = std::round(rng.uniform() * 8.0);
                l[i] = rng.uniform() < 0.3 ? 1 : 0;
            }
            l[0] = 1;
            l[1] = 0;
            const double ap = auc_pr(s, l);
            REQUIRE(ap == Approx(brute_ap(s, as_double(l))).margin(1e-12));
            REQUIRE(ap >= 0.0);
            REQUIRE(ap <= 1.0);
        }
    }
    SECTION("random scores give the positive rate") {
        const double p = 0.1;
        double total = 0.0;
        constexpr int kSeeds = 10;
        for (int seed = 0; seed < kSeeds; ++seed) {
            Rng rng(100 + seed);
            std::vector<double> s(10000);
            std::vector<std::uint8_t> l(10000);
            for (std::size_t i = 0; i < s.size(); ++i) {
                s[i] = rng.uniform();
                l[i] = rng.uniform() < p ? 1 : 0;
            }
            total += auc_pr(s, l);
        }
        REQUIRE(total / kSeeds == Approx(p).margin(0.05));
    }
    SECTION("degenerate labels") {
        REQUIRE_THROWS_AS(auc_pr(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{0, 0}), DataError);
        REQUIRE_THROWS_AS(auc_pr(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), DataError);
    }
    SECTION("length mismatch") {
        REQUIRE_THROWS(auc_pr(std::vector<double>{0.1, 0.2, 0.3}, std::vector<std::uint8_t>{0, 1}));
    }
}

TEST_CASE("range_auc_pr and vus_pr", "[detect][metrics]") {
    Rng rng(6);
    std::vector<double> scores(200);
    for (auto& v : scores) v = rng.uniform();
    std::vector<std::uint8_t> labels(200, 0);
    for (std::size_t i = 50; i <= 52; ++i) labels[i] = 1;
    for (std::size_t i = 140; i <= 149; ++i) labels[i] = 1;

    SECTION("buffer zero is the point-wise metric") {
        REQUIRE(range_auc_pr(scores, labels, 0) == auc_pr(scores, labels));
    }

    SECTION("soft label ramp") {
        const auto soft = soft_labels(labels, 4);
        REQUIRE(soft[50] == 1.0);
        REQUIRE(soft[53] == Approx(0.8));
        REQUIRE(soft[56] == Approx(0.2));
        REQUIRE(soft[57] == 0.0);
        REQUIRE(soft[46] == Approx(0.2));
        REQUIRE(range_auc_pr(scores, labels, 4) == Approx(brute_ap(scores, soft)).margin(1e-12));
    }

    SECTION("window zero") { REQUIRE(vus_pr(scores, labels, 0) == range_auc_pr(scores, labels, 0)); }

    SECTION("vus is the mean over buffers") {
        double acc = 0.0;
        for (std::size_t b = 0; b <= 16; ++b) acc += range_auc_pr(scores, labels, b);
        REQUIRE(vus_pr(scores, labels, 16) == Approx(acc / 17.0));
        const auto m = evaluate(scores, labels, 16);
        REQUIRE(m.ts_auc_pr == auc_pr(scores, labels));
        REQUIRE(m.range_auc_pr == range_auc_pr(scores, labels, 16));
        REQUIRE(m.vus_pr == vus_pr(scores, labels, 16));
    }

    SECTION("shifted detection") {
        std::vector<double> shifted(200, 0.0);
        // True range 50..52; the detector fires on 54..56.
        for (std::size_t i = 54; i <= 56; ++i) shifted[i] = 1.0;
        std::vector<std::uint8_t> one_range(200, 0);
        for (std::size_t i = 50; i <= 52; ++i) one_range[i] = 1;
        const double point = auc_pr(shifted, one_range);
        const double ranged = range_auc_pr(shifted, one_range, 4);
        REQUIRE(point == Approx(brute_ap(shifted, as_double(one_range))));
        REQUIRE(point < 0.1);
        REQUIRE(ranged == Approx(brute_ap(shifted, soft_labels(one_range, 4))));
        REQUIRE(ranged > point);
    }
}
