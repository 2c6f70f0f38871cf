// Acceptance suite: one PASS/FAIL line per criterion.
#include "dmpead/config.hpp"
#include "dmpead/detect_eval.hpp"
#include "dmpead/ensemble.hpp"
#include "dmpead/error.hpp"
#include "dmpead/meta_model.hpp"
#include "dmpead/mlp.hpp"
#include "dmpead/pipeline.hpp"
#include "dmpead/pool_merge.hpp"
#include "dmpead/random.hpp"
#include "dmpead/synthetic.hpp"

#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace dmpead;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            if (pass) detail << "failed: ";
            else detail << "; ";
            detail << what;
            pass = false;
        }
    }
};

// ---------------------------------------------------------------- 1

Verdict gradient_correctness() {
    Verdict v;
    const auto t0 = Clock::now();
    const MlpLayout layout(recon_sizes(8, std::vector<std::size_t>{5}));
    const double inf = std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        auto theta = init_parameters(layout, rng);
        std::vector<double> windows(12 * 8);
        for (double& w : windows) w = rng.normal();
        // Prior outputs come from two other random networks on the same windows.
        std::vector<std::vector<double>> priors;
        for (int p = 0; p < 2; ++p) {
            const auto pt = init_parameters(layout, rng);
            std::vector<double> out;
            MlpTape tape;
            for (std::size_t w = 0; w < 12; ++w) {
                mlp_forward(layout, pt, std::span<const double>(windows).subspan(w * 8, 8), tape);
                out.insert(out.end(), tape.activations.back().begin(), tape.activations.back().end());
            }
            priors.push_back(std::move(out));
        }
        const double mu = 0.5 + rng.uniform() * 2.0;
        std::vector<double> grad(theta.size(), 0.0);
        training_objective(layout, theta, windows, priors, mu, inf, grad);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double h = 1e-4;
            const double saved = theta[i];
            theta[i] = saved + h;
            const double up = training_objective(layout, theta, windows, priors, mu, inf, {});
            theta[i] = saved - h;
            const double down = training_objective(layout, theta, windows, priors, mu, inf, {});
            theta[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    const double secs = seconds_since(t0);
    v.check(worst <= 1e-3, "relative error above 1e-3");
    v.check(secs < 10.0, "runtime over 10 s");
    v.detail << (v.pass ? "" : " | ") << "20 seeds, max relative error " << worst << ", " << secs << " s";
    return v;
}

// ---------------------------------------------------------------- 2

Verdict freezing_contract() {
    Verdict v;
    Rng rng(2024);
    const PoolSpec spec;
    const auto layout = spec.layout();
    const auto data = normalize(generate_regime(Regime::mixed, 200, 2, 5)).series;
    TrainConfig cfg;
    cfg.epochs = 2;
    std::size_t pairs = 0;
    for (int i = 0; i < 50; ++i) {
        const bool decimal = i == 0;
        const double beta = decimal ? 0.3 : rng.uniform(0.0, 0.95);
        const std::uint64_t seed = rng.next();
        const auto source = make_model(layout, "src", seed ^ 0x5a5a);
        const auto child = transfer_parameters(source, beta, seed, "child");
        const std::size_t n = child.theta.size();
        // Expected count: integer arithmetic for the decimal case, plain floor otherwise.
        const std::size_t expected = decimal ? n * 3 / 10 : static_cast<std::size_t>(std::floor(beta * n));
        if (child.frozen_count() != expected) {
            v.check(false, "beta " + std::to_string(beta) + ": " + std::to_string(child.frozen_count()) +
                               " frozen, expected " + std::to_string(expected));
            continue;
        }
        cfg.seed = seed;
        const auto trained = train(child, data, {}, cfg);
        for (std::size_t p = 0; p < n; ++p) {
            if (!child.frozen[p]) continue;
            if (std::memcmp(&trained.theta[p], &source.theta[p], sizeof(float)) != 0 ||
                std::memcmp(&trained.theta[p], &child.theta[p], sizeof(float)) != 0) {
                v.check(false, "frozen entry changed (beta " + std::to_string(beta) + ")");
                break;
            }
        }
        ++pairs;
    }
    v.detail << (v.pass ? "" : " | ") << pairs << "/50 (beta, seed) pairs exact, beta 0.3 included";
    return v;
}

// ---------------------------------------------------------------- 3

double mean_pairwise_diversity(const ModelPool& pool, const TimeSeries& x) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            acc += diversity(pool.model(i), pool.model(j), x, pool.stride());
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

Verdict diversity_effect() {
    Verdict v;
    const auto t0 = Clock::now();
    std::size_t wins = 0;
    std::ostringstream values;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto x = normalize(generate_regime(Regime::mixed, 1000, 2, 100 + seed)).series;
        const std::vector<TimeSeries> same{x, x, x};
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.mu = 2.0;
        const double with = mean_pairwise_diversity(construct_pool(same, PoolSpec{}, cfg), x);
        cfg.mu = 0.0;
        const double without = mean_pairwise_diversity(construct_pool(same, PoolSpec{}, cfg), x);
        if (with > without) ++wins;
        values << (seed > 1 ? ", " : "") << with << " vs " << without;
    }
    const double secs = seconds_since(t0);
    v.check(wins == 5, "mu=2 more diverse in only " + std::to_string(wins) + "/5 seeds");
    v.check(secs < 120.0, "runtime over 2 min");
    v.detail << (v.pass ? "" : " | ") << "mean pairwise diversity mu=2 vs mu=0: " << values.str() << "; " << secs
             << " s";
    return v;
}

// ---------------------------------------------------------------- 4

Verdict expansion_table() {
    Verdict v;
    std::size_t cases = 0;
    const ExpansionPolicy policy;
    for (std::size_t total : {3, 10, 15}) {
        for (std::size_t matched = 0; matched <= total; ++matched) {
            // Injected standardised predictions: matched models predict -2 (MS = 2), the rest +1 (MS = -1).
            std::vector<double> ms(total);
            for (std::size_t i = 0; i < total; ++i) ms[i] = (i * 7 % total) < matched ? 2.0 : -1.0;
            const auto r = decide_expansion(ms, policy);
            const bool reuse = static_cast<double>(matched) > 0.34 * static_cast<double>(total);
            v.check(r.subset.size() == matched, "subset size");
            v.check((r.decision == ExpansionDecision::reuse) == reuse,
                    "decision for " + std::to_string(matched) + "/" + std::to_string(total));
            ++cases;
        }
    }
    v.detail << (v.pass ? "" : " | ") << cases << " (|MSet|, |MSet'|) cases match |MSet'| > 0.34|MSet|";
    return v;
}

// ---------------------------------------------------------------- 5

std::size_t max_matching(const DissimilarityReport& r, double cutoff, std::vector<bool>& used) {
    std::size_t best = 0;
    for (const auto& p : r.pairs) {
        if (p.score >= cutoff || used[p.a] || used[p.b]) continue;
        used[p.a] = used[p.b] = true;
        best = std::max(best, 1 + max_matching(r, cutoff, used));
        used[p.a] = used[p.b] = false;
    }
    return best;
}

Verdict merge_properties() {
    Verdict v;
    Rng rng(55);
    // DS symmetry and zero diagonal.
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(9);
        const std::size_t len = 5 + rng.below(40);
        std::vector<std::vector<float>> params(n, std::vector<float>(len));
        for (auto& p : params)
            for (auto& x : p) x = static_cast<float>(rng.normal());
        if (rng.below(3) == 0) params[1] = params[0];
        const auto r = dissimilarity(params);
        for (std::size_t i = 0; i < n; ++i) {
            if (r.score(i, i) != 0.0) v.check(false, "non-zero diagonal");
            for (std::size_t j = 0; j < n; ++j) {
                if (r.score(i, j) != r.score(j, i)) v.check(false, "asymmetric DS");
                if (r.score(i, j) < 0.0 || r.score(i, j) > 1.0) v.check(false, "DS outside [0, 1]");
            }
        }
    }
    // Plans: disjoint, at most half, maximal, never beyond the best matching.
    std::size_t plans = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        DissimilarityReport r;
        r.model_count = n;
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                PairDissimilarity p;
                p.a = a;
                p.b = b;
                p.score = rng.uniform(0.0, 0.02);
                r.pairs.push_back(p);
            }
        }
        MergePolicy policy;
        const auto plan = plan_merges(r, policy);
        std::vector<bool> used(n, false);
        for (const auto& p : plan) {
            if (used[p.a] || used[p.b]) v.check(false, "pairs overlap");
            used[p.a] = used[p.b] = true;
            if (!(p.score < policy.eps_disscore)) v.check(false, "pair above cutoff");
        }
        if (plan.size() > n / 2) v.check(false, "more than half the pool merged");
        for (const auto& p : r.pairs) {
            if (p.score < policy.eps_disscore && !used[p.a] && !used[p.b]) v.check(false, "greedy plan not maximal");
        }
        std::vector<bool> scratch(n, false);
        const std::size_t best = max_matching(r, policy.eps_disscore, scratch);
        if (plan.size() > best) v.check(false, "plan exceeds brute-force matching");
        if (2 * plan.size() < best) v.check(false, "plan under half of the best matching");
        ++plans;
    }
    // Identical models collapse; small pools never merge under defaults.
    const auto base = make_model(PoolSpec{}.layout(), "base", 8);
    for (std::size_t k = 2; k <= 20; ++k) {
        ModelPool pool(32, 16);
        for (std::size_t i = 0; i < k; ++i) {
            auto m = base;
            m.id = pool.next_id();
            pool.add(std::move(m));
        }
        ModelPool defaults = pool;
        const auto out = merge_round(defaults, MergePolicy{});
        if (k <= 15 && out.changed()) v.check(false, "merged a pool of " + std::to_string(k) + " under defaults");
        MergePolicy eager;
        eager.eps_merge = 2;
        merge_round(pool, eager);
        if (k > 2) {
            if (pool.size() != 1) v.check(false, std::to_string(k) + " identical models left " + std::to_string(pool.size()));
            else if (pool.model(0).theta != base.theta) v.check(false, "merged theta changed");
        }
    }
    v.detail << (v.pass ? "" : " | ") << "100 DS pools, " << plans << " plans vs brute force, identical pools 3..20 collapse";
    return v;
}

// ---------------------------------------------------------------- 6

Verdict borda_oracle() {
    Verdict v;
    const auto t0 = Clock::now();
    std::size_t tables = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        std::vector<std::vector<std::size_t>> perms;
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t{0});
        do perms.push_back(p);
        while (std::next_permutation(p.begin(), p.end()));
        Matrix scores(n, 3);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < 3; ++t) scores(i, t) = static_cast<double>((i + 1) * (t + 2) % 5);
        for (std::size_t r = 1; r <= 4; ++r) {
            std::vector<std::size_t> idx(r, 0);
            while (true) {
                RankTable table;
                for (std::size_t i = 0; i < n; ++i) table.model_ids.push_back("m" + std::to_string(i));
                for (std::size_t j = 0; j < r; ++j) table.rankings.push_back({"r" + std::to_string(j), perms[idx[j]]});
                // Independent count.
                std::vector<long> points(n, 0);
                for (const auto& ranking : table.rankings)
                    for (std::size_t pos = 0; pos < n; ++pos) points[ranking.order[pos]] += static_cast<long>(n - pos);
                std::vector<std::size_t> order(n);
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    return points[a] != points[b] ? points[a] > points[b] : a < b;
                });
                for (std::size_t k = 1; k <= n + 1; ++k) {
                    const auto got = borda_topk(table, scores, k);
                    std::vector<std::size_t> expected;
                    if (k >= n) {
                        expected = order;
                        std::sort(expected.begin(), expected.end());
                    } else {
                        expected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
                    }
                    auto selected = got.selected;
                    if (k >= n) std::sort(selected.begin(), selected.end());
                    if (selected != expected) v.check(false, "selection differs");
                }
                ++tables;
                std::size_t pos = 0;
                while (pos < r && ++idx[pos] == perms.size()) idx[pos++] = 0;
                if (pos == r) break;
            }
        }
    }
    const double secs = seconds_since(t0);
    v.check(secs < 30.0, "runtime over 30 s");
    v.detail << (v.pass ? "" : " | ") << tables << " tables enumerated, " << secs << " s";
    return v;
}

// ---------------------------------------------------------------- 7

Verdict threshold_metrics() {
    Verdict v;
    v.check(threshold_mean_std(std::vector<double>{0, 0, 0, 0, 10}) == 12.0, "mean_std != 12");
    const auto r = identify(std::vector<double>{1, 2, 3, 4}, threshold_percentile(std::vector<double>{1, 2, 3, 4}, 0.5));
    v.check(std::accumulate(r.labels.begin(), r.labels.end(), 0) == 2, "percentile labelled count");
    v.check(auc_pr(std::vector<double>{0.9, 0.1}, std::vector<std::uint8_t>{1, 0}) == 1.0, "auc_pr perfect");
    v.check(auc_pr(std::vector<double>{0.1, 0.9}, std::vector<std::uint8_t>{1, 0}) == 0.5, "auc_pr inverted");
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 10 + rng.below(300);
        std::vector<double> s(m);
        std::vector<std::uint8_t> l(m);
        for (std::size_t i = 0; i < m; ++i) {
            s[i] = trial % 3 == 0 ? std::round(rng.uniform() * 5.0) : rng.uniform();
            l[i] = rng.uniform() < 0.2 ? 1 : 0;
        }
        l[0] = 1;
        l[m - 1] = 0;
        if (range_auc_pr(s, l, 0) != auc_pr(s, l)) v.check(false, "range_auc_pr(0) != auc_pr");
        if (vus_pr(s, l, 0) != range_auc_pr(s, l, 0)) v.check(false, "vus_pr(0) != range_auc_pr(0)");
    }
    v.detail << (v.pass ? "" : " | ") << "hand values exact, 100 random instances identical";
    return v;
}

// ---------------------------------------------------------------- shared desk-scale setup

constexpr Regime kRegimes[] = {Regime::sine, Regime::ar1, Regime::trend_season, Regime::mixed};

Config desk_config(std::uint64_t seed) {
    Config cfg;
    cfg.seed = seed;
    cfg.sync();
    return cfg;
}

std::vector<NamedSeries> training_sets(std::uint64_t seed) {
    std::vector<NamedSeries> out;
    for (std::size_t i = 0; i < 4; ++i) {
        out.push_back({std::string(to_string(kRegimes[i])), generate_regime(kRegimes[i], 2000, 3, mix_seed(seed, i))});
    }
    return out;
}

AnomalySpec anomaly(AnomalyKind kind, std::size_t start, std::size_t length, double magnitude, std::size_t dims) {
    AnomalySpec a;
    a.kind = kind;
    a.start = start;
    a.length = length;
    a.magnitude = magnitude;
    for (std::size_t d = 0; d < dims; ++d) a.dims.push_back(d);
    return a;
}

NamedSeries spiked_sine(std::uint64_t seed) {
    auto ts = generate_regime(Regime::sine, 1000, 3, mix_seed(seed, 99));
    ts.labels.emplace(ts.length(), std::uint8_t{0});
    Rng rng(mix_seed(seed, 98));
    for (std::size_t i = 0; i < 5; ++i) {
        const std::size_t start = i * 200 + 20 + rng.below(160);
        ts = inject_anomaly(ts, anomaly(AnomalyKind::spike, start, 1, 5.0, 3));
    }
    return {"spiked_sine", ts};
}

// Ten labelled series: every regime, every anomaly kind, three instances each.
std::vector<NamedSeries> synthetic_suite(std::uint64_t seed) {
    std::vector<NamedSeries> out;
    for (std::size_t i = 0; i < 10; ++i) {
        const Regime regime = kRegimes[i % 4];
        const AnomalyKind kind = kAllAnomalyKinds[i % 5];
        auto ts = generate_regime(regime, 1000, 3, mix_seed(seed, 1000 + i));
        ts.labels.emplace(ts.length(), std::uint8_t{0});
        Rng rng(mix_seed(seed, 2000 + i));
        const std::size_t len = kind == AnomalyKind::spike ? 1 : 20;
        const double magnitude = kind == AnomalyKind::spike ? 5.0 : kind == AnomalyKind::contextual ? 3.0 : 2.0;
        for (std::size_t k = 0; k < 3; ++k) {
            const std::size_t start = 50 + k * 300 + rng.below(200);
            ts = inject_anomaly(ts, anomaly(kind, start, len, magnitude, 1 + rng.below(3)));
        }
        out.push_back({"suite" + std::to_string(i) + "_" + std::string(to_string(regime)) + "_" +
                           std::string(to_string(kind)),
                       ts});
    }
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Point-wise AUC-PR of every pool model on its own.
std::vector<double> individual_auc(const ModelPool& pool, const TimeSeries& raw) {
    const auto x = normalize(raw).series;
    std::vector<double> out;
    for (const auto& m : pool.models()) out.push_back(auc_pr(score_row(m, x, pool.stride()), *raw.labels));
    return out;
}

// ---------------------------------------------------------------- 8

Verdict end_to_end() {
    Verdict v;
    const auto t0 = Clock::now();
    std::size_t good = 0;
    std::ostringstream per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto cfg = desk_config(seed);
        auto state = build_pool(training_sets(seed), cfg);
        const auto spike = detect(state, spiked_sine(seed), cfg, DetectOptions{});
        const double spike_auc = spike.metrics ? spike.metrics->ts_auc_pr : 0.0;

        double ensemble_sum = 0.0;
        double median_sum = 0.0;
        for (const auto& series : synthetic_suite(seed)) {
            const auto out = detect(state, series, cfg, DetectOptions{});
            ensemble_sum += out.metrics ? out.metrics->ts_auc_pr : 0.0;
            median_sum += median(individual_auc(state.pool, series.series));
        }
        const bool ok = spike_auc >= 0.9 && ensemble_sum >= median_sum;
        good += ok;
        per_seed << (seed > 1 ? "; " : "") << "seed " << seed << ": spike " << spike_auc << ", suite ensemble "
                 << ensemble_sum / 10.0 << " vs median model " << median_sum / 10.0 << (ok ? "" : " (miss)");
    }
    const double secs = seconds_since(t0);
    v.check(good >= 4, std::to_string(good) + "/5 seeds");
    v.check(secs < 600.0, "runtime over 10 min");
    v.detail << (v.pass ? "" : " | ") << good << "/5 seeds pass (" << per_seed.str() << "); " << secs << " s";
    return v;
}

// ---------------------------------------------------------------- 9

struct SuiteRun {
    std::vector<std::vector<double>> final_scores;
    double mean_auc = 0.0;
    double seconds = 0.0;
    std::size_t merges = 0;
    std::size_t final_pool = 0;
};

SuiteRun run_suite(PoolState state, const Config& cfg, const std::vector<NamedSeries>& suite, bool no_merging) {
    SuiteRun run;
    DetectOptions opts;
    opts.no_merging = no_merging;
    const auto t0 = Clock::now();
    for (const auto& series : suite) {
        const auto out = detect(state, series, cfg, opts);
        run.final_scores.push_back(out.ensemble.scores.final_scores);
        run.mean_auc += out.metrics ? out.metrics->ts_auc_pr : 0.0;
        run.merges += out.merge.merges.size();
    }
    run.seconds = seconds_since(t0);
    run.mean_auc /= static_cast<double>(suite.size());
    run.final_pool = state.pool.size();
    return run;
}

Verdict ablation_direction() {
    Verdict v;
    const std::uint64_t seed = 3;
    const auto suite = synthetic_suite(seed);

    // Defaults: the pool never exceeds the trigger, so the flag must be inert.
    const auto cfg = desk_config(seed);
    const auto state = build_pool(training_sets(seed), cfg);
    const auto merging = run_suite(state, cfg, suite, false);
    const auto plain = run_suite(state, cfg, suite, true);
    v.check(merging.merges == 0, "a merge triggered under defaults");
    v.check(merging.final_scores == plain.final_scores, "--no-merging changed final scores without a merge");

    // Forced-low trigger.
    auto low = cfg;
    low.merge.eps_merge = 2;
    low.merge.eps_disscore = 0.3;
    const auto forced = run_suite(state, low, suite, false);
    const auto unforced = run_suite(state, low, suite, true);
    v.check(forced.merges > 0, "no merge happened with a low trigger");
    v.check(forced.seconds <= unforced.seconds, "merging was slower");
    v.check(std::abs(forced.mean_auc - unforced.mean_auc) < 0.05, "accuracy moved by 0.05 or more");
    v.detail << (v.pass ? "" : " | ") << "defaults: identical scores, 0 merges; eps_merge=2, eps_disscore=0.3: " << forced.merges
             << " merges, pool " << forced.final_pool << " vs " << unforced.final_pool << ", time " << forced.seconds
             << " s vs " << unforced.seconds << " s, mean TS-AUC-PR " << forced.mean_auc << " vs "
             << unforced.mean_auc;
    return v;
}

// ---------------------------------------------------------------- 10

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DMPEAD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void copy_dir(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

Verdict determinism() {
    Verdict v;
    testing::TempDir dir;
    const auto data = dir / "data";
    fs::create_directories(data);
    for (std::size_t i = 0; i < 4; ++i) {
        save_csv(generate_regime(kRegimes[i], 600, 2, 30 + i), data / (std::string(to_string(kRegimes[i])) + ".csv"));
    }
    auto input = spiked_sine(4).series;
    Matrix two(input.length(), 2);
    for (std::size_t t = 0; t < input.length(); ++t)
        for (std::size_t d = 0; d < 2; ++d) two(t, d) = input.values(t, d);
    input.values = two;
    save_csv(input, dir / "input.csv");

    const std::string fast = " --set seed=11 --set epochs=10";
    v.check(run_cli("build-pool --data " + q(data) + " --out " + q(dir / "a") + fast) == 0, "build-pool a");
    v.check(run_cli("build-pool --data " + q(data) + " --out " + q(dir / "b") + fast) == 0, "build-pool b");
    v.check(testing::snapshot(dir / "a") == testing::snapshot(dir / "b"), "pool dirs differ");

    copy_dir(dir / "a", dir / "a_frozen");
    const std::string frozen = " --input " + q(dir / "input.csv") + " --labels --frozen-pool";
    v.check(run_cli("detect --pool " + q(dir / "a_frozen") + frozen + " --report " + q(dir / "f1.json")) == 0, "frozen 1");
    v.check(run_cli("detect --pool " + q(dir / "a_frozen") + frozen + " --report " + q(dir / "f2.json")) == 0, "frozen 2");
    v.check(testing::slurp(dir / "f1.json") == testing::slurp(dir / "f2.json"), "frozen reports differ");
    v.check(testing::snapshot(dir / "a_frozen") == testing::snapshot(dir / "a"), "frozen detect touched the pool");

    // Mutating detection with forced expansion on two identical pools.
    const std::string grow = " --input " + q(dir / "input.csv") + " --labels --set eps_model=1000";
    v.check(run_cli("detect --pool " + q(dir / "a") + grow + " --report " + q(dir / "m1.json")) == 0, "detect a");
    v.check(run_cli("detect --pool " + q(dir / "b") + grow + " --report " + q(dir / "m2.json")) == 0, "detect b");
    v.check(testing::slurp(dir / "m1.json") == testing::slurp(dir / "m2.json"), "mutating reports differ");
    v.check(testing::snapshot(dir / "a") == testing::snapshot(dir / "b"), "expanded pool dirs differ");

    const auto pool = load_pool(dir / "a");
    save_pool(pool, dir / "resaved");
    const auto back = load_pool(dir / "resaved");
    std::size_t models = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& x = pool.model(i).theta;
        const auto& y = back.model(i).theta;
        if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) != 0) {
            v.check(false, "theta round trip not bit-exact");
        }
        if (testing::slurp(dir / "a" / "models" / (pool.model(i).id + ".bin")) !=
            testing::slurp(dir / "resaved" / "models" / (pool.model(i).id + ".bin"))) {
            v.check(false, "model file bytes differ after round trip");
        }
        ++models;
    }
    v.detail << (v.pass ? "" : " | ") << "pool dirs and reports byte-identical, " << models
             << " models round-trip bit-exact";
    return v;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"freezing contract", freezing_contract},
        {"diversity effect", diversity_effect},
        {"expansion decision table", expansion_table},
        {"merge properties", merge_properties},
        {"borda oracle equivalence", borda_oracle},
        {"threshold and metric exactness", threshold_metrics},
        {"end-to-end desk scale", end_to_end},
        {"ablation direction", ablation_direction},
        {"determinism and persistence", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.check(false, std::string("exception: ") + e.what());
        }
        std::cout << (v.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": "
                  << v.detail.str() << std::endl;
        failures += !v.pass;
    }
    return failures == 0 ? 0 : 1;
}
