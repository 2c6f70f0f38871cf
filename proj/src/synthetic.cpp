#include "dmpead/synthetic.hpp"

#include "dmpead/error.hpp"
#include "dmpead/random.hpp"

#include <cmath>
#include <numeric>

namespace dmpead {

namespace {

constexpr double kPi = 3.14159265358979323846;

void fill_sine(Matrix& v, std::size_t d, Rng& rng) {
    const double period = rng.uniform(16.0, 64.0);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double amp = rng.uniform(0.8, 1.5);
    for (std::size_t t = 0; t < v.rows(); ++t) {
        v(t, d) = amp * std::sin(2.0 * kPi * static_cast<double>(t) / period + phase) + 0.05 * rng.normal();
    }
}

void fill_ar1(Matrix& v, std::size_t d, Rng& rng) {
    const double phi = rng.uniform(0.6, 0.95);
    double x = 0.0;
    for (std::size_t t = 0; t < v.rows(); ++t) {
        x = phi * x + rng.normal();
        v(t, d) = x;
    }
}

void fill_trend_season(Matrix& v, std::size_t d, Rng& rng) {
    const double slope = rng.uniform(-2.0, 2.0) / static_cast<double>(v.rows());
    const double period = rng.uniform(24.0, 96.0);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    for (std::size_t t = 0; t < v.rows(); ++t) {
        const double tt = static_cast<double>(t);
        v(t, d) = slope * tt + 0.7 * std::sin(2.0 * kPi * tt / period + phase) + 0.1 * rng.normal();
    }
}

}  // namespace

std::string_view to_string(Regime regime) {
    switch (regime) {
        case Regime::sine: return "sine";
        case Regime::ar1: return "ar1";
        case Regime::trend_season: return "trend_season";
        case Regime::mixed: return "mixed";
    }
    return "unknown";
}

Regime parse_regime(std::string_view name) {
    for (auto r : {Regime::sine, Regime::ar1, Regime::trend_season, Regime::mixed}) {
        if (to_string(r) == name) return r;
    }
    throw UsageError("unknown regime '" + std::string(name) + "'");
}

TimeSeries generate_regime(Regime regime, std::size_t m, std::size_t n, std::uint64_t seed) {
    if (m < 1 || n < 1) throw DataError("synthetic series needs m >= 1 and n >= 1");
    Rng rng(seed);
    Matrix v(m, n);
    for (std::size_t d = 0; d < n; ++d) {
        Regime r = regime;
        if (regime == Regime::mixed) r = static_cast<Regime>(rng.below(3));
        switch (r) {
            case Regime::sine: fill_sine(v, d, rng); break;
            case Regime::ar1: fill_ar1(v, d, rng); break;
            case Regime::trend_season: fill_trend_season(v, d, rng); break;
            case Regime::mixed: break;
        }
    }
    TimeSeries ts;
    ts.values = std::move(v);
    ts.timestamps.emplace(m);
    std::iota(ts.timestamps->begin(), ts.timestamps->end(), std::int64_t{0});
    return ts;
}

namespace {

TimeSeries build_probe() {
    Rng rng(kProbeSeed);
    constexpr std::size_t block = kProbeLength / 4;
    Matrix v(kProbeLength, kProbeDims);
    for (std::size_t d = 0; d < kProbeDims; ++d) {
        double ar = 0.0;
        double level = 0.0;
        for (std::size_t b = 0; b < 4; ++b) {
            const std::size_t regime = (b + d) % 4;
            const double period = 12.0 + 8.0 * static_cast<double>(d);
            const double shift = rng.uniform(-2.0, 2.0);
            for (std::size_t k = 0; k < block; ++k) {
                const std::size_t t = b * block + k;
                const double tt = static_cast<double>(t);
                const double noise = 0.05 * rng.normal();
                double x = 0.0;
                switch (regime) {
                    case 0: x = std::sin(2.0 * kPi * tt / period); break;
                    case 1: ar = 0.8 * ar + 0.5 * rng.normal(); x = ar; break;
                    case 2: x = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(block); break;
                    case 3: level = (k < block / 2) ? shift : -shift; x = level; break;
                }
                v(t, d) = x + noise;
            }
        }
    }
    return normalize(make_series(std::move(v))).series;
}

}  // namespace

const TimeSeries& probe_series() {
    static const TimeSeries probe = build_probe();
    return probe;
}

}  // namespace dmpead
