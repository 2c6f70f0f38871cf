#include "dmpead/features.hpp"

#include "dmpead/error.hpp"

#include <algorithm>
#include <cmath>

namespace dmpead {

namespace {

constexpr double kStdGuard = 1e-8;

struct Moments {
    double mean = 0.0;
    double std = 0.0;
};

Moments moments(std::span<const double> x) {
    Moments m;
    if (x.empty()) return m;
    for (double v : x) m.mean += v;
    m.mean /= static_cast<double>(x.size());
    double acc = 0.0;
    for (double v : x) acc += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(acc / static_cast<double>(x.size()));
    return m;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const auto ma = moments(a);
    const auto mb = moments(b);
    if (ma.std < kStdGuard || mb.std < kStdGuard) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - ma.mean) * (b[i] - mb.mean);
    return acc / (static_cast<double>(a.size()) * (ma.std * mb.std));
}

}  // namespace

std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
    std::vector<double> acf(max_lag + 1, 0.0);
    const auto m = moments(x);
    if (m.std < kStdGuard) return acf;
    const double denom = m.std * m.std * static_cast<double>(x.size());
    for (std::size_t lag = 0; lag <= max_lag && lag < x.size(); ++lag) {
        double acc = 0.0;
        for (std::size_t t = 0; t + lag < x.size(); ++t) acc += (x[t] - m.mean) * (x[t + lag] - m.mean);
        acf[lag] = acc / denom;
    }
    return acf;
}

std::array<double, kBaseFeatureCount> column_features(std::span<const double> x) {
    std::array<double, kBaseFeatureCount> f{};
    const std::size_t m = x.size();
    const auto mom = moments(x);
    f[0] = mom.mean;
    if (mom.std < kStdGuard) return f;  // constant column: everything except the mean is 0

    const double var = mom.std * mom.std;
    double m3 = 0.0;
    double m4 = 0.0;
    for (double v : x) {
        const double d = v - mom.mean;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m3 /= static_cast<double>(m);
    m4 /= static_cast<double>(m);
    f[1] = var;
    f[2] = m3 / (var * mom.std);
    f[3] = m4 / (var * var) - 3.0;

    const std::size_t max_lag = m / 2;
    const auto acf = autocorrelation(x, max_lag);
    f[4] = acf[1];
    f[5] = acf[2];
    f[6] = acf[3];

    std::size_t zero = max_lag;
    for (std::size_t k = 1; k <= max_lag; ++k) {
        if (acf[k] <= 0.0) {
            zero = k;
            break;
        }
    }
    f[7] = static_cast<double>(zero);

    std::size_t period = 0;
    double peak = 0.0;
    for (std::size_t k = 4; k + 1 <= max_lag; ++k) {
        if (acf[k] > acf[k - 1] && acf[k] >= acf[k + 1] && acf[k] > peak) {
            peak = acf[k];
            period = k;
        }
    }
    f[8] = static_cast<double>(period);
    f[9] = period == 0 ? 0.0 : peak;

    const std::size_t half = m / 2;
    const auto first = moments(x.subspan(0, half));
    const auto second = moments(x.subspan(half));
    f[10] = std::abs(second.mean - first.mean) / mom.std;
    f[11] = first.std < kStdGuard ? 0.0 : second.std / first.std;

    std::size_t outliers = 0;
    double max_z = 0.0;
    for (double v : x) {
        const double z = std::abs(v - mom.mean) / mom.std;
        if (z > 3.0) ++outliers;
        max_z = std::max(max_z, z);
    }
    f[12] = static_cast<double>(outliers) / static_cast<double>(m);
    f[13] = max_z;
    return f;
}

FeatureVector extract_features(const TimeSeries& ts) {
    const std::size_t m = ts.length();
    const std::size_t n = ts.dims();
    if (m < kMinFeatureLength) {
        throw DataError("feature extraction needs at least " + std::to_string(kMinFeatureLength) + " rows, got " +
                        std::to_string(m));
    }
    std::vector<std::vector<double>> columns(n);
    std::vector<std::array<double, kBaseFeatureCount>> per_dim(n);
    for (std::size_t d = 0; d < n; ++d) {
        columns[d] = ts.values.column(d);
        per_dim[d] = column_features(columns[d]);
    }

    FeatureVector out{};
    for (std::size_t i = 0; i < kBaseFeatureCount; ++i) {
        std::vector<double> values(n);
        for (std::size_t d = 0; d < n; ++d) values[d] = per_dim[d][i];
        // Sorting makes the aggregate independent of column order bit for bit.
        std::sort(values.begin(), values.end());
        const auto mom = moments(values);
        out[i] = mom.mean;
        out[kBaseFeatureCount + i] = mom.std;
    }

    std::vector<double> corrs;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) corrs.push_back(pearson(columns[a], columns[b]));
    }
    std::sort(corrs.begin(), corrs.end());
    std::vector<double> stds(n);
    std::size_t outliers = 0;
    for (std::size_t d = 0; d < n; ++d) {
        const auto mom = moments(columns[d]);
        stds[d] = mom.std;
        if (mom.std < kStdGuard) continue;
        for (double v : columns[d]) {
            if (std::abs(v - mom.mean) / mom.std > 3.0) ++outliers;
        }
    }
    std::sort(stds.begin(), stds.end());

    const std::size_t c = 2 * kBaseFeatureCount;
    out[c + 0] = std::log(static_cast<double>(n));
    out[c + 1] = std::log(static_cast<double>(m));
    out[c + 2] = corrs.empty() ? 0.0 : moments(corrs).mean;
    out[c + 3] = corrs.empty() ? 0.0 : corrs.back();
    out[c + 4] = moments(stds).mean;
    out[c + 5] = static_cast<double>(outliers) / static_cast<double>(m * n);
    for (double& v : out) {
        if (!std::isfinite(v)) v = 0.0;
    }
    return out;
}

FeatureVector extract_features(std::span<const double> series) {
    Matrix values(series.size(), 1);
    values.set_column(0, series);
    TimeSeries ts;
    ts.values = std::move(values);
    return extract_features(ts);
}

}  // namespace dmpead
