#include "dmpead/pool_merge.hpp"

#include "dmpead/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

namespace dmpead {

std::string_view to_string(MergeTiming t) { return t == MergeTiming::before_test ? "before_test" : "after_test"; }

MergeTiming parse_merge_timing(std::string_view name) {
    if (name == "before_test") return MergeTiming::before_test;
    if (name == "after_test") return MergeTiming::after_test;
    throw UsageError("merge timing must be before_test or after_test, got '" + std::string(name) + "'");
}

void MergePolicy::validate() const {
    if (eps_merge < 2) throw UsageError("eps_merge must be >= 2");
    if (!(eps_disscore > 0.0)) throw UsageError("eps_disscore must be > 0");
}

double DissimilarityReport::score(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    // Pairs are stored row by row: (0,1), (0,2), ..., (1,2), ...
    const std::size_t n = model_count;
    const std::size_t index = i * n - i * (i + 1) / 2 + (j - i - 1);
    return pairs.at(index).score;
}

namespace {

struct Summary {
    double mean = 0.0;
    double std = 0.0;
    double min = 0.0;
    double max = 0.0;
    double norm = 0.0;
};

Summary summarize(const std::vector<float>& v) {
    Summary s;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sq = 0.0;
    for (float f : v) {
        const double x = f;
        s.mean += x;
        sq += x * x;
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
    }
    s.mean /= static_cast<double>(v.size());
    double acc = 0.0;
    for (float f : v) acc += (f - s.mean) * (f - s.mean);
    s.std = std::sqrt(acc / static_cast<double>(v.size()));
    s.norm = std::sqrt(sq);
    return s;
}

double normalize_component(double raw, double lo, double hi) {
    const double range = hi - lo;
    if (range <= 0.0) return raw > 0.0 ? 1.0 : 0.0;
    return (raw - lo) / range;
}

}  // namespace

DissimilarityReport dissimilarity(std::span<const std::vector<float>> parameters) {
    const std::size_t n = parameters.size();
    if (n < 2) throw DataError("dissimilarity needs at least 2 models");
    for (const auto& p : parameters) {
        if (p.size() != parameters.front().size() || p.empty()) {
            throw ShapeError("dissimilarity needs models with identical parameter shapes");
        }
    }
    std::vector<Summary> summaries;
    for (const auto& p : parameters) summaries.push_back(summarize(p));

    DissimilarityReport report;
    report.model_count = n;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            PairDissimilarity pd;
            pd.a = a;
            pd.b = b;
            const auto& pa = parameters[a];
            const auto& pb = parameters[b];
            if (pa == pb) {
                report.pairs.push_back(pd);
                continue;
            }
            double dist = 0.0;
            double dot = 0.0;
            for (std::size_t i = 0; i < pa.size(); ++i) {
                const double x = pa[i];
                const double y = pb[i];
                dist += (x - y) * (x - y);
                dot += x * y;
            }
            pd.euclidean = std::sqrt(dist);
            const auto& sa = summaries[a];
            const auto& sb = summaries[b];
            pd.statistical = (std::abs(sa.mean - sb.mean) + std::abs(sa.std - sb.std) + std::abs(sa.min - sb.min) +
                              std::abs(sa.max - sb.max)) /
                             4.0;
            if (sa.norm == 0.0 && sb.norm == 0.0) {
                pd.cosine = 0.0;
            } else if (sa.norm == 0.0 || sb.norm == 0.0) {
                pd.cosine = 1.0;
            } else {
                pd.cosine = std::clamp(1.0 - dot / (sa.norm * sb.norm), 0.0, 2.0);
            }
            report.pairs.push_back(pd);
        }
    }

    auto range_of = [&](auto member) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& p : report.pairs) {
            lo = std::min(lo, p.*member);
            hi = std::max(hi, p.*member);
        }
        return std::pair{lo, hi};
    };
    const auto [e_lo, e_hi] = range_of(&PairDissimilarity::euclidean);
    const auto [s_lo, s_hi] = range_of(&PairDissimilarity::statistical);
    const auto [c_lo, c_hi] = range_of(&PairDissimilarity::cosine);
    for (auto& p : report.pairs) {
        p.norm_euclidean = normalize_component(p.euclidean, e_lo, e_hi);
        p.norm_statistical = normalize_component(p.statistical, s_lo, s_hi);
        p.norm_cosine = normalize_component(p.cosine, c_lo, c_hi);
        p.score = (p.norm_euclidean + p.norm_statistical + p.norm_cosine) / 3.0;
    }
    return report;
}

DissimilarityReport dissimilarity(const ModelPool& pool) {
    std::vector<std::vector<float>> params;
    for (const auto& m : pool.models()) {
        if (!(m.layout == pool.models().front().layout)) throw ShapeError("pool models have different layouts");
        params.push_back(m.theta);
    }
    return dissimilarity(params);
}

std::vector<MergePair> plan_merges(const DissimilarityReport& report, const MergePolicy& policy) {
    std::vector<const PairDissimilarity*> candidates;
    for (const auto& p : report.pairs) {
        if (p.score < policy.eps_disscore) candidates.push_back(&p);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto* x, const auto* y) {
        return std::tie(x->score, x->a, x->b) < std::tie(y->score, y->a, y->b);
    });
    std::vector<std::uint8_t> used(report.model_count, 0);
    std::vector<MergePair> plan;
    for (const auto* p : candidates) {
        if (used[p->a] || used[p->b]) continue;
        used[p->a] = used[p->b] = 1;
        plan.push_back({p->a, p->b, p->score});
    }
    return plan;
}

MergeOutcome merge_round(ModelPool& pool, const MergePolicy& policy) {
    policy.validate();
    MergeOutcome outcome;
    if (pool.size() <= policy.eps_merge) return outcome;

    const auto max_rounds = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(pool.size()))));
    for (std::size_t round = 0; round < max_rounds && pool.size() >= 2; ++round) {
        const auto plan = plan_merges(dissimilarity(pool), policy);
        if (plan.empty()) break;
        const std::uint64_t round_id = ++pool.manifest().merge_rounds;
        ++outcome.rounds;

        // Build all children against the pre-round pool, then splice from the
        // highest index down so earlier indices stay valid.
        struct Splice {
            std::size_t a;
            std::size_t b;
            ReconModel child;
        };
        std::vector<Splice> splices;
        for (const auto& pair : plan) {
            const auto& ma = pool.model(pair.a);
            const auto& mb = pool.model(pair.b);
            ReconModel child;
            child.id = pool.next_id();
            child.trained_on = "merge(" + ma.id + "," + mb.id + ")";
            child.layout = ma.layout;
            child.theta.resize(ma.theta.size());
            for (std::size_t i = 0; i < child.theta.size(); ++i) {
                child.theta[i] = static_cast<float>((static_cast<double>(ma.theta[i]) + mb.theta[i]) / 2.0);
            }
            child.frozen.assign(child.theta.size(), 0);
            LineageEntry entry{round_id, ma.id, mb.id, child.id, pair.score};
            outcome.merges.push_back(entry);
            pool.manifest().lineage.push_back(entry);
            splices.push_back({pair.a, pair.b, std::move(child)});
        }
        std::sort(splices.begin(), splices.end(), [](const Splice& x, const Splice& y) { return x.b > y.b; });
        // Removing index b shifts every later index; a < b and pairs are
        // disjoint, so processing by descending b never invalidates a pending a.
        for (auto& s : splices) {
            std::size_t a = s.a;
            pool.replace_pair(a, s.b, std::move(s.child));
        }
    }
    if (outcome.changed()) ++pool.manifest().pool_version;
    return outcome;
}

RefreshOutcome refresh_meta_after_merge(const ModelPool& pool, const MergeOutcome& merge, MetaStore& store,
                                        MetaModel& meta, const DatasetLookup& lookup,
                                        const MetaTrainConfig& meta_cfg) {
    RefreshOutcome outcome;
    if (!merge.changed()) return outcome;

    struct View {
        std::string dataset;
        std::size_t begin;
        std::size_t end;
        FeatureVector features;
    };
    std::vector<View> views;
    std::map<std::tuple<std::string, std::size_t, std::size_t, std::string>, const MetaRow*> existing;
    for (const auto& row : store.rows) {
        const auto key = std::tuple{row.dataset_id, row.view_begin, row.view_end};
        const bool seen = std::any_of(views.begin(), views.end(), [&](const View& v) {
            return std::tie(v.dataset, v.begin, v.end) == key;
        });
        if (!seen) views.push_back({row.dataset_id, row.view_begin, row.view_end, row.features});
        existing[{row.dataset_id, row.view_begin, row.view_end, row.model_id}] = &row;
    }

    MetaStore refreshed;
    for (const auto& view : views) {
        const TimeSeries* data = lookup ? lookup(view.dataset) : nullptr;
        for (const auto& model : pool.models()) {
            const auto it = existing.find({view.dataset, view.begin, view.end, model.id});
            if (it != existing.end()) {
                refreshed.rows.push_back(*it->second);
                continue;
            }
            MetaRow row;
            row.dataset_id = view.dataset;
            row.view_begin = view.begin;
            row.view_end = view.end;
            row.model_id = model.id;
            row.features = view.features;
            row.fingerprint = pool.fingerprint(model.id);
            if (data && view.end <= data->length()) {
                TimeSeries slice;
                slice.values = Matrix(view.end - view.begin, data->dims());
                for (std::size_t r = view.begin; r < view.end; ++r) {
                    for (std::size_t d = 0; d < data->dims(); ++d) slice.values(r - view.begin, d) = data->values(r, d);
                }
                row.target = observed_error(model, slice, pool.stride());
                row.tag = RowTag::refresh;
            } else {
                row.target = 0.0;
                row.tag = RowTag::refresh_stale;
                ++outcome.stale_rows;
            }
            refreshed.rows.push_back(std::move(row));
        }
    }
    store = std::move(refreshed);
    meta = retrain_meta(store, meta_cfg, meta.version);
    outcome.retrained = true;
    return outcome;
}

}  // namespace dmpead
