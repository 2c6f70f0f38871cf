#include "dmpead/pipeline.hpp"

#include "dmpead/binary_io.hpp"
#include "dmpead/error.hpp"
#include "dmpead/features.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

namespace dmpead {

using nlohmann::json;

const TimeSeries* PoolState::dataset(const std::string& id) const {
    const auto it = datasets.find(id);
    return it == datasets.end() ? nullptr : &it->second;
}

void save_state(const PoolState& state, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    save_pool(state.pool, dir);
    fs::create_directories(dir / "meta" / "datasets");
    save_store(state.store, dir / "meta" / "store.csv");
    save_meta(state.meta, dir / "meta" / "meta.bin");
    for (const auto& [id, ts] : state.datasets) save_csv(ts, dir / "meta" / "datasets" / (id + ".csv"));
}

PoolState load_state(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IntegrityError("pool directory not found: " + dir.string());
    PoolState state;
    state.pool = load_pool(dir);
    const auto store_file = dir / "meta" / "store.csv";
    const auto meta_file = dir / "meta" / "meta.bin";
    if (!fs::exists(store_file)) throw IntegrityError("missing meta store " + store_file.string());
    if (!fs::exists(meta_file)) throw IntegrityError("missing meta-model " + meta_file.string());
    try {
        state.store = load_store(store_file);
    } catch (const IntegrityError&) {
        throw;
    } catch (const Error& e) {
        throw IntegrityError(e.what());
    }
    state.meta = load_meta(meta_file);
    if (state.meta.version != state.pool.manifest().meta_version) {
        throw IntegrityError(meta_file.string() + ": meta-model version " + std::to_string(state.meta.version) +
                             " does not match manifest version " +
                             std::to_string(state.pool.manifest().meta_version));
    }
    for (const auto& row : state.store.rows) {
        if (!state.pool.find(row.model_id)) {
            throw IntegrityError(store_file.string() + ": row refers to unknown model " + row.model_id);
        }
    }
    const auto data_dir = dir / "meta" / "datasets";
    if (fs::is_directory(data_dir)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(data_dir)) {
            if (entry.path().extension() == ".csv") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) state.datasets.emplace(f.stem().string(), load_csv(f));
    }
    return state;
}

std::vector<std::pair<std::size_t, std::size_t>> meta_views(std::size_t length, std::size_t segment_length) {
    std::vector<std::pair<std::size_t, std::size_t>> views{{0, length}};
    const std::size_t half = length / 2;
    if (half >= std::max(kMinFeatureLength, segment_length)) {
        views.emplace_back(0, half);
        views.emplace_back(half, length);
    }
    return views;
}

namespace {

Config prepared(const Config& cfg) {
    Config c = cfg;
    c.sync();
    c.validate();
    return c;
}

TimeSeries stored_copy(const TimeSeries& ts) {
    TimeSeries out = ts;
    out.labels.reset();
    return out;
}

}  // namespace

PoolState build_pool(const std::vector<NamedSeries>& datasets, const Config& config) {
    if (datasets.empty()) throw DataError("no datasets");
    const Config cfg = prepared(config);
    std::vector<TimeSeries> normalized;
    std::vector<std::string> ids;
    for (const auto& d : datasets) {
        d.series.validate();
        if (d.series.length() < cfg.pool.segment_length) {
            throw DataError("dataset " + d.id + " has " + std::to_string(d.series.length()) +
                            " rows, fewer than segment length " + std::to_string(cfg.pool.segment_length));
        }
        if (std::find(ids.begin(), ids.end(), d.id) != ids.end()) throw DataError("duplicate dataset id " + d.id);
        normalized.push_back(normalize(d.series).series);
        ids.push_back(d.id);
    }

    PoolState state;
    state.pool = construct_pool(normalized, cfg.pool, cfg.train, ids);
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        for (const auto& [begin, end] : meta_views(normalized[i].length(), cfg.pool.segment_length)) {
            auto rows = make_rows(state.pool, normalized[i], ids[i], begin, end, RowTag::initial);
            state.store.rows.insert(state.store.rows.end(), rows.begin(), rows.end());
        }
        state.datasets.emplace(ids[i], stored_copy(normalized[i]));
    }
    state.meta = retrain_meta(state.store, cfg.meta, 0);
    state.pool.manifest().meta_version = state.meta.version;
    return state;
}

MergeOutcome merge_pool(PoolState& state, const Config& config) {
    const Config cfg = prepared(config);
    MergeOutcome outcome = merge_round(state.pool, cfg.merge);
    if (!outcome.changed()) return outcome;
    refresh_meta_after_merge(state.pool, outcome, state.store, state.meta,
                             [&](const std::string& id) { return state.dataset(id); }, cfg.meta);
    state.pool.manifest().meta_version = state.meta.version;
    return outcome;
}

namespace {

void append_merges(MergeOutcome& into, const MergeOutcome& more) {
    into.rounds += more.rounds;
    into.merges.insert(into.merges.end(), more.merges.begin(), more.merges.end());
}

std::string unique_dataset_id(const PoolState& state, const std::string& base) {
    auto taken = [&](const std::string& id) {
        if (state.datasets.count(id)) return true;
        return std::any_of(state.store.rows.begin(), state.store.rows.end(),
                           [&](const MetaRow& r) { return r.dataset_id == id; });
    };
    if (!taken(base)) return base;
    for (std::size_t i = 2;; ++i) {
        const std::string id = base + "_" + std::to_string(i);
        if (!taken(id)) return id;
    }
}

}  // namespace

DetectOutcome detect(PoolState& state, const NamedSeries& input, const Config& config, const DetectOptions& options) {
    const Config cfg = prepared(config);
    DetectOptions opts = options;
    if (opts.frozen_pool) {
        opts.no_expansion = true;
        opts.no_merging = true;
    }
    auto& pool = state.pool;
    if (pool.empty()) throw IntegrityError("pool has no models");
    if (pool.segment_length() != cfg.pool.segment_length) {
        throw IntegrityError("incompatible segment length: pool uses " + std::to_string(pool.segment_length()) +
                             ", config uses " + std::to_string(cfg.pool.segment_length));
    }
    if (pool.stride() != cfg.pool.stride) {
        throw IntegrityError("incompatible stride: pool uses " + std::to_string(pool.stride()) + ", config uses " +
                             std::to_string(cfg.pool.stride));
    }
    input.series.validate();
    if (input.series.length() < pool.segment_length()) {
        throw DataError("input has " + std::to_string(input.series.length()) + " rows, fewer than segment length " +
                        std::to_string(pool.segment_length()));
    }
    if (input.series.length() < kMinFeatureLength) throw DataError("input is too short for feature extraction");

    DetectOutcome out;
    out.input_id = input.id;
    out.length = input.series.length();
    out.dims = input.series.dims();
    out.config_hash = config_hash(cfg);
    out.seed = cfg.seed;
    out.options = opts;
    out.threshold_method = cfg.threshold;
    out.vus_window = cfg.vus_window;

    const TimeSeries ts = normalize(input.series).series;

    if (!opts.no_merging && cfg.merge.timing == MergeTiming::before_test) {
        append_merges(out.merge, merge_pool(state, cfg));
    }

    out.match = match_models(state.meta, pool, ts, cfg.expansion);
    for (const auto& m : pool.models()) out.match_ids.push_back(m.id);
    std::vector<std::size_t> subset = out.match.subset;

    if (out.match.decision == ExpansionDecision::create_new && !opts.no_expansion) {
        const std::string dataset_id = unique_dataset_id(state, input.id);
        const auto expansion = expand_pool(pool, ts, dataset_id, cfg.train, cfg.transfer, state.store, state.meta,
                                           cfg.meta);
        state.datasets.emplace(dataset_id, stored_copy(ts));
        out.expanded_model = expansion.model_id;
        subset.push_back(pool.index_of(expansion.model_id));
    }
    if (subset.empty()) {
        out.fallback_to_pool = true;
        out.warnings.push_back("no model matched the input and expansion is disabled: using the whole pool");
        subset.resize(pool.size());
        for (std::size_t i = 0; i < subset.size(); ++i) subset[i] = i;
    }

    std::vector<ReconModel> models;
    for (auto i : subset) models.push_back(pool.model(i));
    out.ensemble = run_ensemble(models, ts, pool.stride(), cfg.ensemble);
    out.warnings.insert(out.warnings.end(), out.ensemble.warnings.begin(), out.ensemble.warnings.end());

    const auto& final_scores = out.ensemble.scores.final_scores;
    out.detection = identify(final_scores, select_threshold(final_scores, cfg.threshold));

    if (ts.labels) {
        try {
            out.metrics = evaluate(final_scores, *ts.labels, cfg.vus_window);
        } catch (const DataError& e) {
            out.warnings.push_back(std::string("metrics skipped: ") + e.what());
        }
    }

    if (!opts.no_merging && cfg.merge.timing == MergeTiming::after_test) {
        append_merges(out.merge, merge_pool(state, cfg));
    }
    out.pool_changed = out.expanded_model.has_value() || out.merge.changed();
    out.pool_version = pool.manifest().pool_version;
    out.pool_size = pool.size();
    return out;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string format_report_json(const DetectOutcome& o) {
    json match_scores = json::object();
    for (std::size_t i = 0; i < o.match_ids.size(); ++i) match_scores[o.match_ids[i]] = o.match.match_scores[i];
    json subset = json::array();
    for (auto i : o.match.subset) subset.push_back(o.match_ids[i]);

    const auto& ids = o.ensemble.scores.model_ids;
    json ensemble_models = json::array();
    for (const auto& id : ids) ensemble_models.push_back(id);
    json selected = json::array();
    for (auto i : o.ensemble.selected) selected.push_back(ids[i]);
    json rankings = json::object();
    for (const auto& r : o.ensemble.table.rankings) {
        json order = json::array();
        for (auto i : r.order) order.push_back(ids[i]);
        rankings[r.metric] = order;
    }
    json points = json::object();
    for (std::size_t i = 0; i < o.ensemble.points.size(); ++i) points[ids[i]] = o.ensemble.points[i];

    json ranges = json::array();
    for (const auto& r : o.detection.ranges) ranges.push_back({r.start, r.end});
    std::size_t anomalous = 0;
    for (auto l : o.detection.labels) anomalous += l;

    json merges = json::array();
    for (const auto& m : o.merge.merges) {
        merges.push_back({{"round", m.round}, {"parents", {m.parent_a, m.parent_b}}, {"child", m.child},
                          {"ds", m.dissimilarity}});
    }

    json threshold = {{"method", to_string(o.threshold_method.kind)}, {"epsilon", o.detection.threshold}};
    if (o.threshold_method.kind == ThresholdKind::mean_std) threshold["multiplier"] = o.threshold_method.multiplier;
    if (o.threshold_method.kind == ThresholdKind::percentile) {
        threshold["anomaly_ratio"] = o.threshold_method.anomaly_ratio;
    }

    json doc = {
        {"input", {{"id", o.input_id}, {"length", o.length}, {"dims", o.dims}}},
        {"provenance",
         {{"config_hash", hex64(o.config_hash)}, {"seed", o.seed}, {"pool_version", o.pool_version},
          {"pool_size", o.pool_size}}},
        {"flags",
         {{"frozen_pool", o.options.frozen_pool}, {"no_expansion", o.options.no_expansion},
          {"no_merging", o.options.no_merging}, {"pool_changed", o.pool_changed}}},
        {"match",
         {{"scores", match_scores}, {"subset", subset}, {"decision", to_string(o.match.decision)},
          {"expanded_model", o.expanded_model ? json(*o.expanded_model) : json(nullptr)},
          {"fallback_to_pool", o.fallback_to_pool}}},
        {"ensemble",
         {{"models", ensemble_models}, {"selected_count", o.ensemble.selected.size()}, {"selected", selected},
          {"borda_points", points}, {"rankings", rankings}}},
        {"threshold", threshold},
        {"anomalies", {{"count", anomalous}, {"ranges", ranges}}},
        {"merge", {{"rounds", o.merge.rounds}, {"merges", merges}}},
        {"warnings", o.warnings},
    };
    if (o.metrics) {
        doc["metrics"] = {{"ts_auc_pr", o.metrics->ts_auc_pr},
                          {"range_auc_pr", o.metrics->range_auc_pr},
                          {"vus_pr", o.metrics->vus_pr},
                          {"vus_window", o.vus_window}};
    }
    return doc.dump(2) + "\n";
}

std::string format_plot_csv(const DetectOutcome& o) {
    std::string out = "t,score,threshold,label\n";
    char buf[32];
    auto num = [&](double v) {
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    const std::string eps = num(o.detection.threshold);
    for (std::size_t t = 0; t < o.detection.scores.size(); ++t) {
        out += std::to_string(t) + "," + num(o.detection.scores[t]) + "," + eps + "," +
               std::to_string(static_cast<int>(o.detection.labels[t])) + "\n";
    }
    return out;
}

}  // namespace dmpead
