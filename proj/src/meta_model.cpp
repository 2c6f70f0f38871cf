#include "dmpead/meta_model.hpp"

#include "dmpead/binary_io.hpp"
#include "dmpead/error.hpp"
#include "dmpead/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

namespace dmpead {

std::string_view to_string(RowTag tag) {
    switch (tag) {
        case RowTag::initial: return "initial";
        case RowTag::expansion: return "expansion";
        case RowTag::refresh: return "refresh";
        case RowTag::refresh_stale: return "refresh-stale";
    }
    return "unknown";
}

RowTag parse_row_tag(std::string_view name) {
    for (auto t : {RowTag::initial, RowTag::expansion, RowTag::refresh, RowTag::refresh_stale}) {
        if (to_string(t) == name) return t;
    }
    throw DataError("unknown meta row tag '" + std::string(name) + "'");
}

std::size_t MetaStore::trainable_count() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const MetaRow& r) { return r.trainable(); }));
}

void MetaStore::validate() const {
    for (const auto& r : rows) {
        if (r.trainable() && !(r.target >= 0.0 && std::isfinite(r.target))) {
            throw DataError("meta row for " + r.model_id + " has invalid target");
        }
        if (r.view_end <= r.view_begin) throw DataError("meta row for " + r.model_id + " has an empty view");
    }
}

namespace {

std::string fmt(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw IntegrityError(where + ": bad number '" + std::string(s) + "'");
    return v;
}

std::size_t parse_size(std::string_view s, const std::string& where) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw IntegrityError(where + ": bad integer '" + std::string(s) + "'");
    return v;
}

std::vector<double> meta_input(const FeatureVector& features, const FeatureVector& fingerprint) {
    std::vector<double> x(kMetaInputWidth);
    std::copy(features.begin(), features.end(), x.begin());
    std::copy(fingerprint.begin(), fingerprint.end(), x.begin() + kFeatureCount);
    return x;
}

}  // namespace

std::string format_store_csv(const MetaStore& store) {
    std::string out = "dataset,view_begin,view_end,model,tag,target";
    for (std::size_t i = 0; i < kFeatureCount; ++i) out += ",f" + std::to_string(i);
    for (std::size_t i = 0; i < kFeatureCount; ++i) out += ",p" + std::to_string(i);
    out += '\n';
    for (const auto& r : store.rows) {
        out += r.dataset_id + ',' + std::to_string(r.view_begin) + ',' + std::to_string(r.view_end) + ',' + r.model_id +
               ',' + std::string(to_string(r.tag)) + ',' + fmt(r.target);
        for (double v : r.features) out += ',' + fmt(v);
        for (double v : r.fingerprint) out += ',' + fmt(v);
        out += '\n';
    }
    return out;
}

MetaStore parse_store_csv(std::string_view text, const std::string& source) {
    MetaStore store;
    std::size_t pos = text.find('\n');
    if (pos == std::string_view::npos) throw IntegrityError(source + ": missing header");
    ++pos;
    std::size_t line_no = 1;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t c = line.find(',', start);
            cells.push_back(line.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start));
            if (c == std::string_view::npos) break;
            start = c + 1;
        }
        const std::string where = source + " line " + std::to_string(line_no);
        if (cells.size() != 6 + 2 * kFeatureCount) throw IntegrityError(where + ": wrong column count");
        MetaRow r;
        r.dataset_id = std::string(cells[0]);
        r.view_begin = parse_size(cells[1], where);
        r.view_end = parse_size(cells[2], where);
        r.model_id = std::string(cells[3]);
        try {
            r.tag = parse_row_tag(cells[4]);
        } catch (const DataError& e) {
            throw IntegrityError(where + ": " + e.what());
        }
        r.target = parse_double(cells[5], where);
        for (std::size_t i = 0; i < kFeatureCount; ++i) r.features[i] = parse_double(cells[6 + i], where);
        for (std::size_t i = 0; i < kFeatureCount; ++i) r.fingerprint[i] = parse_double(cells[6 + kFeatureCount + i], where);
        store.rows.push_back(std::move(r));
    }
    return store;
}

void save_store(const MetaStore& store, const std::filesystem::path& path) {
    write_file_text(path, format_store_csv(store));
}

MetaStore load_store(const std::filesystem::path& path) {
    return parse_store_csv(read_file_text(path), path.string());
}

void MetaTrainConfig::validate() const {
    if (k_folds < 1) throw UsageError("meta k_folds must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("meta learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("meta momentum must be in [0, 1)");
    if (batch_size < 1 || max_epochs < 1 || lr_halving_epochs < 1 || patience < 1) {
        throw UsageError("meta batch size, epochs, halving interval and patience must be >= 1");
    }
}

double MetaModel::predict_standardized(const FeatureVector& features, const FeatureVector& fingerprint) const {
    if (!trained()) throw DataError("meta-model is not trained");
    auto x = meta_input(features, fingerprint);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - input_mean[i]) / input_std[i];
    const auto params = widen(theta);
    MlpTape tape;
    mlp_forward(layout, params, x, tape);
    return tape.activations.back()[0];
}

double MetaModel::predict_error(const FeatureVector& features, const FeatureVector& fingerprint) const {
    return target_mean + target_std * predict_standardized(features, fingerprint);
}

std::size_t effective_folds(std::size_t trainable_rows, std::size_t requested) {
    return std::min(requested, trainable_rows / 2);
}

MetaModel train_meta(const MetaStore& store, const MetaTrainConfig& cfg, std::uint64_t previous_version) {
    cfg.validate();
    store.validate();
    std::vector<const MetaRow*> rows;
    for (const auto& r : store.rows) {
        if (r.trainable()) rows.push_back(&r);
    }
    const std::size_t n = rows.size();
    const std::size_t k = cfg.k_folds;
    if (n < 2 * k) {
        throw DataError("meta store has " + std::to_string(n) + " trainable rows; " + std::to_string(k) +
                        "-fold training needs at least " + std::to_string(2 * k));
    }

    MetaModel meta;
    std::vector<std::size_t> sizes{kMetaInputWidth};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(1);
    meta.layout = MlpLayout(sizes);

    // Standardisation statistics.
    std::vector<std::vector<double>> x(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = meta_input(rows[i]->features, rows[i]->fingerprint);
        y[i] = rows[i]->target;
    }
    meta.input_mean.assign(kMetaInputWidth, 0.0);
    meta.input_std.assign(kMetaInputWidth, 0.0);
    for (std::size_t j = 0; j < kMetaInputWidth; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x[i][j];
        mean /= static_cast<double>(n);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += (x[i][j] - mean) * (x[i][j] - mean);
        const double sd = std::sqrt(acc / static_cast<double>(n));
        meta.input_mean[j] = mean;
        meta.input_std[j] = sd < 1e-8 ? 1.0 : sd;
    }
    {
        const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
        double acc = 0.0;
        for (double v : y) acc += (v - mean) * (v - mean);
        const double sd = std::sqrt(acc / static_cast<double>(n));
        meta.target_mean = mean;
        meta.target_std = sd < 1e-8 ? 1.0 : sd;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < kMetaInputWidth; ++j) x[i][j] = (x[i][j] - meta.input_mean[j]) / meta.input_std[j];
        y[i] = (y[i] - meta.target_mean) / meta.target_std;
    }

    Rng split_rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    split_rng.shuffle(order);

    const std::size_t params = meta.layout.param_count();
    double best_fold_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best_fold_theta;
    MlpTape tape;
    double grad_out[1];

    auto evaluate = [&](std::span<const double> theta, const std::vector<std::size_t>& idx) {
        double acc = 0.0;
        for (std::size_t i : idx) {
            mlp_forward(meta.layout, theta, x[i], tape);
            const double e = tape.activations.back()[0] - y[i];
            acc += e * e;
        }
        return acc / static_cast<double>(idx.size());
    };

    for (std::size_t fold = 0; fold < k; ++fold) {
        std::vector<std::size_t> train_idx;
        std::vector<std::size_t> val_idx;
        const std::size_t lo = fold * n / k;
        const std::size_t hi = (fold + 1) * n / k;
        for (std::size_t i = 0; i < n; ++i) {
            if (k > 1 && i >= lo && i < hi) {
                val_idx.push_back(order[i]);
            } else {
                train_idx.push_back(order[i]);
            }
        }
        if (k == 1) val_idx = train_idx;

        Rng rng(mix_seed(cfg.seed, fold + 1));
        std::vector<double> theta = init_parameters(meta.layout, rng);
        std::vector<double> velocity(params, 0.0);
        std::vector<double> grad(params);
        std::vector<double> best_theta = theta;
        double best = evaluate(theta, val_idx);
        std::size_t stagnant = 0;
        double lr = cfg.learning_rate;

        for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
            if (epoch > 0 && epoch % cfg.lr_halving_epochs == 0) lr *= 0.5;
            rng.shuffle(train_idx);
            for (std::size_t b = 0; b < train_idx.size(); b += cfg.batch_size) {
                const std::size_t e = std::min(train_idx.size(), b + cfg.batch_size);
                std::fill(grad.begin(), grad.end(), 0.0);
                const double scale = 1.0 / static_cast<double>(e - b);
                for (std::size_t i = b; i < e; ++i) {
                    const std::size_t row = train_idx[i];
                    mlp_forward(meta.layout, theta, x[row], tape);
                    grad_out[0] = 2.0 * scale * (tape.activations.back()[0] - y[row]);
                    mlp_backward(meta.layout, theta, tape, grad_out, grad);
                }
                for (std::size_t p = 0; p < params; ++p) {
                    velocity[p] = cfg.momentum * velocity[p] - lr * grad[p];
                    theta[p] += velocity[p];
                }
            }
            const double val = evaluate(theta, val_idx);
            if (!std::isfinite(val)) throw DivergenceError("meta-model training diverged in fold " + std::to_string(fold));
            if (val < best) {
                best = val;
                best_theta = theta;
                stagnant = 0;
            } else if (++stagnant >= cfg.patience) {
                break;
            }
        }
        if (best < best_fold_loss) {
            best_fold_loss = best;
            best_fold_theta = best_theta;
            meta.selected_fold = static_cast<std::uint32_t>(fold);
        }
    }
    meta.theta = narrow(best_fold_theta);
    meta.validation_loss = best_fold_loss;
    meta.version = previous_version + 1;
    return meta;
}

MetaModel retrain_meta(const MetaStore& store, const MetaTrainConfig& meta_cfg, std::uint64_t previous_version) {
    MetaTrainConfig cfg = meta_cfg;
    cfg.k_folds = effective_folds(store.trainable_count(), meta_cfg.k_folds);
    if (cfg.k_folds == 0) {
        throw DataError("meta store has " + std::to_string(store.trainable_count()) + " trainable rows, need at least 2");
    }
    return train_meta(store, cfg, previous_version);
}

std::vector<std::uint8_t> encode_meta(const MetaModel& meta) {
    if (!meta.trained()) throw DataError("cannot save an untrained meta-model");
    ByteWriter w;
    w.bytes("DMPM", 4);
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(meta.layout.sizes().size()));
    for (auto s : meta.layout.sizes()) w.u32(static_cast<std::uint32_t>(s));
    w.u64(meta.version);
    w.u32(meta.selected_fold);
    w.f64(meta.validation_loss);
    w.f64(meta.target_mean);
    w.f64(meta.target_std);
    w.u32(static_cast<std::uint32_t>(meta.input_mean.size()));
    for (double v : meta.input_mean) w.f64(v);
    for (double v : meta.input_std) w.f64(v);
    w.u64(meta.theta.size());
    for (float v : meta.theta) w.f32(v);
    const std::vector<std::uint8_t> mask(meta.theta.size(), 0);
    w.bits(mask);
    return w.buffer();
}

MetaModel decode_meta(std::vector<std::uint8_t> bytes, const std::string& source) {
    ByteReader r(std::move(bytes), source);
    r.expect_magic("DMPM");
    if (r.u32() != kModelFormatVersion) throw IntegrityError(source + ": unsupported meta format version");
    const std::uint32_t nsizes = r.u32();
    if (nsizes < 2 || nsizes > 64) throw IntegrityError(source + ": bad layer count");
    std::vector<std::size_t> sizes(nsizes);
    for (auto& s : sizes) s = r.u32();
    MetaModel meta;
    try {
        meta.layout = MlpLayout(sizes);
    } catch (const ShapeError& e) {
        throw IntegrityError(source + ": " + e.what());
    }
    if (meta.layout.input_width() != kMetaInputWidth || meta.layout.output_width() != 1) {
        throw IntegrityError(source + ": meta-model must map " + std::to_string(kMetaInputWidth) + " -> 1");
    }
    meta.version = r.u64();
    meta.selected_fold = r.u32();
    meta.validation_loss = r.f64();
    meta.target_mean = r.f64();
    meta.target_std = r.f64();
    const std::uint32_t inputs = r.u32();
    if (inputs != kMetaInputWidth) throw IntegrityError(source + ": bad standardisation width");
    meta.input_mean.resize(inputs);
    meta.input_std.resize(inputs);
    for (auto& v : meta.input_mean) v = r.f64();
    for (auto& v : meta.input_std) v = r.f64();
    const std::uint64_t count = r.u64();
    if (count != meta.layout.param_count()) throw IntegrityError(source + ": parameter count mismatch");
    meta.theta.resize(count);
    for (auto& v : meta.theta) v = r.f32();
    r.bits(count);
    if (!r.at_end()) throw IntegrityError(source + ": trailing bytes");
    return meta;
}

void save_meta(const MetaModel& meta, const std::filesystem::path& path) { write_file_bytes(path, encode_meta(meta)); }

MetaModel load_meta(const std::filesystem::path& path) { return decode_meta(read_file_bytes(path), path.string()); }

void ExpansionPolicy::validate() const {
    if (!std::isfinite(eps_model)) throw UsageError("eps_model must be finite");
    if (!(eps_judge_factor > 0.0 && eps_judge_factor <= 1.0)) throw UsageError("eps_judge_factor must be in (0, 1]");
}

std::string_view to_string(ExpansionDecision d) { return d == ExpansionDecision::reuse ? "reuse" : "create_new"; }

MatchResult decide_expansion(std::span<const double> match_scores, const ExpansionPolicy& policy) {
    MatchResult result;
    result.match_scores.assign(match_scores.begin(), match_scores.end());
    for (std::size_t i = 0; i < match_scores.size(); ++i) {
        if (match_scores[i] > policy.eps_model) result.subset.push_back(i);
    }
    const double judge = policy.eps_judge_factor * static_cast<double>(match_scores.size());
    result.decision = static_cast<double>(result.subset.size()) > judge ? ExpansionDecision::reuse
                                                                         : ExpansionDecision::create_new;
    return result;
}

MatchResult match_models(const MetaModel& meta, const ModelPool& pool, const FeatureVector& features,
                         const ExpansionPolicy& policy) {
    if (pool.empty()) throw DataError("cannot match against an empty pool");
    std::vector<double> scores(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        scores[i] = -meta.predict_standardized(features, pool.fingerprint(pool.model(i).id));
    }
    return decide_expansion(scores, policy);
}

MatchResult match_models(const MetaModel& meta, const ModelPool& pool, const TimeSeries& ts,
                         const ExpansionPolicy& policy) {
    return match_models(meta, pool, extract_features(ts), policy);
}

double observed_error(const ReconModel& model, const TimeSeries& ts, std::size_t stride) {
    return mse_loss(ts, reconstruct(model, ts, stride)) / static_cast<double>(ts.length());
}

std::string_view to_string(TransferSource s) { return s == TransferSource::last ? "last" : "average"; }

TransferSource parse_transfer_source(std::string_view name) {
    if (name == "last") return TransferSource::last;
    if (name == "average") return TransferSource::average;
    throw UsageError("transfer must be 'last' or 'average', got '" + std::string(name) + "'");
}

std::vector<MetaRow> make_rows(const ModelPool& pool, const TimeSeries& ts, const std::string& dataset_id,
                               std::size_t view_begin, std::size_t view_end, RowTag tag) {
    TimeSeries view;
    view.values = Matrix(view_end - view_begin, ts.dims());
    for (std::size_t r = view_begin; r < view_end; ++r) {
        for (std::size_t d = 0; d < ts.dims(); ++d) view.values(r - view_begin, d) = ts.values(r, d);
    }
    const FeatureVector features = extract_features(view);
    std::vector<MetaRow> rows;
    for (const auto& m : pool.models()) {
        MetaRow row;
        row.dataset_id = dataset_id;
        row.view_begin = view_begin;
        row.view_end = view_end;
        row.model_id = m.id;
        row.features = features;
        row.fingerprint = pool.fingerprint(m.id);
        row.target = observed_error(m, view, pool.stride());
        row.tag = tag;
        rows.push_back(std::move(row));
    }
    return rows;
}

ExpansionOutcome expand_pool(ModelPool& pool, const TimeSeries& ts, const std::string& dataset_id,
                             const TrainConfig& cfg, TransferSource source, MetaStore& store, MetaModel& meta,
                             const MetaTrainConfig& meta_cfg) {
    if (pool.empty()) throw DataError("cannot expand an empty pool");
    const std::string id = pool.next_id();
    const std::uint64_t salt = pool.manifest().next_id;
    ReconModel base = pool.models().back();
    if (source == TransferSource::average) base.theta = average_parameters(pool.models());
    ReconModel fresh = transfer_parameters(base, cfg.beta, mix_seed(cfg.seed, 2 * salt), id);
    fresh.trained_on = dataset_id;
    TrainConfig tc = cfg;
    tc.stride = pool.stride();
    tc.seed = mix_seed(cfg.seed, 2 * salt + 1);
    pool.add(train(std::move(fresh), ts, pool.models(), tc));

    auto rows = make_rows(pool, ts, dataset_id, 0, ts.length(), RowTag::expansion);
    ExpansionOutcome outcome{id, rows.size()};
    store.rows.insert(store.rows.end(), rows.begin(), rows.end());
    meta = retrain_meta(store, meta_cfg, meta.version);
    pool.manifest().meta_version = meta.version;
    ++pool.manifest().pool_version;
    return outcome;
}

}  // namespace dmpead
