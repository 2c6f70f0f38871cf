#include "dmpead/model_pool.hpp"

#include "dmpead/binary_io.hpp"
#include "dmpead/error.hpp"
#include "dmpead/random.hpp"
#include "dmpead/synthetic.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>

namespace dmpead {

using nlohmann::json;

MlpLayout PoolSpec::layout() const { return MlpLayout(recon_sizes(segment_length, hidden)); }

ModelPool::ModelPool(std::size_t segment_length, std::size_t stride)
    : segment_length_(segment_length), stride_(stride) {}

const ReconModel* ModelPool::find(const std::string& id) const {
    for (const auto& m : models_) {
        if (m.id == id) return &m;
    }
    return nullptr;
}

std::size_t ModelPool::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < models_.size(); ++i) {
        if (models_[i].id == id) return i;
    }
    throw DataError("model " + id + " not in pool");
}

const FeatureVector& ModelPool::fingerprint(const std::string& id) const {
    const auto it = fingerprints_.find(id);
    if (it == fingerprints_.end()) throw DataError("no fingerprint for model " + id);
    return it->second;
}

std::string ModelPool::next_id() {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "m%04llu", static_cast<unsigned long long>(manifest_.next_id++));
    return buf;
}

void ModelPool::add(ReconModel model) {
    const auto fp = dmpead::fingerprint(model, probe_series(), stride_);
    add(std::move(model), fp);
}

void ModelPool::add(ReconModel model, const FeatureVector& fp) {
    if (model.segment_length() != segment_length_) {
        throw ShapeError("model " + model.id + " has L=" + std::to_string(model.segment_length()) + ", pool has L=" +
                         std::to_string(segment_length_));
    }
    if (find(model.id)) throw DataError("duplicate model id " + model.id);
    fingerprints_[model.id] = fp;
    if (std::find(manifest_.creation_order.begin(), manifest_.creation_order.end(), model.id) ==
        manifest_.creation_order.end()) {
        manifest_.creation_order.push_back(model.id);
    }
    models_.push_back(std::move(model));
}

void ModelPool::replace_pair(std::size_t a, std::size_t b, ReconModel merged) {
    if (a >= b || b >= models_.size()) throw DataError("invalid merge pair");
    const auto fp = dmpead::fingerprint(merged, probe_series(), stride_);
    fingerprints_.erase(models_[a].id);
    fingerprints_.erase(models_[b].id);
    fingerprints_[merged.id] = fp;
    manifest_.creation_order.push_back(merged.id);
    models_[a] = std::move(merged);
    models_.erase(models_.begin() + static_cast<std::ptrdiff_t>(b));
}

void ModelPool::validate() const {
    if (models_.empty()) throw DataError("pool is empty");
    for (std::size_t i = 0; i < models_.size(); ++i) {
        models_[i].validate();
        if (models_[i].segment_length() != segment_length_) throw ShapeError("pool models disagree on L");
        if (!fingerprints_.count(models_[i].id)) throw DataError("model " + models_[i].id + " lacks a fingerprint");
        for (std::size_t j = 0; j < i; ++j) {
            if (models_[j].id == models_[i].id) throw DataError("duplicate model id " + models_[i].id);
        }
    }
    if (fingerprints_.size() != models_.size()) throw DataError("fingerprint table out of sync with models");
}

FeatureVector fingerprint(const ReconModel& model, const TimeSeries& probe, std::size_t stride) {
    const Matrix recon = reconstruct(model, probe, stride);
    return extract_features(pointwise_error(probe.values, recon));
}

ModelPool construct_pool(std::span<const TimeSeries> datasets, const PoolSpec& spec, const TrainConfig& cfg,
                         std::span<const std::string> tags) {
    if (datasets.empty()) throw DataError("no datasets");
    cfg.validate();
    const MlpLayout layout = spec.layout();
    ModelPool pool(spec.segment_length, spec.stride);
    TrainConfig tc = cfg;
    tc.stride = spec.stride;
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const std::string id = pool.next_id();
        ReconModel fresh = i == 0 ? make_model(layout, id, mix_seed(cfg.seed, 2 * i))
                                  : transfer_parameters(pool.models().back(), cfg.beta, mix_seed(cfg.seed, 2 * i), id);
        fresh.trained_on = i < tags.size() ? tags[i] : "dataset" + std::to_string(i);
        tc.seed = mix_seed(cfg.seed, 2 * i + 1);
        try {
            pool.add(train(std::move(fresh), datasets[i], pool.models(), tc));
        } catch (const DivergenceError& e) {
            throw DivergenceError("dataset " + std::to_string(i) + ": " + e.what());
        }
    }
    pool.manifest().pool_version = 1;
    return pool;
}

namespace {

std::filesystem::path model_path(const std::filesystem::path& dir, const std::string& id) {
    return dir / "models" / (id + ".bin");
}

}  // namespace

void save_pool(const ModelPool& pool, const std::filesystem::path& dir) {
    pool.validate();
    namespace fs = std::filesystem;
    fs::create_directories(dir / "models");

    json models = json::array();
    for (const auto& m : pool.models()) {
        const auto& fp = pool.fingerprint(m.id);
        models.push_back({{"id", m.id}, {"trained_on", m.trained_on}, {"fingerprint", std::vector<double>(fp.begin(), fp.end())}});
        save_model(m, model_path(dir, m.id));
    }
    // Drop files of models that were merged away.
    for (const auto& entry : fs::directory_iterator(dir / "models")) {
        const auto stem = entry.path().stem().string();
        if (entry.path().extension() == ".bin" && !pool.find(stem)) fs::remove(entry.path());
    }

    const auto& man = pool.manifest();
    json lineage = json::array();
    for (const auto& l : man.lineage) {
        lineage.push_back({{"round", l.round}, {"parents", {l.parent_a, l.parent_b}}, {"child", l.child},
                           {"ds", l.dissimilarity}});
    }
    json doc = {
        {"format_version", kManifestFormatVersion},
        {"segment_length", pool.segment_length()},
        {"stride", pool.stride()},
        {"layer_sizes", pool.models().front().layout.sizes()},
        {"model_count", pool.size()},
        {"models", models},
        {"creation_order", man.creation_order},
        {"lineage", lineage},
        {"pool_version", man.pool_version},
        {"meta_version", man.meta_version},
        {"next_id", man.next_id},
        {"merge_rounds", man.merge_rounds},
        {"probe", {{"length", kProbeLength}, {"dims", kProbeDims}, {"seed", kProbeSeed},
                   {"generator_version", kProbeGeneratorVersion}}},
    };
    write_file_text(dir / "manifest.json", doc.dump(2) + "\n");
    save_csv(probe_series(), dir / "probe.csv");
}

ModelPool load_pool(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const auto manifest_file = dir / "manifest.json";
    if (!fs::exists(manifest_file)) throw IntegrityError("missing manifest " + manifest_file.string());
    json doc;
    try {
        doc = json::parse(read_file_text(manifest_file));
    } catch (const json::exception& e) {
        throw IntegrityError(manifest_file.string() + ": " + e.what());
    }
    try {
        if (doc.at("format_version").get<int>() != kManifestFormatVersion) {
            throw IntegrityError(manifest_file.string() + ": unsupported format version");
        }
        ModelPool pool(doc.at("segment_length").get<std::size_t>(), doc.at("stride").get<std::size_t>());
        const auto sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
        const auto& models = doc.at("models");
        const auto count = doc.at("model_count").get<std::size_t>();
        if (count != models.size()) {
            throw IntegrityError(manifest_file.string() + ": model_count " + std::to_string(count) + " but " +
                                 std::to_string(models.size()) + " models listed");
        }
        std::size_t files = 0;
        if (fs::is_directory(dir / "models")) {
            for (const auto& entry : fs::directory_iterator(dir / "models")) {
                if (entry.path().extension() == ".bin") ++files;
            }
        }
        if (files != count) {
            throw IntegrityError((dir / "models").string() + ": expected " + std::to_string(count) +
                                 " model files, found " + std::to_string(files));
        }
        for (const auto& entry : models) {
            const auto id = entry.at("id").get<std::string>();
            const auto path = model_path(dir, id);
            if (!fs::exists(path)) throw IntegrityError("missing model file " + path.string());
            ReconModel model = load_model(path);
            if (model.id != id) throw IntegrityError(path.string() + ": id mismatch with manifest");
            if (model.layout.sizes() != sizes) throw IntegrityError(path.string() + ": layer sizes differ from manifest");
            const auto fpv = entry.at("fingerprint").get<std::vector<double>>();
            if (fpv.size() != kFeatureCount) throw IntegrityError(manifest_file.string() + ": bad fingerprint length");
            FeatureVector fp{};
            std::copy(fpv.begin(), fpv.end(), fp.begin());
            pool.add(std::move(model), fp);
        }
        auto& man = pool.manifest();
        man.creation_order = doc.at("creation_order").get<std::vector<std::string>>();
        for (const auto& l : doc.at("lineage")) {
            const auto parents = l.at("parents").get<std::vector<std::string>>();
            if (parents.size() != 2) throw IntegrityError(manifest_file.string() + ": lineage entry needs 2 parents");
            man.lineage.push_back({l.at("round").get<std::uint64_t>(), parents[0], parents[1],
                                   l.at("child").get<std::string>(), l.at("ds").get<double>()});
        }
        man.pool_version = doc.at("pool_version").get<std::uint64_t>();
        man.meta_version = doc.at("meta_version").get<std::uint64_t>();
        man.next_id = doc.at("next_id").get<std::uint64_t>();
        man.merge_rounds = doc.at("merge_rounds").get<std::uint64_t>();
        pool.validate();
        return pool;
    } catch (const json::exception& e) {
        throw IntegrityError(manifest_file.string() + ": " + e.what());
    } catch (const IntegrityError&) {
        throw;
    } catch (const Error& e) {
        throw IntegrityError(dir.string() + ": " + e.what());
    }
}

}  // namespace dmpead
