#pragma once

#include "dmpead/features.hpp"
#include "dmpead/recon_model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dmpead {

struct LineageEntry {
    std::uint64_t round = 0;
    std::string parent_a;
    std::string parent_b;
    std::string child;
    double dissimilarity = 0.0;

    friend bool operator==(const LineageEntry&, const LineageEntry&) = default;
};

struct PoolManifest {
    std::vector<std::string> creation_order;  // every id ever minted, in order
    std::vector<LineageEntry> lineage;
    std::uint64_t pool_version = 0;  // bumped on every mutation
    std::uint64_t meta_version = 0;
    std::uint64_t next_id = 0;
    std::uint64_t merge_rounds = 0;

    friend bool operator==(const PoolManifest&, const PoolManifest&) = default;
};

struct PoolSpec {
    std::size_t segment_length = 32;
    std::vector<std::size_t> hidden{16, 8, 16};
    std::size_t stride = 16;

    MlpLayout layout() const;
};

class ModelPool {
public:
    ModelPool() = default;
    ModelPool(std::size_t segment_length, std::size_t stride);

    std::size_t size() const noexcept { return models_.size(); }
    bool empty() const noexcept { return models_.empty(); }
    std::size_t segment_length() const noexcept { return segment_length_; }
    std::size_t stride() const noexcept { return stride_; }

    const std::vector<ReconModel>& models() const noexcept { return models_; }
    const ReconModel& model(std::size_t i) const { return models_.at(i); }
    const ReconModel* find(const std::string& id) const;
    std::size_t index_of(const std::string& id) const;
    const FeatureVector& fingerprint(const std::string& id) const;
    const std::map<std::string, FeatureVector>& fingerprints() const noexcept { return fingerprints_; }

    PoolManifest& manifest() noexcept { return manifest_; }
    const PoolManifest& manifest() const noexcept { return manifest_; }

    // Mints the next model id ("m0000", "m0001", ...).
    std::string next_id();

    // Appends and fingerprints the model.
    void add(ReconModel model);
    // Appends with a known fingerprint (used when loading).
    void add(ReconModel model, const FeatureVector& fingerprint);
    // Replaces models a and b (a < b) with `merged`, placed at a's position.
    void replace_pair(std::size_t a, std::size_t b, ReconModel merged);

    void validate() const;

private:
    std::size_t segment_length_ = 0;
    std::size_t stride_ = 0;
    std::vector<ReconModel> models_;
    std::map<std::string, FeatureVector> fingerprints_;
    PoolManifest manifest_;
};

// Features of the per-point reconstruction-error series on the probe.
FeatureVector fingerprint(const ReconModel& model, const TimeSeries& probe, std::size_t stride);

// Model i is trained on dataset i, transferring from model i-1 and
// regularised against models 0..i-1.
ModelPool construct_pool(std::span<const TimeSeries> datasets, const PoolSpec& spec, const TrainConfig& cfg,
                         std::span<const std::string> tags = {});

// Directory layout: manifest.json, models/<id>.bin, probe.csv.
inline constexpr int kManifestFormatVersion = 1;
void save_pool(const ModelPool& pool, const std::filesystem::path& dir);
ModelPool load_pool(const std::filesystem::path& dir);

}  // namespace dmpead
