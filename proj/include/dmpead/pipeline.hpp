#pragma once

#include "dmpead/config.hpp"
#include "dmpead/detect_eval.hpp"
#include "dmpead/ensemble.hpp"
#include "dmpead/meta_model.hpp"
#include "dmpead/model_pool.hpp"
#include "dmpead/pool_merge.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dmpead {

// Everything persisted in a pool directory. Datasets are kept normalised so
// the meta-model can be refreshed after merges.
struct PoolState {
    ModelPool pool;
    MetaStore store;
    MetaModel meta;
    std::map<std::string, TimeSeries> datasets;

    const TimeSeries* dataset(const std::string& id) const;
};

// Layout: manifest.json, models/, probe.csv, meta/store.csv, meta/meta.bin,
// meta/datasets/<id>.csv.
void save_state(const PoolState& state, const std::filesystem::path& dir);
PoolState load_state(const std::filesystem::path& dir);

struct NamedSeries {
    std::string id;
    TimeSeries series;
};

// Views used for initial meta rows: the whole series plus both halves when
// each half is long enough.
std::vector<std::pair<std::size_t, std::size_t>> meta_views(std::size_t length, std::size_t segment_length);

PoolState build_pool(const std::vector<NamedSeries>& datasets, const Config& cfg);

struct DetectOptions {
    bool no_expansion = false;
    bool no_merging = false;
    bool frozen_pool = false;  // implies both of the above
};

struct DetectOutcome {
    std::string input_id;
    std::size_t length = 0;
    std::size_t dims = 0;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::uint64_t pool_version = 0;
    std::size_t pool_size = 0;
    DetectOptions options;
    MatchResult match;
    std::vector<std::string> match_ids;  // pool ids aligned with match.match_scores
    std::optional<std::string> expanded_model;
    bool fallback_to_pool = false;
    EnsembleResult ensemble;
    ThresholdMethod threshold_method;
    DetectionResult detection;
    std::optional<Metrics> metrics;
    std::size_t vus_window = 16;
    MergeOutcome merge;
    std::vector<std::string> warnings;
    bool pool_changed = false;
};

// Runs one detection over raw (unnormalised) input, mutating state unless
// the options forbid it.
DetectOutcome detect(PoolState& state, const NamedSeries& input, const Config& cfg, const DetectOptions& options);

// Merges per policy and refreshes the meta-model when anything merged.
MergeOutcome merge_pool(PoolState& state, const Config& cfg);

std::string format_report_json(const DetectOutcome& outcome);
// t,score,threshold,label
std::string format_plot_csv(const DetectOutcome& outcome);

}  // namespace dmpead
