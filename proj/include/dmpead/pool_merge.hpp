#pragma once

#include "dmpead/meta_model.hpp"
#include "dmpead/model_pool.hpp"

#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace dmpead {

enum class MergeTiming { before_test, after_test };
std::string_view to_string(MergeTiming t);
MergeTiming parse_merge_timing(std::string_view name);

struct MergePolicy {
    std::size_t eps_merge = 15;   // merging starts only when |pool| > eps_merge
    double eps_disscore = 0.01;   // pairs with DS below this merge
    MergeTiming timing = MergeTiming::after_test;

    void validate() const;
};

struct PairDissimilarity {
    std::size_t a = 0;  // a < b, pool indices
    std::size_t b = 0;
    double euclidean = 0.0;
    double statistical = 0.0;
    double cosine = 0.0;
    double norm_euclidean = 0.0;
    double norm_statistical = 0.0;
    double norm_cosine = 0.0;
    double score = 0.0;  // mean of the three normalised components
};

struct DissimilarityReport {
    std::size_t model_count = 0;
    std::vector<PairDissimilarity> pairs;  // every a < b, lexicographic

    // DS(i, j); symmetric, 0 on the diagonal.
    double score(std::size_t i, std::size_t j) const;
};

// Pairwise parameter-space dissimilarity. Components are min-max normalised
// over the pairs; a component with zero range maps to 0 where the raw value
// is 0 and to 1 otherwise.
DissimilarityReport dissimilarity(std::span<const std::vector<float>> parameters);
DissimilarityReport dissimilarity(const ModelPool& pool);

struct MergePair {
    std::size_t a = 0;
    std::size_t b = 0;
    double score = 0.0;
};

// Greedy ascending-DS selection of disjoint pairs with DS < eps_disscore.
std::vector<MergePair> plan_merges(const DissimilarityReport& report, const MergePolicy& policy);

struct MergeOutcome {
    std::size_t rounds = 0;
    std::vector<LineageEntry> merges;

    bool changed() const noexcept { return !merges.empty(); }
};

// Repeats plan + average rounds (at most ceil(log2 |pool|)) while pairs
// qualify. No-op unless |pool| > eps_merge. Does not touch the meta-model.
MergeOutcome merge_round(ModelPool& pool, const MergePolicy& policy);

// Returns the dataset for an id, or nullptr when it is no longer available.
using DatasetLookup = std::function<const TimeSeries*(const std::string&)>;

struct RefreshOutcome {
    bool retrained = false;
    std::size_t stale_rows = 0;
};

// Rebuilds the store for the current pool: dataset features are kept, rows
// of removed models are dropped, merged models get fresh fingerprints and
// targets (stale when the dataset is gone), then the meta-model is retrained.
RefreshOutcome refresh_meta_after_merge(const ModelPool& pool, const MergeOutcome& merge, MetaStore& store,
                                        MetaModel& meta, const DatasetLookup& lookup,
                                        const MetaTrainConfig& meta_cfg);

}  // namespace dmpead
