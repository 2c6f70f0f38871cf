#pragma once

#include "dmpead/features.hpp"
#include "dmpead/model_pool.hpp"
#include "dmpead/recon_model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dmpead {

inline constexpr std::size_t kMetaInputWidth = 2 * kFeatureCount;

enum class RowTag { initial, expansion, refresh, refresh_stale };

std::string_view to_string(RowTag tag);
RowTag parse_row_tag(std::string_view name);

// One training example: how well model `model_id` reconstructs rows
// [view_begin, view_end) of dataset `dataset_id`.
struct MetaRow {
    std::string dataset_id;
    std::size_t view_begin = 0;
    std::size_t view_end = 0;
    std::string model_id;
    FeatureVector features{};
    FeatureVector fingerprint{};
    double target = 0.0;
    RowTag tag = RowTag::initial;

    bool trainable() const noexcept { return tag != RowTag::refresh_stale; }
    friend bool operator==(const MetaRow&, const MetaRow&) = default;
};

struct MetaStore {
    std::vector<MetaRow> rows;

    std::size_t trainable_count() const;
    void validate() const;
    friend bool operator==(const MetaStore&, const MetaStore&) = default;
};

// CSV: dataset,view_begin,view_end,model,tag,target,f0..f33,p0..p33
std::string format_store_csv(const MetaStore& store);
MetaStore parse_store_csv(std::string_view text, const std::string& source);
void save_store(const MetaStore& store, const std::filesystem::path& path);
MetaStore load_store(const std::filesystem::path& path);

struct MetaTrainConfig {
    std::vector<std::size_t> hidden{32, 16};
    std::size_t k_folds = 5;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 300;
    std::size_t lr_halving_epochs = 20;
    std::size_t patience = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

// Regressor from (dataset features ++ fingerprint) to the standardised
// observed error. Inputs and target are z-scored with statistics from its
// training rows.
struct MetaModel {
    MlpLayout layout;
    std::vector<float> theta;
    std::vector<double> input_mean;
    std::vector<double> input_std;
    double target_mean = 0.0;
    double target_std = 1.0;
    std::uint64_t version = 0;
    std::uint32_t selected_fold = 0;
    double validation_loss = 0.0;

    bool trained() const noexcept { return !theta.empty(); }
    // Prediction in standardised target units.
    double predict_standardized(const FeatureVector& features, const FeatureVector& fingerprint) const;
    double predict_error(const FeatureVector& features, const FeatureVector& fingerprint) const;
};

// K-fold training; returns the fold model with the lowest validation loss
// and version = previous_version + 1. k_folds == 1 trains and validates on
// all rows.
MetaModel train_meta(const MetaStore& store, const MetaTrainConfig& cfg, std::uint64_t previous_version = 0);

// Largest fold count <= requested that the store can support (0 if none).
std::size_t effective_folds(std::size_t trainable_rows, std::size_t requested);

// "DMPM" | u32 format version | u32 size count | u32 sizes[] | u64 version
// | u32 selected fold | f64 validation loss | f64 target mean | f64 target std
// | u32 input count | f64 input mean[] | f64 input std[] | u64 parameter count
// | f32 theta[] | packed zero mask
std::vector<std::uint8_t> encode_meta(const MetaModel& meta);
MetaModel decode_meta(std::vector<std::uint8_t> bytes, const std::string& source);
void save_meta(const MetaModel& meta, const std::filesystem::path& path);
MetaModel load_meta(const std::filesystem::path& path);

struct ExpansionPolicy {
    double eps_model = 0.8;
    double eps_judge_factor = 0.34;

    void validate() const;
};

enum class ExpansionDecision { reuse, create_new };
std::string_view to_string(ExpansionDecision d);

struct MatchResult {
    std::vector<double> match_scores;  // per pool model, MS = -standardised predicted error
    std::vector<std::size_t> subset;   // pool indices with MS > eps_model, pool order
    ExpansionDecision decision = ExpansionDecision::create_new;
};

// Pure threshold logic on given match scores.
MatchResult decide_expansion(std::span<const double> match_scores, const ExpansionPolicy& policy);

MatchResult match_models(const MetaModel& meta, const ModelPool& pool, const FeatureVector& features,
                         const ExpansionPolicy& policy);
MatchResult match_models(const MetaModel& meta, const ModelPool& pool, const TimeSeries& ts,
                         const ExpansionPolicy& policy);

// Mean per-point reconstruction error (mse_loss / m).
double observed_error(const ReconModel& model, const TimeSeries& ts, std::size_t stride);

enum class TransferSource { last, average };
std::string_view to_string(TransferSource s);
TransferSource parse_transfer_source(std::string_view name);

struct ExpansionOutcome {
    std::string model_id;
    std::size_t rows_added = 0;
};

// Trains a new model on ts (transfer + diversity against the whole pool),
// appends it, adds one store row per pool model for this dataset and
// retrains the meta-model. Existing models are not touched.
ExpansionOutcome expand_pool(ModelPool& pool, const TimeSeries& ts, const std::string& dataset_id,
                             const TrainConfig& cfg, TransferSource source, MetaStore& store, MetaModel& meta,
                             const MetaTrainConfig& meta_cfg);

// Rows for every (model, view) pair of one dataset.
std::vector<MetaRow> make_rows(const ModelPool& pool, const TimeSeries& ts, const std::string& dataset_id,
                               std::size_t view_begin, std::size_t view_end, RowTag tag);

// Retrains with as many folds as the store supports (<= meta_cfg.k_folds).
MetaModel retrain_meta(const MetaStore& store, const MetaTrainConfig& meta_cfg, std::uint64_t previous_version);

}  // namespace dmpead
