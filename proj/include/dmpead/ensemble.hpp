#pragma once

#include "dmpead/matrix.hpp"
#include "dmpead/recon_model.hpp"
#include "dmpead/time_series.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dmpead {

// Per-model anomaly scores, rows in subset order, one column per time point.
struct ScoreMatrix {
    std::vector<std::string> model_ids;
    Matrix scores;
    std::vector<double> final_scores;

    std::size_t model_count() const noexcept { return scores.rows(); }
    std::size_t length() const noexcept { return scores.cols(); }
    void validate() const;
};

// Row of per-point reconstruction errors (mean over dimensions).
std::vector<double> score_row(const ReconModel& model, const TimeSeries& ts, std::size_t stride);
ScoreMatrix score_models(std::span<const ReconModel> subset, const TimeSeries& ts, std::size_t stride);

// A ranking lists subset indices, best first.
struct Ranking {
    std::string metric;
    std::vector<std::size_t> order;
};

struct RankTable {
    std::vector<std::string> model_ids;
    std::vector<Ranking> rankings;

    void validate() const;
};

// Stable ordering of indices by key (ascending unless descending is set);
// equal keys keep subset order.
std::vector<std::size_t> rank_by(std::span<const double> keys, bool descending);

struct PredictionErrors {
    double mse = 0.0;
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;
};

inline constexpr double kMapeFloor = 0.01;

PredictionErrors prediction_errors(const Matrix& x, const Matrix& xhat);
std::vector<Ranking> rank_prediction_error(std::span<const PredictionErrors> errors);
std::vector<Ranking> rank_prediction_error(std::span<const ReconModel> subset, const TimeSeries& ts,
                                           std::size_t stride);

inline constexpr std::size_t kSyntheticInstances = 5;
inline constexpr std::size_t kMinSyntheticLength = 64;

// The five injected copies of ts used by the synthetic rankings (one per
// anomaly kind); empty when ts is too short.
std::vector<TimeSeries> synthetic_copies(const TimeSeries& ts, std::uint64_t seed);
std::vector<Ranking> rank_synthetic(std::span<const ReconModel> subset, const TimeSeries& ts, std::size_t stride,
                                    std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

// Row-wise z-normalisation (constant rows become 0).
Matrix z_normalize_rows(const Matrix& scores);
Matrix pairwise_distances(const Matrix& rows);

std::vector<std::size_t> nearest_neighbor_ranking(const Matrix& dist);
std::vector<std::size_t> kmedoids_ranking(const Matrix& dist, std::uint64_t seed);
// Empty result when affinity propagation does not converge.
std::vector<std::size_t> affinity_propagation_ranking(const Matrix& dist);
std::vector<std::size_t> farthest_first_ranking(const Matrix& dist);

std::vector<Ranking> rank_centrality(const ScoreMatrix& scores, std::uint64_t seed,
                                     std::vector<std::string>* warnings = nullptr);

// Scales a row to [0, 1]; a constant row becomes all zeros.
std::vector<double> min_max_normalize(std::span<const double> row);

struct BordaResult {
    std::vector<std::size_t> selected;  // subset indices, best first
    std::vector<double> points;         // per subset index; empty when ranking was skipped
    std::vector<double> final_scores;
};

// Position p (1-based) in a ranking of N models earns N - p + 1 points.
std::vector<double> borda_points(const RankTable& table);
BordaResult borda_topk(const RankTable& table, const Matrix& scores, std::size_t k);

struct EnsembleSpec {
    std::size_t k = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EnsembleResult {
    ScoreMatrix scores;
    RankTable table;
    std::vector<std::size_t> selected;
    std::vector<double> points;
    std::vector<std::string> warnings;
};

// Scores every model, builds the 13 rankings (skipped when k >= |subset|)
// and aggregates the top-k into scores.final_scores.
EnsembleResult run_ensemble(std::span<const ReconModel> subset, const TimeSeries& ts, std::size_t stride,
                            const EnsembleSpec& spec);

// Diagnostic dumps.
std::string format_rank_table_csv(const RankTable& table);
std::string format_score_csv(const ScoreMatrix& scores);

}  // namespace dmpead
