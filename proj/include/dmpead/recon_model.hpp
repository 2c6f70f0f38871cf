#pragma once

#include "dmpead/matrix.hpp"
#include "dmpead/mlp.hpp"
#include "dmpead/time_series.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dmpead {

// Segment autoencoder applied to each column independently. Parameters are
// stored in single precision; training runs on a double working copy.
struct ReconModel {
    std::string id;
    std::string trained_on;
    MlpLayout layout;
    std::vector<float> theta;
    std::vector<std::uint8_t> frozen;  // 1 = held fixed during training

    std::size_t segment_length() const { return layout.input_width(); }
    std::size_t frozen_count() const;
    void validate() const;
};

std::vector<std::size_t> recon_sizes(std::size_t segment_length, std::span<const std::size_t> hidden);

// Fresh model, uniform +-1/sqrt(fan_in) initialisation, nothing frozen.
ReconModel make_model(const MlpLayout& layout, std::string id, std::uint64_t seed);

struct TrainConfig {
    std::size_t epochs = 50;
    double learning_rate = 1e-2;
    std::size_t batch_size = 64;
    double mu = 2.0;
    double beta = 0.3;
    std::uint64_t seed = 0;
    std::size_t stride = 16;
    // Per-entry ceiling on the squared difference inside the diversity term
    // of the training objective. The uncapped objective is unbounded below
    // for mu * (#priors) >= 1.
    double diversity_cap = 0.25;

    void validate() const;
};

// Output windows for every segment of the view, same layout as view.data.
std::vector<double> reconstruct_windows(const ReconModel& model, const SegmentedView& view);

// Reconstruction of the covered rows of the view's source.
Matrix forward(const ReconModel& model, const SegmentedView& view);

// Full m x n reconstruction (an end-aligned window covers any tail).
Matrix reconstruct(const ReconModel& model, const TimeSeries& ts, std::size_t stride);

// Sum over time of the per-point mean squared error across dimensions.
double mse_loss(const Matrix& x, const Matrix& xhat);
double mse_loss(const TimeSeries& x, const Matrix& xhat);

// Per-point mean squared error across dimensions.
std::vector<double> pointwise_error(const Matrix& x, const Matrix& xhat);

// Mean squared difference between the two reconstructions over all m*n entries.
double diversity(const ReconModel& a, const ReconModel& b, const TimeSeries& x, std::size_t stride);

// mse_loss - mu * sum_j diversity(model, prior_j).
double pool_loss(const ReconModel& model, const TimeSeries& x, std::span<const ReconModel> prior, double mu,
                 std::size_t stride);

// Batch objective minimised by train(): mean squared reconstruction error
// over the batch entries minus mu times the sum over priors of the mean
// (capped) squared difference to each prior's output. `windows` and every
// entry of `prior_outputs` are batch x L row-major. When grad is non-empty
// the exact gradient is accumulated into it.
double training_objective(const MlpLayout& layout, std::span<const double> theta, std::span<const double> windows,
                          std::span<const std::vector<double>> prior_outputs, double mu, double diversity_cap,
                          std::span<double> grad);

inline constexpr double kTransferCountSlack = 1e-9;

// Copies floor(beta * |theta|) randomly chosen parameters from source and
// freezes them; everything else is freshly initialised.
ReconModel transfer_parameters(const ReconModel& source, double beta, std::uint64_t seed, std::string new_id);

// Element-wise mean of the models' parameters (all layouts must match).
std::vector<float> average_parameters(std::span<const ReconModel> models);

struct TrainHistory {
    std::vector<double> epoch_objective;  // mean batch objective per epoch
};

ReconModel train(ReconModel model, const TimeSeries& x, std::span<const ReconModel> prior, const TrainConfig& cfg,
                 TrainHistory* history = nullptr);

// Binary model file. Layout (all integers little-endian):
//   "DMPR" | u32 format version | u32 L | u32 size count | u32 sizes[]
//   | str id | str trained_on | u64 parameter count | f32 theta[]
//   | frozen mask packed LSB-first, ceil(count / 8) bytes
// where str is u32 length followed by UTF-8 bytes.
inline constexpr std::uint32_t kModelFormatVersion = 1;
std::vector<std::uint8_t> encode_model(const ReconModel& model);
ReconModel decode_model(std::vector<std::uint8_t> bytes, const std::string& source);
void save_model(const ReconModel& model, const std::filesystem::path& path);
ReconModel load_model(const std::filesystem::path& path);

}  // namespace dmpead
