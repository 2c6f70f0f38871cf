#include "dmpead/recon_model.hpp"

#include "dmpead/binary_io.hpp"
#include "dmpead/error.hpp"
#include "dmpead/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dmpead {

std::size_t ReconModel::frozen_count() const {
    return static_cast<std::size_t>(std::count(frozen.begin(), frozen.end(), std::uint8_t{1}));
}

void ReconModel::validate() const {
    if (layout.layer_count() == 0) throw ShapeError("model " + id + " has no layers");
    if (layout.input_width() != layout.output_width()) {
        throw ShapeError("model " + id + " does not map L -> L");
    }
    if (theta.size() != layout.param_count()) throw ShapeError("model " + id + " parameter count mismatch");
    if (frozen.size() != theta.size()) throw ShapeError("model " + id + " frozen mask length mismatch");
    for (float v : theta) {
        if (!std::isfinite(v)) throw DataError("model " + id + " has non-finite parameters");
    }
}

std::vector<std::size_t> recon_sizes(std::size_t segment_length, std::span<const std::size_t> hidden) {
    std::vector<std::size_t> sizes{segment_length};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(segment_length);
    return sizes;
}

ReconModel make_model(const MlpLayout& layout, std::string id, std::uint64_t seed) {
    Rng rng(seed);
    ReconModel model;
    model.id = std::move(id);
    model.layout = layout;
    model.theta = narrow(init_parameters(layout, rng));
    model.frozen.assign(model.theta.size(), 0);
    model.validate();
    return model;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw UsageError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
    if (batch_size < 1) throw UsageError("batch_size must be >= 1");
    if (!(mu >= 0.0)) throw UsageError("mu must be >= 0");
    if (!(beta >= 0.0 && beta < 1.0)) throw UsageError("beta must be in [0, 1)");
    if (stride < 1) throw UsageError("stride must be >= 1");
    if (!(diversity_cap > 0.0)) throw UsageError("diversity_cap must be > 0");
}

std::vector<double> reconstruct_windows(const ReconModel& model, const SegmentedView& view) {
    const std::size_t len = model.segment_length();
    if (view.segment_length != len) {
        throw ShapeError("segment length " + std::to_string(view.segment_length) + " does not match model " +
                         model.id + " (L=" + std::to_string(len) + ")");
    }
    const auto theta = widen(model.theta);
    std::vector<double> out(view.data.size());
    MlpTape tape;
    for (std::size_t i = 0; i < view.count(); ++i) {
        mlp_forward(model.layout, theta, view.segment(i), tape);
        std::copy(tape.activations.back().begin(), tape.activations.back().end(), out.begin() + i * len);
    }
    return out;
}

Matrix forward(const ReconModel& model, const SegmentedView& view) {
    return reassemble(view, reconstruct_windows(model, view));
}

Matrix reconstruct(const ReconModel& model, const TimeSeries& ts, std::size_t stride) {
    return forward(model, segment(ts, model.segment_length(), stride, TailPolicy::align_end));
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

}  // namespace

std::vector<double> pointwise_error(const Matrix& x, const Matrix& xhat) {
    require_same_shape(x, xhat);
    std::vector<double> err(x.rows());
    const double n = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t d = 0; d < x.cols(); ++d) {
            const double diff = x(i, d) - xhat(i, d);
            acc += diff * diff;
        }
        err[i] = acc / n;
    }
    return err;
}

double mse_loss(const Matrix& x, const Matrix& xhat) {
    const auto err = pointwise_error(x, xhat);
    return std::accumulate(err.begin(), err.end(), 0.0);
}

double mse_loss(const TimeSeries& x, const Matrix& xhat) { return mse_loss(x.values, xhat); }

double diversity(const ReconModel& a, const ReconModel& b, const TimeSeries& x, std::size_t stride) {
    const Matrix ra = reconstruct(a, x, stride);
    const Matrix rb = reconstruct(b, x, stride);
    require_same_shape(ra, rb);
    double acc = 0.0;
    for (std::size_t i = 0; i < ra.data().size(); ++i) {
        const double diff = ra.data()[i] - rb.data()[i];
        acc += diff * diff;
    }
    return acc / static_cast<double>(ra.data().size());
}

double pool_loss(const ReconModel& model, const TimeSeries& x, std::span<const ReconModel> prior, double mu,
                 std::size_t stride) {
    double loss = mse_loss(x, reconstruct(model, x, stride));
    if (mu == 0.0) return loss;
    double div = 0.0;
    for (const auto& p : prior) div += diversity(model, p, x, stride);
    return loss - mu * div;
}

double training_objective(const MlpLayout& layout, std::span<const double> theta, std::span<const double> windows,
                          std::span<const std::vector<double>> prior_outputs, double mu, double diversity_cap,
                          std::span<double> grad) {
    const std::size_t len = layout.input_width();
    const std::size_t batch = windows.size() / len;
    const double scale = 1.0 / static_cast<double>(windows.size());
    const bool want_grad = !grad.empty();
    MlpTape tape;
    std::vector<double> grad_out(len);
    double recon = 0.0;
    double div = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const auto input = windows.subspan(b * len, len);
        mlp_forward(layout, theta, input, tape);
        const auto& out = tape.activations.back();
        for (std::size_t k = 0; k < len; ++k) {
            const double e = out[k] - input[k];
            recon += e * e;
            grad_out[k] = 2.0 * scale * e;
        }
        if (mu != 0.0) {
            for (const auto& prior : prior_outputs) {
                for (std::size_t k = 0; k < len; ++k) {
                    const double d = out[k] - prior[b * len + k];
                    const double sq = d * d;
                    if (sq < diversity_cap) {
                        div += sq;
                        grad_out[k] -= mu * 2.0 * scale * d;
                    } else {
                        div += diversity_cap;
                    }
                }
            }
        }
        if (want_grad) mlp_backward(layout, theta, tape, grad_out, grad);
    }
    return scale * recon - mu * scale * div;
}

ReconModel transfer_parameters(const ReconModel& source, double beta, std::uint64_t seed, std::string new_id) {
    if (!(beta >= 0.0 && beta < 1.0)) throw UsageError("beta must be in [0, 1)");
    source.validate();
    const std::size_t count = source.theta.size();
    // beta is read as a decimal fraction: 0.3 of 10 parameters is 3 even though
    // the double nearest 0.3 is slightly smaller.
    const auto transferred =
        static_cast<std::size_t>(std::floor(beta * static_cast<double>(count) + kTransferCountSlack));

    Rng rng(seed);
    ReconModel model;
    model.id = std::move(new_id);
    model.layout = source.layout;
    model.theta.resize(count);
    model.frozen.assign(count, 0);
    for (std::size_t idx : rng.sample_without_replacement(count, transferred)) model.frozen[idx] = 1;
    for (std::size_t i = 0; i < count; ++i) {
        model.theta[i] = model.frozen[i] ? source.theta[i]
                                         : static_cast<float>(init_value(model.layout, i, rng));
    }
    return model;
}

std::vector<float> average_parameters(std::span<const ReconModel> models) {
    if (models.empty()) throw DataError("cannot average an empty model set");
    std::vector<double> acc(models.front().theta.size(), 0.0);
    for (const auto& m : models) {
        if (!(m.layout == models.front().layout)) throw ShapeError("cannot average models with different layouts");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m.theta[i];
    }
    for (auto& v : acc) v /= static_cast<double>(models.size());
    return narrow(acc);
}

ReconModel train(ReconModel model, const TimeSeries& x, std::span<const ReconModel> prior, const TrainConfig& cfg,
                 TrainHistory* history) {
    cfg.validate();
    model.validate();
    const std::size_t len = model.segment_length();
    const SegmentedView view = segment(x, len, cfg.stride, TailPolicy::align_end);
    const std::size_t count = view.count();

    std::vector<std::vector<double>> prior_full;
    if (cfg.mu != 0.0) {
        for (const auto& p : prior) {
            if (!(p.layout == model.layout)) throw ShapeError("prior model " + p.id + " has a different layout");
            prior_full.push_back(reconstruct_windows(p, view));
        }
    }

    std::vector<double> theta = widen(model.theta);
    std::vector<double> grad(theta.size());
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> batch_windows;
    std::vector<std::vector<double>> batch_priors(prior_full.size());
    Rng rng(cfg.seed);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < count; begin += cfg.batch_size) {
            const std::size_t end = std::min(count, begin + cfg.batch_size);
            batch_windows.clear();
            for (auto& bp : batch_priors) bp.clear();
            for (std::size_t i = begin; i < end; ++i) {
                const auto seg = view.segment(order[i]);
                batch_windows.insert(batch_windows.end(), seg.begin(), seg.end());
                for (std::size_t j = 0; j < prior_full.size(); ++j) {
                    const auto* src = prior_full[j].data() + order[i] * len;
                    batch_priors[j].insert(batch_priors[j].end(), src, src + len);
                }
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            const double objective =
                training_objective(model.layout, theta, batch_windows, batch_priors, cfg.mu, cfg.diversity_cap, grad);
            if (!std::isfinite(objective)) {
                throw DivergenceError("training of " + model.id + " diverged at epoch " + std::to_string(epoch + 1));
            }
            for (std::size_t i = 0; i < theta.size(); ++i) {
                if (!model.frozen[i]) theta[i] -= cfg.learning_rate * grad[i];
            }
            epoch_sum += objective;
            ++batches;
        }
        if (history) history->epoch_objective.push_back(epoch_sum / static_cast<double>(batches));
    }
    for (double v : theta) {
        if (!std::isfinite(v)) throw DivergenceError("training of " + model.id + " produced non-finite parameters");
    }
    model.theta = narrow(theta);
    return model;
}

std::vector<std::uint8_t> encode_model(const ReconModel& model) {
    model.validate();
    ByteWriter w;
    w.bytes("DMPR", 4);
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(model.segment_length()));
    w.u32(static_cast<std::uint32_t>(model.layout.sizes().size()));
    for (auto s : model.layout.sizes()) w.u32(static_cast<std::uint32_t>(s));
    w.str(model.id);
    w.str(model.trained_on);
    w.u64(model.theta.size());
    for (float v : model.theta) w.f32(v);
    w.bits(model.frozen);
    return w.buffer();
}

ReconModel decode_model(std::vector<std::uint8_t> bytes, const std::string& source) {
    ByteReader r(std::move(bytes), source);
    r.expect_magic("DMPR");
    const std::uint32_t version = r.u32();
    if (version != kModelFormatVersion) {
        throw IntegrityError(source + ": unsupported model format version " + std::to_string(version));
    }
    const std::uint32_t len = r.u32();
    const std::uint32_t nsizes = r.u32();
    if (nsizes < 2 || nsizes > 64) throw IntegrityError(source + ": bad layer count");
    std::vector<std::size_t> sizes(nsizes);
    for (auto& s : sizes) s = r.u32();
    ReconModel model;
    try {
        model.layout = MlpLayout(sizes);
    } catch (const ShapeError& e) {
        throw IntegrityError(source + ": " + e.what());
    }
    model.id = r.str();
    model.trained_on = r.str();
    const std::uint64_t count = r.u64();
    if (count != model.layout.param_count() || len != model.layout.input_width()) {
        throw IntegrityError(source + ": header inconsistent with layer sizes");
    }
    model.theta.resize(count);
    for (auto& v : model.theta) v = r.f32();
    model.frozen = r.bits(count);
    if (!r.at_end()) throw IntegrityError(source + ": trailing bytes");
    try {
        model.validate();
    } catch (const Error& e) {
        throw IntegrityError(source + ": " + e.what());
    }
    return model;
}

void save_model(const ReconModel& model, const std::filesystem::path& path) {
    write_file_bytes(path, encode_model(model));
}

ReconModel load_model(const std::filesystem::path& path) {
    return decode_model(read_file_bytes(path), path.string());
}

}  // namespace dmpead
