#include "dmpead/mlp.hpp"

#include "dmpead/error.hpp"
#include "dmpead/random.hpp"

#include <algorithm>
#include <cmath>

namespace dmpead {

MlpLayout::MlpLayout(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ShapeError("network needs at least an input and an output width");
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw ShapeError("network layer width must be positive");
        offsets_.push_back(offsets_.back() + sizes_[l] * sizes_[l + 1] + sizes_[l + 1]);
    }
    widest_ = *std::max_element(sizes_.begin(), sizes_.end());
}

std::size_t MlpLayout::fan_in(std::size_t index) const {
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
    const std::size_t layer = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    return sizes_[layer];
}

void mlp_forward(const MlpLayout& layout, std::span<const double> theta, std::span<const double> input,
                 MlpTape& tape) {
    const std::size_t layers = layout.layer_count();
    tape.activations.resize(layers + 1);
    tape.activations[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = layout.sizes()[l];
        const std::size_t out = layout.sizes()[l + 1];
        const double* w = theta.data() + layout.weight_offset(l);
        const double* b = theta.data() + layout.bias_offset(l);
        const auto& x = tape.activations[l];
        auto& y = tape.activations[l + 1];
        y.resize(out);
        const bool hidden = l + 1 < layers;
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b[o];
            const double* row = w + o * in;
            for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
            y[o] = hidden ? std::tanh(acc) : acc;
        }
    }
}

void mlp_backward(const MlpLayout& layout, std::span<const double> theta, const MlpTape& tape,
                  std::span<const double> grad_output, std::span<double> grad) {
    const std::size_t layers = layout.layer_count();
    std::vector<double> delta(grad_output.begin(), grad_output.end());
    std::vector<double> next;
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = layout.sizes()[l];
        const std::size_t out = layout.sizes()[l + 1];
        const double* w = theta.data() + layout.weight_offset(l);
        double* gw = grad.data() + layout.weight_offset(l);
        double* gb = grad.data() + layout.bias_offset(l);
        const auto& x = tape.activations[l];
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            gb[o] += d;
            double* grow = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) grow[i] += d * x[i];
        }
        if (l == 0) break;
        next.assign(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            const double* row = w + o * in;
            for (std::size_t i = 0; i < in; ++i) next[i] += row[i] * d;
        }
        // x is the tanh output of layer l-1.
        for (std::size_t i = 0; i < in; ++i) next[i] *= 1.0 - x[i] * x[i];
        delta.swap(next);
    }
}

double init_value(const MlpLayout& layout, std::size_t index, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layout.fan_in(index)));
    return rng.uniform(-bound, bound);
}

std::vector<double> init_parameters(const MlpLayout& layout, Rng& rng) {
    std::vector<double> theta(layout.param_count());
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = init_value(layout, i, rng);
    return theta;
}

std::vector<double> widen(std::span<const float> theta) {
    return std::vector<double>(theta.begin(), theta.end());
}

std::vector<float> narrow(std::span<const double> theta) {
    std::vector<float> out(theta.size());
    std::transform(theta.begin(), theta.end(), out.begin(), [](double v) { return static_cast<float>(v); });
    return out;
}

}  // namespace dmpead
