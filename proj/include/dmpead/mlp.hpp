#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dmpead {

// Fully connected network: affine layers with tanh between them, final layer
// affine. Parameters are one flat vector; layer l stores its weight matrix
// (out x in, row-major) followed by its bias.
class MlpLayout {
public:
    MlpLayout() = default;
    explicit MlpLayout(std::vector<std::size_t> sizes);

    const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
    std::size_t layer_count() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    std::size_t input_width() const noexcept { return sizes_.front(); }
    std::size_t output_width() const noexcept { return sizes_.back(); }
    std::size_t param_count() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
    std::size_t widest() const noexcept { return widest_; }

    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const {
        return offsets_[layer] + sizes_[layer] * sizes_[layer + 1];
    }
    // Input width of the layer that owns parameter `index`.
    std::size_t fan_in(std::size_t index) const;

    friend bool operator==(const MlpLayout& a, const MlpLayout& b) { return a.sizes_ == b.sizes_; }

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    std::size_t widest_ = 0;
};

// Activations of one forward pass, kept for the backward pass.
struct MlpTape {
    std::vector<std::vector<double>> activations;  // [0] = input, back() = output
};

void mlp_forward(const MlpLayout& layout, std::span<const double> theta, std::span<const double> input,
                 MlpTape& tape);

// Accumulates d(loss)/d(theta) into grad given d(loss)/d(output).
void mlp_backward(const MlpLayout& layout, std::span<const double> theta, const MlpTape& tape,
                  std::span<const double> grad_output, std::span<double> grad);

class Rng;

// Uniform in +-1/sqrt(fan_in) for every weight and bias.
double init_value(const MlpLayout& layout, std::size_t index, Rng& rng);
std::vector<double> init_parameters(const MlpLayout& layout, Rng& rng);

std::vector<double> widen(std::span<const float> theta);
std::vector<float> narrow(std::span<const double> theta);

}  // namespace dmpead
