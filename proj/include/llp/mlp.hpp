#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "llp/tensor.hpp"

namespace llp {

enum class Activation { relu, tanh };

struct DenseLayer {
    Tensor weight; // [fan_in x fan_out]
    Tensor bias;   // [fan_out]

    std::size_t fan_in() const { return weight.shape()[0]; }
    std::size_t fan_out() const { return weight.shape()[1]; }
};

/// Parameters of the instance-level classifier: affine layers with a hidden
/// nonlinearity between them and a softmax on the last layer.
class MlpParams {
public:
    MlpParams() = default;
    MlpParams(std::vector<DenseLayer> layers, Activation activation = Activation::relu);

    /// Glorot-uniform weights, zero biases. dims = {D, hidden..., L}.
    static MlpParams init(std::span<const std::size_t> dims, std::uint64_t seed,
                          Activation activation = Activation::relu);

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }
    Activation activation() const noexcept { return activation_; }

    std::size_t input_dim() const { return layers_.front().fan_in(); }
    std::size_t num_classes() const { return layers_.back().fan_out(); }
    std::size_t parameter_count() const;
    std::vector<std::size_t> dims() const;

    /// Parameter blocks in a fixed order: w0, b0, w1, b1, ...
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;

    friend bool operator==(const MlpParams&, const MlpParams&);

private:
    std::vector<DenseLayer> layers_;
    Activation activation_ = Activation::relu;
};

/// Gradients mirroring MlpParams, plus an optional gradient w.r.t. the input batch.
struct GradBundle {
    std::vector<DenseLayer> layers;
    std::optional<Tensor> input;

    static GradBundle zeros_like(const MlpParams& params);

    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;

    /// this += scale * other (parameter parts only).
    void add_scaled(const GradBundle& other, double scale);
    double max_abs() const;
};

/// Intermediate values of one forward pass; needed for backprop.
struct ForwardCache {
    std::vector<Tensor> inputs;      // input to each layer (inputs[0] == X)
    std::vector<Tensor> preacts;     // affine output of each layer
    Tensor probs;
};

ForwardCache mlp_forward_cached(const MlpParams& params, const Tensor& X);
Tensor mlp_forward(const MlpParams& params, const Tensor& X);

/// Reverse-mode gradient of a scalar loss given dLoss/dProbs for the batch.
GradBundle backprop(const MlpParams& params, const ForwardCache& cache, const Tensor& upstream,
                    bool want_input_grad = false);
GradBundle backprop(const MlpParams& params, const Tensor& X, const Tensor& upstream,
                    bool want_input_grad = false);

/// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& logits);

using ParamLoss = std::function<double(const MlpParams&)>;
using InputLoss = std::function<double(const Tensor&)>;

/// Central differences over every parameter coordinate.
GradBundle finite_diff_grad(const ParamLoss& loss, const MlpParams& params, double h);

/// Central differences over every input coordinate.
Tensor finite_diff_input_grad(const InputLoss& loss, const Tensor& X, double h);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps coordinates
/// whose gradient is essentially zero from dominating through roundoff.
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);
double max_relative_error(const GradBundle& a, const GradBundle& b, double floor = 1e-6);

} // namespace llp
