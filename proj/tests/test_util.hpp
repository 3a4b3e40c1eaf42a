#pragma once

#include <cstdint>
#include <vector>

#include "llp/mlp.hpp"
#include "llp/rng.hpp"

namespace llp::testing {

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t = Tensor::matrix(rows, cols);
    for (double& v : t.values()) v = scale * standard_normal(rng);
    return t;
}

/// Random MLP with nonzero biases so every parameter path is exercised.
inline MlpParams random_mlp(const std::vector<std::size_t>& dims, std::uint64_t seed,
                            Activation act = Activation::relu) {
    MlpParams p = MlpParams::init(dims, seed, act);
    Rng rng(seed ^ 0x5eedULL);
    for (auto& layer : p.mutable_layers())
        for (double& b : layer.bias.values()) b = 0.3 * standard_normal(rng);
    return p;
}

inline MlpParams zero_mlp(const std::vector<std::size_t>& dims) {
    MlpParams p = MlpParams::init(dims, 1);
    for (auto& layer : p.mutable_layers()) {
        for (double& w : layer.weight.values()) w = 0.0;
        for (double& b : layer.bias.values()) b = 0.0;
    }
    return p;
}

} // namespace llp::testing
