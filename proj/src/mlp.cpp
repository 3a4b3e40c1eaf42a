#include "llp/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "llp/rng.hpp"

namespace llp {

MlpParams::MlpParams(std::vector<DenseLayer> layers, Activation activation)
    : layers_(std::move(layers)), activation_(activation) {
    if (layers_.empty()) throw ShapeError("MLP needs at least one layer");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& layer = layers_[k];
        if (layer.weight.rank() != 2 || layer.bias.rank() != 1 || layer.bias.size() != layer.fan_out())
            throw ShapeError("layer " + std::to_string(k) + " has inconsistent weight/bias shapes");
        if (k + 1 < layers_.size() && layer.fan_out() != layers_[k + 1].fan_in())
            throw ShapeError("layer " + std::to_string(k) + " fan_out does not chain into layer " +
                             std::to_string(k + 1));
    }
}

MlpParams MlpParams::init(std::span<const std::size_t> dims, std::uint64_t seed, Activation activation) {
    if (dims.size() < 2) throw ShapeError("MLP dims need at least input and output sizes");
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        const std::size_t fan_in = dims[k];
        const std::size_t fan_out = dims[k + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor w = Tensor::matrix(fan_in, fan_out);
        for (double& v : w.values()) v = (2.0 * uniform01(rng) - 1.0) * limit;
        layers.push_back({std::move(w), Tensor({fan_out}, 0.0)});
    }
    return MlpParams(std::move(layers), activation);
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

std::vector<std::size_t> MlpParams::dims() const {
    std::vector<std::size_t> d{input_dim()};
    for (const auto& l : layers_) d.push_back(l.fan_out());
    return d;
}

std::vector<std::span<double>> MlpParams::blocks() {
    std::vector<std::span<double>> out;
    for (auto& l : layers_) {
        out.push_back(l.weight.values());
        out.push_back(l.bias.values());
    }
    return out;
}

std::vector<std::span<const double>> MlpParams::blocks() const {
    std::vector<std::span<const double>> out;
    for (const auto& l : layers_) {
        out.push_back(l.weight.values());
        out.push_back(l.bias.values());
    }
    return out;
}

bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.activation_ != b.activation_ || a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t k = 0; k < a.layers_.size(); ++k)
        if (!(a.layers_[k].weight == b.layers_[k].weight) || !(a.layers_[k].bias == b.layers_[k].bias))
            return false;
    return true;
}

GradBundle GradBundle::zeros_like(const MlpParams& params) {
    GradBundle g;
    for (const auto& l : params.layers())
        g.layers.push_back({Tensor(l.weight.shape(), 0.0), Tensor(l.bias.shape(), 0.0)});
    return g;
}

std::vector<std::span<double>> GradBundle::blocks() {
    std::vector<std::span<double>> out;
    for (auto& l : layers) {
        out.push_back(l.weight.values());
        out.push_back(l.bias.values());
    }
    return out;
}

std::vector<std::span<const double>> GradBundle::blocks() const {
    std::vector<std::span<const double>> out;
    for (const auto& l : layers) {
        out.push_back(l.weight.values());
        out.push_back(l.bias.values());
    }
    return out;
}

void GradBundle::add_scaled(const GradBundle& other, double scale) {
    if (other.layers.size() != layers.size()) throw ShapeError("gradient bundles differ in depth");
    auto dst = blocks();
    auto src = other.blocks();
    for (std::size_t b = 0; b < dst.size(); ++b) {
        if (dst[b].size() != src[b].size()) throw ShapeError("gradient block size mismatch");
        for (std::size_t i = 0; i < dst[b].size(); ++i) dst[b][i] += scale * src[b][i];
    }
}

double GradBundle::max_abs() const {
    double m = 0.0;
    for (auto block : blocks())
        for (double v : block) m = std::max(m, std::abs(v));
    return m;
}

Tensor softmax_rows(const Tensor& logits) {
    Tensor out = logits;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
    return out;
}

namespace {

Tensor affine(const Tensor& in, const DenseLayer& layer) {
    const std::size_t n = in.rows();
    const std::size_t fan_in = layer.fan_in();
    const std::size_t fan_out = layer.fan_out();
    Tensor out = Tensor::matrix(n, fan_out);
    for (std::size_t r = 0; r < n; ++r) {
        auto o = out.row(r);
        std::copy(layer.bias.values().begin(), layer.bias.values().end(), o.begin());
        auto x = in.row(r);
        for (std::size_t i = 0; i < fan_in; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            auto w = layer.weight.row(i);
            for (std::size_t j = 0; j < fan_out; ++j) o[j] += xi * w[j];
        }
    }
    return out;
}

double activate(Activation a, double z) {
    switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    }
    return z;
}

// Derivative expressed through the preactivation z and output y = act(z).
double activate_grad(Activation a, double z, double y) {
    switch (a) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
    }
    return 1.0;
}

} // namespace

ForwardCache mlp_forward_cached(const MlpParams& params, const Tensor& X) {
    if (X.rank() != 2 || X.cols() != params.input_dim())
        throw ShapeError("input of shape " + shape_string(X.shape()) + " does not match MLP input dim " +
                         std::to_string(params.input_dim()));
    ForwardCache cache;
    const auto& layers = params.layers();
    Tensor current = X;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        Tensor z = affine(current, layers[k]);
        cache.inputs.push_back(std::move(current));
        if (k + 1 < layers.size()) {
            current = z;
            for (double& v : current.values()) v = activate(params.activation(), v);
        } else {
            cache.probs = softmax_rows(z);
        }
        cache.preacts.push_back(std::move(z));
    }
    return cache;
}

Tensor mlp_forward(const MlpParams& params, const Tensor& X) { return mlp_forward_cached(params, X).probs; }

GradBundle backprop(const MlpParams& params, const ForwardCache& cache, const Tensor& upstream,
                    bool want_input_grad) {
    if (!upstream.same_shape(cache.probs))
        throw ShapeError("upstream gradient shape " + shape_string(upstream.shape()) +
                         " does not match output shape " + shape_string(cache.probs.shape()));
    const auto& layers = params.layers();
    const std::size_t n = upstream.rows();
    const std::size_t L = upstream.cols();

    // Through softmax: dz = p * (g - <g, p>).
    Tensor delta = Tensor::matrix(n, L);
    for (std::size_t r = 0; r < n; ++r) {
        auto p = cache.probs.row(r);
        auto g = upstream.row(r);
        double dot = 0.0;
        for (std::size_t j = 0; j < L; ++j) dot += g[j] * p[j];
        auto d = delta.row(r);
        for (std::size_t j = 0; j < L; ++j) d[j] = p[j] * (g[j] - dot);
    }

    GradBundle grads = GradBundle::zeros_like(params);
    for (std::size_t k = layers.size(); k-- > 0;) {
        const Tensor& in = cache.inputs[k];
        const auto& layer = layers[k];
        const std::size_t fan_in = layer.fan_in();
        const std::size_t fan_out = layer.fan_out();
        auto& gw = grads.layers[k].weight;
        auto& gb = grads.layers[k].bias;
        for (std::size_t r = 0; r < n; ++r) {
            auto d = delta.row(r);
            auto x = in.row(r);
            for (std::size_t j = 0; j < fan_out; ++j) gb[j] += d[j];
            for (std::size_t i = 0; i < fan_in; ++i) {
                const double xi = x[i];
                if (xi == 0.0) continue;
                auto g = gw.row(i);
                for (std::size_t j = 0; j < fan_out; ++j) g[j] += xi * d[j];
            }
        }
        if (k == 0 && !want_input_grad) break;

        Tensor prev = Tensor::matrix(n, fan_in);
        for (std::size_t r = 0; r < n; ++r) {
            auto d = delta.row(r);
            auto out = prev.row(r);
            for (std::size_t i = 0; i < fan_in; ++i) {
                auto w = layer.weight.row(i);
                double s = 0.0;
                for (std::size_t j = 0; j < fan_out; ++j) s += w[j] * d[j];
                out[i] = s;
            }
        }
        if (k == 0) {
            grads.input = std::move(prev);
            break;
        }
        const Tensor& z = cache.preacts[k - 1];
        for (std::size_t idx = 0; idx < prev.size(); ++idx)
            prev[idx] *= activate_grad(params.activation(), z[idx], in[idx]);
        delta = std::move(prev);
    }
    return grads;
}

GradBundle backprop(const MlpParams& params, const Tensor& X, const Tensor& upstream, bool want_input_grad) {
    return backprop(params, mlp_forward_cached(params, X), upstream, want_input_grad);
}

GradBundle finite_diff_grad(const ParamLoss& loss, const MlpParams& params, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
    MlpParams probe = params;
    GradBundle grads = GradBundle::zeros_like(params);
    auto pblocks = probe.blocks();
    auto gblocks = grads.blocks();
    for (std::size_t b = 0; b < pblocks.size(); ++b) {
        for (std::size_t i = 0; i < pblocks[b].size(); ++i) {
            const double orig = pblocks[b][i];
            pblocks[b][i] = orig + h;
            const double up = loss(probe);
            pblocks[b][i] = orig - h;
            const double down = loss(probe);
            pblocks[b][i] = orig;
            gblocks[b][i] = (up - down) / (2.0 * h);
        }
    }
    return grads;
}

Tensor finite_diff_input_grad(const InputLoss& loss, const Tensor& X, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
    Tensor probe = X;
    Tensor grad(X.shape(), 0.0);
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = loss(probe);
        probe[i] = orig - h;
        const double down = loss(probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    if (a.size() != b.size()) throw ShapeError("relative error of spans with different sizes");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

double max_relative_error(const GradBundle& a, const GradBundle& b, double floor) {
    auto ab = a.blocks();
    auto bb = b.blocks();
    if (ab.size() != bb.size()) throw ShapeError("gradient bundles differ in depth");
    double worst = 0.0;
    for (std::size_t k = 0; k < ab.size(); ++k)
        worst = std::max(worst, max_relative_error(ab[k], bb[k], floor));
    return worst;
}

} // namespace llp
