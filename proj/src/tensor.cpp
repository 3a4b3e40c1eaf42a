#include "llp/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace llp {

namespace {
std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
} // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (element_count(shape_) != values_.size())
        throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(values_.size()) + " values");
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
    return Tensor({rows, cols}, fill);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_string(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_string(shape_));
    return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
    const std::size_t c = cols();
    return std::span<double>(values_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
    const std::size_t c = cols();
    return std::span<const double>(values_).subspan(r * c, c);
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
    const std::size_t c = cols();
    const std::size_t n = rows();
    std::vector<double> out;
    out.reserve(indices.size() * c);
    for (std::size_t idx : indices) {
        if (idx >= n) throw ShapeError("row index " + std::to_string(idx) + " out of range");
        auto r = row(idx);
        out.insert(out.end(), r.begin(), r.end());
    }
    return Tensor::matrix(indices.size(), c, std::move(out));
}

bool Tensor::all_finite() const noexcept {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += " x ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

} // namespace llp
