#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace llp {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor of doubles. Rank-1 and rank-2 are what the library
/// uses; higher ranks are storable but only shape/values are exposed for them.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor vector(std::vector<double> values);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }

    std::size_t rows() const;
    std::size_t cols() const;

    double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> row(std::size_t r);
    std::span<const double> row(std::size_t r) const;

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    /// Rows selected by index, in the given order.
    Tensor gather_rows(std::span<const std::size_t> indices) const;

    bool all_finite() const noexcept;
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

} // namespace llp
