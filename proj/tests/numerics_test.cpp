#include <cmath>

#include "doctest.h"
#include "llp/mlp.hpp"
#include "test_util.hpp"

using namespace llp;
using llp::testing::random_matrix;
using llp::testing::random_mlp;
using llp::testing::zero_mlp;

namespace {

double cross_entropy(const MlpParams& params, const Tensor& X, const std::vector<int>& y) {
    const Tensor p = mlp_forward(params, X);
    double loss = 0.0;
    for (std::size_t r = 0; r < X.rows(); ++r) loss -= std::log(p(r, static_cast<std::size_t>(y[r])));
    return loss;
}

Tensor cross_entropy_upstream(const MlpParams& params, const Tensor& X, const std::vector<int>& y) {
    const Tensor p = mlp_forward(params, X);
    Tensor g(p.shape(), 0.0);
    for (std::size_t r = 0; r < X.rows(); ++r) g(r, static_cast<std::size_t>(y[r])) = -1.0 / p(r, static_cast<std::size_t>(y[r]));
    return g;
}

} // namespace

TEST_CASE("tensor shape invariant") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
    Tensor t = Tensor::matrix(2, 3, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.all_finite());
    const std::vector<std::size_t> idx{1, 0, 1};
    CHECK(t.gather_rows(idx).rows() == 3);
    const std::vector<std::size_t> bad{2};
    CHECK_THROWS_AS(t.gather_rows(bad), ShapeError);
}

TEST_CASE("mlp layers must chain") {
    std::vector<DenseLayer> layers{{Tensor::matrix(2, 4), Tensor({4}, 0.0)}, {Tensor::matrix(3, 2), Tensor({2}, 0.0)}};
    CHECK_THROWS_AS(MlpParams{layers}, ShapeError);
}

TEST_CASE("mlp_forward: zero logits give the uniform distribution") {
    const MlpParams p = zero_mlp({2, 5, 3});
    const Tensor out = mlp_forward(p, random_matrix(4, 2, 7));
    for (double v : out.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("mlp_forward: saturated softmax") {
    std::vector<DenseLayer> layers{{Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0}), Tensor({2}, 0.0)}};
    const MlpParams p(layers);
    const Tensor out = mlp_forward(p, Tensor::matrix(1, 2, {1000.0, 0.0}));
    CHECK(out(0, 0) == doctest::Approx(1.0));
    CHECK(out(0, 1) == doctest::Approx(0.0));
    CHECK(out.all_finite());
}

TEST_CASE("mlp_forward: rows on the simplex and deterministic") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const MlpParams p = random_mlp({2, 16, 3}, seed);
        const Tensor X = random_matrix(32, 2, seed + 100, 3.0);
        const Tensor out = mlp_forward(p, X);
        for (std::size_t r = 0; r < out.rows(); ++r) {
            double s = 0.0;
            for (double v : out.row(r)) {
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
        CHECK(mlp_forward(p, X) == out);
    }
}

TEST_CASE("mlp_forward rejects a dimension mismatch") {
    const MlpParams p = random_mlp({3, 4, 2}, 1);
    CHECK_THROWS_AS(mlp_forward(p, random_matrix(2, 2, 1)), ShapeError);
}

TEST_CASE("backprop: zero upstream gives zero gradients") {
    const MlpParams p = random_mlp({2, 8, 3}, 3);
    const Tensor X = random_matrix(5, 2, 4);
    const GradBundle g = backprop(p, X, Tensor::matrix(5, 3), true);
    CHECK(g.max_abs() == 0.0);
    for (double v : g.input->values()) CHECK(v == 0.0);
}

TEST_CASE("backprop rejects an upstream of the wrong shape") {
    const MlpParams p = random_mlp({2, 8, 3}, 3);
    CHECK_THROWS_AS(backprop(p, random_matrix(5, 2, 4), Tensor::matrix(4, 3)), ShapeError);
}

TEST_CASE("backprop matches central finite differences") {
    const std::vector<std::vector<std::size_t>> archs{{2, 8, 3}, {3, 5, 4, 2}, {2, 6, 5, 4, 3}, {4, 3}};
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 24; ++seed) {
        const auto& dims = archs[seed % archs.size()];
        const Activation act = seed % 3 == 2 ? Activation::tanh : Activation::relu;
        const MlpParams p = random_mlp(dims, seed, act);
        const Tensor X = random_matrix(6, dims.front(), seed + 1000);
        std::vector<int> y;
        for (std::size_t r = 0; r < X.rows(); ++r) y.push_back(static_cast<int>((r + seed) % dims.back()));

        const GradBundle analytic = backprop(p, X, cross_entropy_upstream(p, X, y), true);
        const GradBundle numeric =
            finite_diff_grad([&](const MlpParams& q) { return cross_entropy(q, X, y); }, p, 1e-5);
        CHECK(max_relative_error(analytic, numeric) < 1e-4);

        const Tensor numeric_in =
            finite_diff_input_grad([&](const Tensor& Z) { return cross_entropy(p, Z, y); }, X, 1e-5);
        CHECK(max_relative_error(analytic.input->values(), numeric_in.values()) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 20);
}

TEST_CASE("finite_diff_grad on analytic losses") {
    const MlpParams p = random_mlp({2, 3, 2}, 9);
    const double h = 1e-4;
    auto half_sq = [](const MlpParams& q) {
        double s = 0.0;
        for (auto block : q.blocks())
            for (double v : block) s += 0.5 * v * v;
        return s;
    };
    const GradBundle g = finite_diff_grad(half_sq, p, h);
    auto gb = g.blocks();
    auto pb = p.blocks();
    for (std::size_t b = 0; b < pb.size(); ++b)
        for (std::size_t i = 0; i < pb[b].size(); ++i) CHECK(std::abs(gb[b][i] - pb[b][i]) < 1e-9);

    const GradBundle z = finite_diff_grad([](const MlpParams&) { return 4.2; }, p, h);
    CHECK(z.max_abs() == 0.0);
    CHECK_THROWS_AS(finite_diff_grad(half_sq, p, 0.0), std::invalid_argument);
}

TEST_CASE("init is seeded Glorot-uniform with zero biases") {
    const std::vector<std::size_t> dims{2, 64, 64, 3};
    const MlpParams a = MlpParams::init(dims, 5);
    CHECK(a == MlpParams::init(dims, 5));
    CHECK_FALSE(a == MlpParams::init(dims, 6));
    for (std::size_t k = 0; k < a.layers().size(); ++k) {
        const auto& l = a.layers()[k];
        const double limit = std::sqrt(6.0 / static_cast<double>(l.fan_in() + l.fan_out()));
        for (double w : l.weight.values()) CHECK(std::abs(w) <= limit);
        for (double b : l.bias.values()) CHECK(b == 0.0);
    }
    CHECK(a.parameter_count() == 2 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
    CHECK(a.dims() == dims);
}
