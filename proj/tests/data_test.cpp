#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "doctest.h"
#include "llp/dataset.hpp"
#include "test_util.hpp"

using namespace llp;
using llp::testing::random_matrix;

TEST_CASE("two_moons: sizes, labels, and noiseless geometry") {
    const LabeledDataset ds = two_moons(40, 0.0, 3);
    REQUIRE(ds.size() == 80);
    CHECK(ds.dim() == 2);
    CHECK(ds.num_classes == 2);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double x = ds.X(i, 0), y = ds.X(i, 1);
        if (ds.y[i] == 0) {
            CHECK(x * x + y * y == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(y >= -1e-12);
        } else {
            const double u = 1.0 - x, v = 0.5 - y;
            CHECK(u * u + v * v == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(y <= 0.5 + 1e-12);
        }
    }
    CHECK(std::count(ds.y.begin(), ds.y.end(), 0) == 40);
}

TEST_CASE("two_moons: seeded and reproducible") {
    CHECK(two_moons(30, 0.1, 5).X == two_moons(30, 0.1, 5).X);
    CHECK_FALSE(two_moons(30, 0.1, 5).X == two_moons(30, 0.1, 6).X);
    CHECK_THROWS_AS(two_moons(10, -1.0, 0), std::invalid_argument);
}

TEST_CASE("gaussian_blobs: per-center sample means approach the centers") {
    const std::vector<std::vector<double>> c{{0, 0}, {3, 1}, {-2, 4}};
    const LabeledDataset ds = gaussian_blobs(c, 4000, 0.5, 9);
    REQUIRE(ds.size() == 12000);
    CHECK(ds.num_classes == 3);
    for (int k = 0; k < 3; ++k) {
        double mx = 0, my = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.y[i] == k) {
                mx += ds.X(i, 0);
                my += ds.X(i, 1);
                ++n;
            }
        CHECK(n == 4000);
        CHECK(std::abs(mx / n - c[k][0]) < 0.05);
        CHECK(std::abs(my / n - c[k][1]) < 0.05);
    }
}

TEST_CASE("standardize: zero mean, unit sample variance, constant column to zero") {
    Tensor X = random_matrix(50, 3, 4, 2.0);
    for (std::size_t i = 0; i < 50; ++i) X(i, 2) = 7.0;
    const Tensor Z = standardize(X);
    for (std::size_t j = 0; j < 2; ++j) {
        double m = 0, v = 0;
        for (std::size_t i = 0; i < 50; ++i) m += Z(i, j);
        m /= 50;
        for (std::size_t i = 0; i < 50; ++i) v += (Z(i, j) - m) * (Z(i, j) - m);
        CHECK(std::abs(m) < 1e-12);
        CHECK(v / 49 == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < 50; ++i) CHECK(Z(i, 2) == 0.0);
}

TEST_CASE("jacobi_eigen reconstructs a symmetric matrix") {
    const Tensor B = random_matrix(6, 6, 12);
    Tensor A = Tensor::matrix(6, 6);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) A(i, j) = B(i, j) + B(j, i);
    const SymmetricEigen e = jacobi_eigen(A);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 6; ++k) s += e.vectors(i, k) * e.values[k] * e.vectors(j, k);
            CHECK(std::abs(s - A(i, j)) < 1e-10);
        }
}

TEST_CASE("pca agrees with an independent eigen-solver oracle") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const std::size_t n = 60, D = 7, d = 4;
        Tensor X = random_matrix(n, D, 100 + seed);
        // anisotropic so the spectrum is well separated
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < D; ++j) X(i, j) *= 1.0 + 1.5 * static_cast<double>(j);
        const PcaResult r = pca(X, d);

        Eigen::MatrixXd M(n, D);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < D; ++j) M(i, j) = X(i, j);
        const Eigen::MatrixXd C = M.rowwise() - M.colwise().mean();
        const Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(n - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        for (std::size_t k = 0; k < d; ++k) {
            const Eigen::Index col = static_cast<Eigen::Index>(D - 1 - k); // Eigen sorts ascending
            CHECK(r.eigenvalues[k] == doctest::Approx(es.eigenvalues()(col)).epsilon(1e-10));
            Eigen::VectorXd v = es.eigenvectors().col(col);
            Eigen::Index big = 0;
            v.cwiseAbs().maxCoeff(&big);
            if (v(big) < 0) v = -v;
            for (std::size_t j = 0; j < D; ++j) CHECK(std::abs(r.components(k, j) - v(static_cast<Eigen::Index>(j))) < 1e-9);
            const Eigen::VectorXd proj = C * v;
            for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(r.projected(i, k) - proj(static_cast<Eigen::Index>(i))) < 1e-9);
        }
    }
}

TEST_CASE("pca rejects out-of-range target dimensions") {
    const Tensor X = random_matrix(5, 3, 1);
    CHECK_THROWS_AS(pca(X, 0), std::invalid_argument);
    CHECK_THROWS_AS(pca(X, 4), std::invalid_argument);
    CHECK(pca_project(X, 3).cols() == 3);
}

TEST_CASE("dataset CSV round trip is exact") {
    const LabeledDataset ds = gaussian_blobs({{0, 0, 0}, {1, 2, 3}}, 20, 0.7, 2);
    std::stringstream ss;
    write_dataset_csv(ss, ds);
    CHECK(ss.str().rfind("f0,f1,f2,label\n", 0) == 0);
    const LabeledDataset back = read_dataset_csv(ss);
    CHECK(back.X == ds.X);
    CHECK(back.y == ds.y);
    CHECK(back.num_classes == 2);
}

TEST_CASE("dataset CSV rejects malformed rows") {
    std::stringstream bad("f0,f1,label\n1.0,2.0,0\n1.0,0\n");
    CHECK_THROWS(read_dataset_csv(bad));
}
