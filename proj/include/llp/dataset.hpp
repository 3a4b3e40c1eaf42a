#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "llp/tensor.hpp"

namespace llp {

/// Features with hidden per-instance labels. Training code takes `X` only;
/// labels are read by bag construction and test evaluation.
struct LabeledDataset {
    Tensor X;                // [N x D]
    std::vector<int> y;      // N labels in [0, L)
    int num_classes = 0;

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return X.cols(); }

    /// Throws std::invalid_argument if labels and features disagree.
    void validate() const;
};

/// Two interleaved unit half-circles: class 0 on (cos t, sin t), class 1 on
/// (1 - cos t, 0.5 - sin t), t ~ U[0, pi], plus isotropic Gaussian noise.
LabeledDataset two_moons(std::size_t n_per_class, double noise_std, std::uint64_t seed);

LabeledDataset gaussian_blobs(const std::vector<std::vector<double>>& centers, std::size_t n_per_center,
                              double std_dev, std::uint64_t seed);

/// Per-column zero mean and unit sample variance; constant columns become 0.
Tensor standardize(const Tensor& X);

struct PcaResult {
    Tensor projected;                // [N x d]
    Tensor components;               // [d x D], rows are unit eigenvectors
    std::vector<double> eigenvalues; // descending, length d
};

/// Projects centered X onto the top-d eigenvectors of its sample covariance.
/// Each component's largest-magnitude entry is made positive.
PcaResult pca(const Tensor& X, std::size_t d);
Tensor pca_project(const Tensor& X, std::size_t d);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenvalues ascending are NOT guaranteed; callers sort.
struct SymmetricEigen {
    std::vector<double> values;
    Tensor vectors; // columns are eigenvectors
};
SymmetricEigen jacobi_eigen(const Tensor& A, double tol = 1e-14, std::size_t max_sweeps = 100);

/// CSV with header f0,...,f{D-1},label.
void write_dataset_csv(std::ostream& out, const LabeledDataset& ds);
void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset read_dataset_csv(std::istream& in);
LabeledDataset read_dataset_csv(const std::filesystem::path& path);

/// Shortest text form that parses back to the same double.
std::string format_double(double v);

} // namespace llp
