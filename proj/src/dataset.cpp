#include "llp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "llp/rng.hpp"

namespace llp {

void LabeledDataset::validate() const {
    if (X.rank() != 2 || X.rows() != y.size())
        throw std::invalid_argument("dataset has " + std::to_string(y.size()) + " labels for feature shape " +
                                    shape_string(X.shape()));
    for (int label : y)
        if (label < 0 || label >= num_classes)
            throw std::invalid_argument("label " + std::to_string(label) + " outside [0, " +
                                        std::to_string(num_classes) + ")");
}

LabeledDataset two_moons(std::size_t n_per_class, double noise_std, std::uint64_t seed) {
    if (n_per_class < 1) throw std::invalid_argument("two_moons needs n_per_class >= 1");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("two_moons noise must be >= 0");
    Rng rng(seed);
    LabeledDataset ds;
    ds.num_classes = 2;
    ds.X = Tensor::matrix(2 * n_per_class, 2);
    ds.y.resize(2 * n_per_class);
    for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
        const int label = i < n_per_class ? 0 : 1;
        const double t = std::numbers::pi * uniform01(rng);
        double x0 = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
        double x1 = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
        if (noise_std > 0.0) {
            x0 += noise_std * standard_normal(rng);
            x1 += noise_std * standard_normal(rng);
        }
        ds.X(i, 0) = x0;
        ds.X(i, 1) = x1;
        ds.y[i] = label;
    }
    return ds;
}

LabeledDataset gaussian_blobs(const std::vector<std::vector<double>>& centers, std::size_t n_per_center,
                              double std_dev, std::uint64_t seed) {
    if (centers.size() < 2) throw std::invalid_argument("gaussian_blobs needs at least two centers");
    if (!(std_dev >= 0.0)) throw std::invalid_argument("gaussian_blobs std must be >= 0");
    const std::size_t D = centers.front().size();
    if (D == 0) throw std::invalid_argument("blob centers must have at least one coordinate");
    for (const auto& c : centers)
        if (c.size() != D) throw std::invalid_argument("blob centers differ in dimension");
    Rng rng(seed);
    LabeledDataset ds;
    ds.num_classes = static_cast<int>(centers.size());
    ds.X = Tensor::matrix(centers.size() * n_per_center, D);
    ds.y.resize(centers.size() * n_per_center);
    std::size_t i = 0;
    for (std::size_t k = 0; k < centers.size(); ++k) {
        for (std::size_t m = 0; m < n_per_center; ++m, ++i) {
            for (std::size_t j = 0; j < D; ++j)
                ds.X(i, j) = centers[k][j] + (std_dev > 0.0 ? std_dev * standard_normal(rng) : 0.0);
            ds.y[i] = static_cast<int>(k);
        }
    }
    return ds;
}

Tensor standardize(const Tensor& X) {
    const std::size_t n = X.rows();
    const std::size_t D = X.cols();
    if (n < 2) throw std::invalid_argument("standardize needs at least two rows");
    Tensor out = X;
    for (std::size_t j = 0; j < D; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += X(i, j);
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (X(i, j) - mean) * (X(i, j) - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        const bool constant = sd <= 1e-12 * std::max(1.0, std::abs(mean));
        for (std::size_t i = 0; i < n; ++i) out(i, j) = constant ? 0.0 : (X(i, j) - mean) / sd;
    }
    return out;
}

SymmetricEigen jacobi_eigen(const Tensor& A_in, double tol, std::size_t max_sweeps) {
    const std::size_t n = A_in.rows();
    if (A_in.cols() != n) throw ShapeError("jacobi_eigen needs a square matrix");
    Tensor A = A_in;
    Tensor V = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) V(i, i) = 1.0;

    double scale = 0.0;
    for (double v : A.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (std::sqrt(off) <= tol * std::max(scale, 1e-300)) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (apq == 0.0) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = A(k, p);
                    const double akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = A(p, k);
                    const double aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = V(k, p);
                    const double vkq = V(k, q);
                    V(k, p) = c * vkp - s * vkq;
                    V(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    SymmetricEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = A(i, i);
    out.vectors = std::move(V);
    return out;
}

PcaResult pca(const Tensor& X, std::size_t d) {
    const std::size_t n = X.rows();
    const std::size_t D = X.cols();
    if (d < 1 || d > std::min(n, D))
        throw std::invalid_argument("PCA target dimension " + std::to_string(d) + " outside [1, " +
                                    std::to_string(std::min(n, D)) + "]");
    if (n < 2) throw std::invalid_argument("PCA needs at least two rows");

    std::vector<double> mean(D, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < D; ++j) mean[j] += X(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    Tensor centered = X;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < D; ++j) centered(i, j) -= mean[j];

    Tensor cov = Tensor::matrix(D, D);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = centered.row(i);
        for (std::size_t a = 0; a < D; ++a)
            for (std::size_t b = a; b < D; ++b) cov(a, b) += r[a] * r[b];
    }
    for (std::size_t a = 0; a < D; ++a)
        for (std::size_t b = a; b < D; ++b) {
            cov(a, b) /= static_cast<double>(n - 1);
            cov(b, a) = cov(a, b);
        }

    const SymmetricEigen eig = jacobi_eigen(cov);
    std::vector<std::size_t> order(D);
    for (std::size_t i = 0; i < D; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return eig.values[a] > eig.values[b]; });

    PcaResult out;
    out.components = Tensor::matrix(d, D);
    out.eigenvalues.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t col = order[k];
        out.eigenvalues[k] = eig.values[col];
        std::size_t arg = 0;
        for (std::size_t j = 1; j < D; ++j)
            if (std::abs(eig.vectors(j, col)) > std::abs(eig.vectors(arg, col))) arg = j;
        const double sign = eig.vectors(arg, col) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < D; ++j) out.components(k, j) = sign * eig.vectors(j, col);
    }
    out.projected = Tensor::matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = centered.row(i);
        for (std::size_t k = 0; k < d; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < D; ++j) s += r[j] * out.components(k, j);
            out.projected(i, k) = s;
        }
    }
    return out;
}

Tensor pca_project(const Tensor& X, std::size_t d) { return pca(X, d).projected; }

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_dataset_csv(std::ostream& out, const LabeledDataset& ds) {
    ds.validate();
    const std::size_t D = ds.dim();
    for (std::size_t j = 0; j < D; ++j) out << 'f' << j << ',';
    out << "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < D; ++j) out << format_double(ds.X(i, j)) << ',';
        out << ds.y[i] << '\n';
    }
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_dataset_csv(out, ds);
}

LabeledDataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("dataset CSV is empty");
    std::size_t columns = std::count(line.begin(), line.end(), ',') + 1;
    if (columns < 2 || line.substr(line.rfind(',') + 1) != "label")
        throw std::invalid_argument("dataset CSV header must be f0,...,label");
    const std::size_t D = columns - 1;
    std::vector<double> values;
    LabeledDataset ds;
    int max_label = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (std::size_t j = 0; j < D; ++j) {
            if (!std::getline(ss, cell, ',')) throw std::invalid_argument("short dataset CSV row: " + line);
            values.push_back(std::stod(cell));
        }
        if (!std::getline(ss, cell, ',')) throw std::invalid_argument("dataset CSV row missing label: " + line);
        const int label = std::stoi(cell);
        ds.y.push_back(label);
        max_label = std::max(max_label, label);
    }
    ds.X = Tensor::matrix(ds.y.size(), D, std::move(values));
    ds.num_classes = max_label + 1;
    ds.validate();
    return ds;
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_dataset_csv(in);
}

} // namespace llp
