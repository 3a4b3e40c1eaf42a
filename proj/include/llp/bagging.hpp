#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llp/dataset.hpp"

namespace llp {

/// Empirical class histogram: entry j = count(j) / |labels|.
std::vector<double> proportion_label(std::span<const int> labels, int num_classes);

struct Bag {
    std::vector<std::size_t> indices;
    std::vector<double> proportion;

    /// Bag whose proportion is the histogram of the dataset's hidden labels.
    static Bag from_dataset(std::vector<std::size_t> indices, const LabeledDataset& ds);

    std::size_t size() const { return indices.size(); }
};

struct BagCollection {
    std::vector<Bag> bags;
    std::string source;      // dataset identifier
    std::string method;      // "uniform", "kmeans", or a derived tag
    std::size_t bag_size = 0; // uniform
    std::size_t k = 0;        // kmeans
    std::size_t threshold = 0; // subsample threshold, 0 when not applied
    std::uint64_t seed = 0;
    int num_classes = 0;

    std::size_t size() const { return bags.size(); }

    /// Every index < n, no empty bag, proportions on the simplex.
    void validate(std::size_t n) const;
};

BagCollection uniform_bags(const LabeledDataset& ds, std::size_t bag_size, std::uint64_t seed);

struct KMeansResult {
    std::vector<std::size_t> assignment;
    Tensor centroids;                     // [K x d]
    std::vector<double> objective_history; // after initial assignment, then one per iteration
    std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Ties in assignment go to the
/// lowest centroid index; an emptied cluster keeps its previous centroid.
KMeansResult lloyd_kmeans(const Tensor& points, std::size_t K, std::uint64_t seed, std::size_t max_iter = 100);

double kmeans_objective(const Tensor& points, const Tensor& centroids, std::span<const std::size_t> assignment);

struct KMeansBagOptions {
    std::size_t max_iter = 100;
    std::size_t pca_dim = 10; // clipped to min(N, D)
};

/// Clusters standardize -> pca_project features; empty clusters are dropped.
BagCollection kmeans_bags(const LabeledDataset& ds, std::size_t K, std::uint64_t seed,
                          const KMeansBagOptions& options = {});

/// Bags larger than the threshold are reduced to a uniform sample of
/// `threshold` indices. The proportion is carried over unchanged.
Bag subsample_bag(const Bag& bag, std::size_t threshold, std::uint64_t seed);
BagCollection subsample_bags(const BagCollection& bags, std::size_t threshold, std::uint64_t seed);

struct BagSplit {
    BagCollection train;
    BagCollection val;
};

/// Seeded shuffle; the first round(fraction * M) bags go to train.
BagSplit split_bags(const BagCollection& bags, double train_fraction, std::uint64_t seed);

nlohmann::ordered_json bags_to_json(const BagCollection& bags);
BagCollection bags_from_json(const nlohmann::json& j);
void write_bags_json(const std::filesystem::path& path, const BagCollection& bags,
                     const std::optional<std::string>& config_hash = std::nullopt);
BagCollection read_bags_json(const std::filesystem::path& path);

} // namespace llp
