#include "llp/bagging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "llp/losses.hpp"
#include "llp/rng.hpp"

namespace llp {

std::vector<double> proportion_label(std::span<const int> labels, int num_classes) {
    if (labels.empty()) throw std::invalid_argument("proportion label of an empty bag");
    if (num_classes < 1) throw std::invalid_argument("proportion label needs at least one class");
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw std::invalid_argument("label outside class range");
        ++counts[static_cast<std::size_t>(y)];
    }
    std::vector<double> p(counts.size());
    const double n = static_cast<double>(labels.size());
    for (std::size_t j = 0; j < counts.size(); ++j) p[j] = static_cast<double>(counts[j]) / n;
    return p;
}

Bag Bag::from_dataset(std::vector<std::size_t> indices, const LabeledDataset& ds) {
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= ds.size()) throw std::invalid_argument("bag index out of range");
        labels.push_back(ds.y[i]);
    }
    Bag bag;
    bag.proportion = proportion_label(labels, ds.num_classes);
    bag.indices = std::move(indices);
    return bag;
}

void BagCollection::validate(std::size_t n) const {
    for (const auto& bag : bags) {
        if (bag.indices.empty()) throw std::invalid_argument("empty bag in collection");
        for (std::size_t i : bag.indices)
            if (i >= n) throw std::invalid_argument("bag index " + std::to_string(i) + " out of range");
        if (num_classes > 0 && bag.proportion.size() != static_cast<std::size_t>(num_classes))
            throw std::invalid_argument("bag proportion length does not match class count");
        require_simplex(bag.proportion, "bag proportion");
    }
}

BagCollection uniform_bags(const LabeledDataset& ds, std::size_t bag_size, std::uint64_t seed) {
    const std::size_t n = ds.size();
    if (bag_size < 1 || bag_size > n)
        throw std::invalid_argument("bag size " + std::to_string(bag_size) + " outside [1, " + std::to_string(n) + "]");
    const auto perm = seeded_permutation(n, seed);
    BagCollection out;
    out.method = "uniform";
    out.bag_size = bag_size;
    out.seed = seed;
    out.num_classes = ds.num_classes;
    const std::size_t m = n / bag_size;
    out.bags.reserve(m);
    for (std::size_t b = 0; b < m; ++b) {
        std::vector<std::size_t> idx(perm.begin() + static_cast<std::ptrdiff_t>(b * bag_size),
                                     perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * bag_size));
        out.bags.push_back(Bag::from_dataset(std::move(idx), ds));
    }
    return out;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

std::vector<std::size_t> assign_nearest(const Tensor& points, const Tensor& centroids) {
    std::vector<std::size_t> out(points.rows());
    for (std::size_t i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t k = 0; k < centroids.rows(); ++k) {
            const double d = sq_dist(points.row(i), centroids.row(k));
            if (d < best) {
                best = d;
                arg = k;
            }
        }
        out[i] = arg;
    }
    return out;
}

Tensor kmeanspp_init(const Tensor& points, std::size_t K, Rng& rng) {
    const std::size_t n = points.rows();
    Tensor centroids = Tensor::matrix(K, points.cols());
    std::vector<double> mind(n, std::numeric_limits<double>::infinity());
    std::size_t pick = uniform_below(rng, n);
    for (std::size_t k = 0; k < K; ++k) {
        auto src = points.row(pick);
        std::copy(src.begin(), src.end(), centroids.row(k).begin());
        if (k + 1 == K) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mind[i] = std::min(mind[i], sq_dist(points.row(i), centroids.row(k)));
            total += mind[i];
        }
        if (total > 0.0) {
            const double u = uniform01(rng) * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += mind[i];
                if (u < acc && mind[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = uniform_below(rng, n);
        }
    }
    return centroids;
}

} // namespace

double kmeans_objective(const Tensor& points, const Tensor& centroids, std::span<const std::size_t> assignment) {
    double j = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) j += sq_dist(points.row(i), centroids.row(assignment[i]));
    return j;
}

KMeansResult lloyd_kmeans(const Tensor& points, std::size_t K, std::uint64_t seed, std::size_t max_iter) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (K < 1 || K > n) throw std::invalid_argument("K = " + std::to_string(K) + " outside [1, " + std::to_string(n) + "]");
    Rng rng(seed);
    KMeansResult res;
    res.centroids = kmeanspp_init(points, K, rng);
    res.assignment = assign_nearest(points, res.centroids);
    res.objective_history.push_back(kmeans_objective(points, res.centroids, res.assignment));

    for (std::size_t it = 0; it < max_iter; ++it) {
        Tensor sums = Tensor::matrix(K, d);
        std::vector<std::size_t> counts(K, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto dst = sums.row(res.assignment[i]);
            auto src = points.row(i);
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
            ++counts[res.assignment[i]];
        }
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] == 0) continue;
            auto c = res.centroids.row(k);
            auto s = sums.row(k);
            for (std::size_t j = 0; j < d; ++j) c[j] = s[j] / static_cast<double>(counts[k]);
        }
        auto next = assign_nearest(points, res.centroids);
        res.objective_history.push_back(kmeans_objective(points, res.centroids, next));
        ++res.iterations;
        const bool unchanged = next == res.assignment;
        res.assignment = std::move(next);
        if (unchanged) break;
    }
    return res;
}

BagCollection kmeans_bags(const LabeledDataset& ds, std::size_t K, std::uint64_t seed,
                          const KMeansBagOptions& options) {
    const std::size_t n = ds.size();
    if (K < 1 || K > n) throw std::invalid_argument("K = " + std::to_string(K) + " outside [1, " + std::to_string(n) + "]");
    BagCollection out;
    out.method = "kmeans";
    out.k = K;
    out.seed = seed;
    out.num_classes = ds.num_classes;

    std::vector<std::vector<std::size_t>> clusters(K);
    if (n >= 2) {
        const std::size_t dim = std::min({options.pca_dim, n, ds.dim()});
        const Tensor features = pca_project(standardize(ds.X), std::max<std::size_t>(dim, 1));
        const auto res = lloyd_kmeans(features, K, seed, options.max_iter);
        for (std::size_t i = 0; i < n; ++i) clusters[res.assignment[i]].push_back(i);
    } else {
        clusters[0].push_back(0);
    }
    for (auto& c : clusters)
        if (!c.empty()) out.bags.push_back(Bag::from_dataset(std::move(c), ds));
    return out;
}

Bag subsample_bag(const Bag& bag, std::size_t threshold, std::uint64_t seed) {
    if (threshold < 1) throw std::invalid_argument("subsample threshold must be >= 1");
    if (bag.size() <= threshold) return bag;
    // Partial Fisher-Yates: the first `threshold` slots form the sample.
    std::vector<std::size_t> pool = bag.indices;
    Rng rng(seed);
    for (std::size_t i = 0; i < threshold; ++i) {
        const std::size_t j = i + uniform_below(rng, pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(threshold);
    std::sort(pool.begin(), pool.end());
    return Bag{std::move(pool), bag.proportion};
}

BagCollection subsample_bags(const BagCollection& bags, std::size_t threshold, std::uint64_t seed) {
    BagCollection out = bags;
    out.threshold = threshold;
    for (std::size_t b = 0; b < out.bags.size(); ++b)
        out.bags[b] = subsample_bag(bags.bags[b], threshold, derive_seed(seed, {b}));
    return out;
}

BagSplit split_bags(const BagCollection& bags, double train_fraction, std::uint64_t seed) {
    const std::size_t m = bags.size();
    if (m < 2) throw std::invalid_argument("splitting needs at least two bags");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train fraction must lie in (0, 1)");
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(m)));
    if (n_train == 0 || n_train >= m)
        throw std::invalid_argument("split of " + std::to_string(m) + " bags at fraction " +
                                    std::to_string(train_fraction) + " leaves one side empty");
    const auto perm = seeded_permutation(m, seed);
    BagSplit split{bags, bags};
    split.train.bags.clear();
    split.val.bags.clear();
    for (std::size_t i = 0; i < m; ++i) (i < n_train ? split.train : split.val).bags.push_back(bags.bags[perm[i]]);
    return split;
}

nlohmann::ordered_json bags_to_json(const BagCollection& bags) {
    nlohmann::ordered_json j;
    j["method"] = bags.method;
    j["seed"] = bags.seed;
    j["source"] = bags.source;
    j["num_classes"] = bags.num_classes;
    if (bags.bag_size) j["bag_size"] = bags.bag_size;
    if (bags.k) j["k"] = bags.k;
    if (bags.threshold) j["threshold"] = bags.threshold;
    auto& arr = j["bags"] = nlohmann::ordered_json::array();
    for (const auto& bag : bags.bags) {
        nlohmann::ordered_json b;
        b["indices"] = bag.indices;
        b["proportion"] = bag.proportion;
        arr.push_back(std::move(b));
    }
    return j;
}

BagCollection bags_from_json(const nlohmann::json& j) {
    BagCollection out;
    out.method = j.at("method").get<std::string>();
    out.seed = j.at("seed").get<std::uint64_t>();
    out.source = j.value("source", std::string{});
    out.bag_size = j.value("bag_size", std::size_t{0});
    out.k = j.value("k", std::size_t{0});
    out.threshold = j.value("threshold", std::size_t{0});
    for (const auto& b : j.at("bags")) {
        Bag bag;
        bag.indices = b.at("indices").get<std::vector<std::size_t>>();
        bag.proportion = b.at("proportion").get<std::vector<double>>();
        out.bags.push_back(std::move(bag));
    }
    out.num_classes = j.value("num_classes", out.bags.empty() ? 0 : static_cast<int>(out.bags[0].proportion.size()));
    out.validate(std::numeric_limits<std::size_t>::max());
    return out;
}

void write_bags_json(const std::filesystem::path& path, const BagCollection& bags,
                     const std::optional<std::string>& config_hash) {
    auto j = bags_to_json(bags);
    if (config_hash) j["config_hash"] = *config_hash;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << j.dump() << '\n';
}

BagCollection read_bags_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return bags_from_json(nlohmann::json::parse(in));
}

} // namespace llp
