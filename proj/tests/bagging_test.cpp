#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "llp/bagging.hpp"
#include "test_util.hpp"

using namespace llp;

namespace {

LabeledDataset labeled_blobs(std::size_t per_center, std::uint64_t seed) {
    return gaussian_blobs({{0, 0}, {4, 0}, {0, 4}}, per_center, 0.6, seed);
}

} // namespace

TEST_CASE("proportion_label is the label histogram") {
    const std::vector<int> labels{0, 2, 2, 1, 2};
    const auto p = proportion_label(labels, 3);
    CHECK(p == std::vector<double>{0.2, 0.2, 0.6});
    CHECK_THROWS_AS(proportion_label(std::vector<int>{}, 2), std::invalid_argument);
    CHECK_THROWS_AS(proportion_label(std::vector<int>{3}, 2), std::invalid_argument);
}

TEST_CASE("uniform_bags drops the remainder and partitions the rest") {
    const LabeledDataset ds = labeled_blobs(11, 1); // 33 instances
    const BagCollection bags = uniform_bags(ds, 5, 7);
    REQUIRE(bags.size() == 6);
    std::set<std::size_t> seen;
    for (const auto& b : bags.bags) {
        CHECK(b.size() == 5);
        for (auto i : b.indices) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == 30);
    CHECK(bags.method == "uniform");
    CHECK(bags.bag_size == 5);
    CHECK_THROWS_AS(uniform_bags(ds, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(uniform_bags(ds, 34, 1), std::invalid_argument);
}

TEST_CASE("uniform_bags is seeded") {
    const LabeledDataset ds = labeled_blobs(20, 2);
    CHECK(bags_to_json(uniform_bags(ds, 6, 3)) == bags_to_json(uniform_bags(ds, 6, 3)));
    CHECK_FALSE(bags_to_json(uniform_bags(ds, 6, 3)) == bags_to_json(uniform_bags(ds, 6, 4)));
}

TEST_CASE("lloyd_kmeans: objective never increases and matches the recomputed value") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Tensor pts = llp::testing::random_matrix(120, 3, seed);
        const KMeansResult r = lloyd_kmeans(pts, 6, seed);
        REQUIRE_FALSE(r.objective_history.empty());
        for (std::size_t t = 1; t < r.objective_history.size(); ++t)
            CHECK(r.objective_history[t] <= r.objective_history[t - 1] * (1 + 1e-12));
        CHECK(kmeans_objective(pts, r.centroids, r.assignment) ==
              doctest::Approx(r.objective_history.back()).epsilon(1e-12));
    }
}

TEST_CASE("lloyd_kmeans separates well-separated blobs") {
    const LabeledDataset ds = gaussian_blobs({{0, 0}, {20, 0}, {0, 20}}, 30, 0.5, 3);
    const KMeansResult r = lloyd_kmeans(ds.X, 3, 5);
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.size(); ++j)
            CHECK((ds.y[i] == ds.y[j]) == (r.assignment[i] == r.assignment[j]));
    CHECK_THROWS_AS(lloyd_kmeans(ds.X, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(lloyd_kmeans(ds.X, 91, 1), std::invalid_argument);
}

TEST_CASE("kmeans_bags covers every instance once with exact proportions") {
    const LabeledDataset ds = labeled_blobs(50, 4);
    const BagCollection bags = kmeans_bags(ds, 9, 11);
    bags.validate(ds.size());
    std::vector<int> count(ds.size(), 0);
    for (const auto& b : bags.bags) {
        for (auto i : b.indices) ++count[i];
        std::vector<int> labels;
        for (auto i : b.indices) labels.push_back(ds.y[i]);
        CHECK(b.proportion == proportion_label(labels, 3));
    }
    CHECK(std::all_of(count.begin(), count.end(), [](int c) { return c == 1; }));
    CHECK(bags.k == 9);
    CHECK(bags.size() <= 9);
}

TEST_CASE("subsample_bag keeps the proportion verbatim") {
    const LabeledDataset ds = labeled_blobs(100, 5);
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    const Bag big = Bag::from_dataset(idx, ds);
    const Bag small = subsample_bag(big, 17, 3);
    CHECK(small.size() == 17);
    CHECK(small.proportion == big.proportion);
    CHECK(std::is_sorted(small.indices.begin(), small.indices.end()));
    CHECK(std::adjacent_find(small.indices.begin(), small.indices.end()) == small.indices.end());
    const Bag same = subsample_bag(big, 1000, 3);
    CHECK(same.indices == big.indices);
}

TEST_CASE("split_bags rounds the train share and keeps every bag once") {
    const LabeledDataset ds = labeled_blobs(25, 6); // 75 -> 15 bags of 5
    const BagCollection bags = uniform_bags(ds, 5, 1);
    const BagSplit s = split_bags(bags, 0.9, 2);
    CHECK(s.train.size() == 14); // round(13.5)
    CHECK(s.val.size() == 1);
    std::set<std::size_t> seen;
    for (const auto* part : {&s.train, &s.val})
        for (const auto& b : part->bags) seen.insert(b.indices.front());
    CHECK(seen.size() == 15);
    CHECK_THROWS_AS(split_bags(bags, 1.5, 0), std::invalid_argument);
}

TEST_CASE("bags JSON round trip") {
    const LabeledDataset ds = labeled_blobs(30, 7);
    BagCollection bags = kmeans_bags(ds, 5, 3);
    bags.source = "blobs";
    const auto path = std::filesystem::temp_directory_path() / "llp_bags_roundtrip.json";
    write_bags_json(path, bags, std::string("abc"));
    const BagCollection back = read_bags_json(path);
    std::filesystem::remove(path);
    CHECK(bags_to_json(back) == bags_to_json(bags));
    const auto j = bags_to_json(bags);
    CHECK(j.begin().key() == "method");
}

TEST_CASE("BagCollection::validate rejects bad collections") {
    BagCollection c;
    c.num_classes = 2;
    c.bags.push_back({{0, 1}, {0.5, 0.5}});
    CHECK_NOTHROW(c.validate(2));
    CHECK_THROWS(c.validate(1));
    c.bags.push_back({{}, {1.0, 0.0}});
    CHECK_THROWS(c.validate(2));
    c.bags.back() = {{0}, {0.7, 0.7}};
    CHECK_THROWS(c.validate(2));
}
