#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "llp/experiment.hpp"
#include "test_util.hpp"

using namespace llp;
namespace fs = std::filesystem;

#ifndef LLP_SOURCE_DIR
#error "LLP_SOURCE_DIR must point at the source tree"
#endif

namespace {

nlohmann::json load(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in);
    return nlohmann::json::parse(in);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("llp_exp_test_" + name);
    fs::remove_all(d);
    return d;
}

ExperimentConfig tiny_experiment() {
    ExperimentConfig c;
    c.name = "tiny";
    c.dataset.n_per_class = 40;
    c.dataset.seed = 1;
    c.test_dataset = c.dataset;
    c.test_dataset->seed = 2;
    c.bagging.bag_size = 8;
    c.train.epochs = 3;
    c.train.lr_decay_at = 2;
    c.train.final_window = 2;
    c.train.hidden = {6};
    return c;
}

} // namespace

TEST_CASE("experiment config JSON round trip") {
    ExperimentConfig c = tiny_experiment();
    c.train.consistency.kind = ConsistencyKind::pi_model;
    c.train.consistency.alpha = 0.4;
    c.bagging.method = "kmeans";
    c.bagging.k = 7;
    const auto j = to_json(c);
    const ExperimentConfig back = experiment_config_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back == c);
    CHECK(config_hash(to_json(back)) == config_hash(j));
    CHECK(config_hash(j).size() == 16);
}

TEST_CASE("missing train fields take defaults, ramp-up 30% of epochs") {
    const auto c = train_config_from_json(nlohmann::json::parse(R"({"epochs": 50, "consistency": {"kind": "vat"}})"));
    CHECK(c.consistency.rampup_epochs == 15);
    CHECK(c.lr_decay_at == 40);
    CHECK(c.base_lr == 3e-4);
    CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"activation": "gelu"})")), std::invalid_argument);
}

TEST_CASE("bad configs are rejected") {
    CHECK_THROWS(dataset_spec_from_json(nlohmann::json::parse(R"({"generator": "spirals"})")));
    CHECK_THROWS(bagging_spec_from_json(nlohmann::json::parse(R"({"method": "kmeans"})")));
    CHECK_THROWS(bagging_spec_from_json(nlohmann::json::parse(R"({"method": "random"})")));
}

TEST_CASE("override_seed replaces run seeds but not dataset seeds") {
    ExperimentConfig c = tiny_experiment();
    override_seed(c, 99);
    CHECK(c.train.seed == 99);
    CHECK(c.dataset.seed == 1);
    CHECK(c.bagging.seed != 0);
    CHECK(c.bagging.split_seed != c.bagging.seed);
}

TEST_CASE("bag_size_quartiles") {
    BagCollection b;
    for (std::size_t s : {1, 2, 3, 4, 10}) b.bags.push_back({std::vector<std::size_t>(s, 0), {1.0}});
    const auto q = bag_size_quartiles(b);
    CHECK(q[0] == 1);
    CHECK(q[1] == 2);
    CHECK(q[2] == 3);
    CHECK(q[3] == 4);
    CHECK(q[4] == 10);
}

TEST_CASE("model JSON round trip is exact") {
    const MlpParams p = llp::testing::random_mlp({3, 5, 4, 2}, 7, Activation::tanh);
    const MlpParams back = model_from_json(nlohmann::json::parse(model_to_json(p).dump()));
    CHECK(back == p);
    CHECK(back.activation() == Activation::tanh);
}

TEST_CASE("run_train writes artifacts and refuses to overwrite without force") {
    const fs::path dir = fresh_dir("train");
    std::ostringstream log;
    const TrainRunResult r = run_train(tiny_experiment(), {dir, false}, log);
    for (const char* f : {"history.csv", "model.json", "summary.json", "train.manifest.json"}) CHECK(fs::exists(dir / f));
    CHECK(r.final_accuracy.has_value());
    const auto summary = load(dir / "summary.json");
    CHECK(summary.at("config_hash") == r.config_hash);
    std::ifstream in(dir / "summary.json");
    CHECK(nlohmann::ordered_json::parse(in).begin().key() == "final_accuracy");
    CHECK_THROWS_AS(run_train(tiny_experiment(), {dir, false}, log), std::runtime_error);
    CHECK_NOTHROW(run_train(tiny_experiment(), {dir, true}, log));
    fs::remove_all(dir);
}

TEST_CASE("run_generate_bags reports the bag count") {
    const fs::path dir = fresh_dir("bags");
    std::ostringstream log;
    ExperimentConfig c = tiny_experiment();
    c.bagging.method = "kmeans";
    c.bagging.k = 5;
    const auto r = run_generate_bags(c, {dir, false}, log);
    CHECK(log.str().find("bags: " + std::to_string(r.bags.size())) != std::string::npos);
    const BagCollection back = read_bags_json(dir / "bags.json");
    CHECK(bags_to_json(back) == bags_to_json(r.bags));

    // a bag file can replace generation
    ExperimentConfig from_file = tiny_experiment();
    from_file.bagging.bag_file = (dir / "bags.json").string();
    const LabeledDataset ds = make_dataset(from_file.dataset);
    CHECK(bags_to_json(make_bags(ds, from_file.bagging, "tiny")) == bags_to_json(r.bags));
    fs::remove_all(dir);
}

TEST_CASE("shipped configs parse") {
    const fs::path cfgs = fs::path(LLP_SOURCE_DIR) / "configs";
    for (const char* name : {"moons_vat.json", "blobs_kmeans.json"}) CHECK_NOTHROW(read_experiment_config(cfgs / name));
    CHECK_NOTHROW(toy_options_from_json(load(cfgs / "toy.json")));
}

TEST_CASE("shipped correlate config is the built-in default") {
    const auto shipped = correlate_config_from_json(load(fs::path(LLP_SOURCE_DIR) / "configs" / "correlate_default.json"));
    CHECK(to_json(shipped) == to_json(default_correlate_config()));
}

TEST_CASE("shipped toy config is the built-in default") {
    const auto shipped = toy_options_from_json(load(fs::path(LLP_SOURCE_DIR) / "configs" / "toy.json"));
    CHECK(to_json(shipped) == to_json(ToyOptions{}));
}

TEST_CASE("expand_grid sizes and ids") {
    const CorrelateConfig c = default_correlate_config();
    const auto runs = expand_grid(c);
    CHECK(runs.size() == c.datasets.size() * 12);
    for (std::size_t i = 1; i < runs.size(); ++i) CHECK(runs[i - 1].first < runs[i].first);
    for (const auto& [id, exp] : runs) CHECK(exp.train.consistency.kind == ConsistencyKind::vat);
}

TEST_CASE("correlate config validation") {
    auto j = nlohmann::json::parse(to_json(default_correlate_config()).dump());
    j["grid"]["seeds"] = {0};
    j["grid"]["alpha"] = {0.1};
    j["grid"]["epsilon"] = {1.0};
    CHECK_THROWS_AS(correlate_config_from_json(j), std::invalid_argument);
    j = nlohmann::json::parse(to_json(default_correlate_config()).dump());
    j["datasets"][0].erase("test_dataset");
    CHECK_THROWS_AS(correlate_config_from_json(j), std::invalid_argument);
}
