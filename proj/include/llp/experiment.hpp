#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llp/bagging.hpp"
#include "llp/dataset.hpp"
#include "llp/training.hpp"

namespace llp {

struct DatasetSpec {
    std::string generator = "two_moons"; // two_moons | gaussian_blobs | csv
    std::size_t n_per_class = 500;        // two_moons
    double noise_std = 0.1;               // two_moons
    std::vector<std::vector<double>> centers; // gaussian_blobs
    std::size_t n_per_center = 0;
    double std_dev = 0.0;
    std::string path;                     // csv
    std::uint64_t seed = 0;

    friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct BaggingSpec {
    std::string method = "uniform"; // uniform | kmeans
    std::size_t bag_size = 16;
    std::size_t k = 0;
    std::size_t threshold = 256; // kmeans subsampling
    std::size_t max_iter = 100;
    std::size_t pca_dim = 10;
    std::uint64_t seed = 0;
    double train_fraction = 0.9;
    std::uint64_t split_seed = 0;
    std::string bag_file; // when set, bags are read from this file instead

    friend bool operator==(const BaggingSpec&, const BaggingSpec&) = default;
};

struct ExperimentConfig {
    std::string name = "experiment";
    DatasetSpec dataset;
    std::optional<DatasetSpec> test_dataset;
    BaggingSpec bagging;
    TrainConfig train;
};

bool operator==(const TrainConfig& a, const TrainConfig& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

nlohmann::ordered_json to_json(const DatasetSpec& spec);
nlohmann::ordered_json to_json(const BaggingSpec& spec);
nlohmann::ordered_json to_json(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
BaggingSpec bagging_spec_from_json(const nlohmann::json& j);
/// Missing fields take TrainConfig defaults; a missing rampup_epochs is 30% of epochs.
TrainConfig train_config_from_json(const nlohmann::json& j);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig read_experiment_config(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the canonical JSON text.
std::string config_hash(const nlohmann::ordered_json& j);

/// Replaces every bagging, split and training seed; dataset seeds stay.
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

LabeledDataset make_dataset(const DatasetSpec& spec);
BagCollection make_bags(const LabeledDataset& ds, const BaggingSpec& spec, const std::string& source);

nlohmann::ordered_json model_to_json(const MlpParams& params);
MlpParams model_from_json(const nlohmann::json& j);

/// Linear-interpolation quartiles (min, q1, median, q3, max) of bag sizes.
std::array<double, 5> bag_size_quartiles(const BagCollection& bags);

// ---- subcommands -------------------------------------------------------

struct OutputOptions {
    std::filesystem::path out_dir = ".";
    bool force = false;
};

struct GenerateBagsResult {
    BagCollection bags;
    std::string config_hash;
};

GenerateBagsResult run_generate_bags(const ExperimentConfig& cfg, const OutputOptions& out, std::ostream& log);

struct TrainRunResult {
    TrainResult result;
    std::optional<double> final_accuracy;
    std::optional<double> best_val_hard_l1;
    std::string config_hash;
};

/// Runs one experiment in memory: dataset, bags, split, training.
TrainRunResult run_experiment(const ExperimentConfig& cfg);
TrainRunResult run_train(const ExperimentConfig& cfg, const OutputOptions& out, std::ostream& log);

struct ToyOptions {
    std::uint64_t seed = 0;
    std::size_t n_per_class = 50; // 100 points
    double noise_std = 0.1;
    std::size_t bag_size = 20;    // 5 bags
    std::size_t test_n_per_class = 500;
    std::size_t grid_size = 101;
    TrainConfig train = default_toy_train_config();
    ConsistencySpec consistency = default_toy_consistency();

    static TrainConfig default_toy_train_config();
    static ConsistencySpec default_toy_consistency();
};

ToyOptions toy_options_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ToyOptions& opts);

struct ToyResult {
    LabeledDataset train;
    BagCollection bags;
    MlpParams vanilla;
    MlpParams consistency;
    double vanilla_accuracy = 0.0;
    double consistency_accuracy = 0.0;
    std::array<double, 4> grid_box{}; // x0_min, x0_max, x1_min, x1_max
};

ToyResult run_toy_experiment(const ToyOptions& opts);
ToyResult run_toy(const ToyOptions& opts, const OutputOptions& out, std::ostream& log);

struct GridSpec {
    std::vector<double> alphas{0.05, 0.1, 0.5};
    std::vector<double> epsilons{0.5, 1.0};
    std::vector<std::uint64_t> seeds{0, 1};
};

struct CorrelateConfig {
    std::vector<ExperimentConfig> datasets; // train sections are templates
    GridSpec grid;
};

CorrelateConfig correlate_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const CorrelateConfig& cfg);
CorrelateConfig default_correlate_config();

struct CorrelationRun {
    std::string run_id;
    std::string dataset;
    std::string config_hash;
    std::array<double, 4> val_errors{}; // kAllMetrics order
    double test_error = 0.0;
};

struct CorrelationSummary {
    std::vector<CorrelationRun> runs; // sorted by run_id
    std::array<std::optional<double>, 4> pooled;
    std::vector<std::pair<std::string, std::array<std::optional<double>, 4>>> per_dataset;
};

/// Expands the grid into concrete experiment configs, in run_id order.
std::vector<std::pair<std::string, ExperimentConfig>> expand_grid(const CorrelateConfig& cfg);

/// Trains every grid point on up to `threads` workers.
CorrelationSummary run_correlation_study(const CorrelateConfig& cfg, std::size_t threads);
CorrelationSummary run_correlate(const CorrelateConfig& cfg, const OutputOptions& out, std::size_t threads,
                                 std::ostream& log);

/// LLP_THREADS if set and positive, otherwise the number of logical cores.
std::size_t default_thread_count();

void write_correlation_csv(std::ostream& out, const std::vector<CorrelationRun>& runs);

} // namespace llp
