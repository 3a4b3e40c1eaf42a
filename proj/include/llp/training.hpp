#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "llp/bagging.hpp"
#include "llp/dataset.hpp"
#include "llp/losses.hpp"
#include "llp/metrics.hpp"
#include "llp/mlp.hpp"

namespace llp {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    GradBundle m;
    GradBundle v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const MlpParams& params);
};

/// In-place bias-corrected Adam update.
void adam_update(MlpParams& params, const GradBundle& grads, AdamState& state, double lr, const AdamHyper& hyper);

struct AdamResult {
    MlpParams params;
    AdamState state;
};

AdamResult adam_step(const MlpParams& params, const GradBundle& grads, const AdamState& state, double lr,
                     const AdamHyper& hyper);

struct TrainConfig {
    std::size_t epochs = 200;
    double base_lr = 3e-4;
    double lr_decay_factor = 0.2;
    std::size_t lr_decay_at = 160;
    AdamHyper adam;
    ConsistencySpec consistency;
    std::uint64_t seed = 0;
    std::size_t final_window = 10;
    std::vector<std::size_t> hidden{64, 64};
    Activation activation = Activation::relu;
    BagWeighting val_weighting = BagWeighting::unweighted;

    void validate() const;
};

double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double w_t = 0.0;
    std::optional<std::array<double, 4>> val_errors; // kAllMetrics order
    std::optional<double> test_acc;
    std::size_t vat_fallbacks = 0;
};

struct TrainingDiverged : std::runtime_error {
    TrainingDiverged(std::size_t epoch, std::size_t bag, double loss);
    std::size_t epoch;
    std::size_t bag;
};

struct TrainResult {
    MlpParams params;
    std::vector<EpochRecord> history;
};

/// Order in which bags are visited during `epoch`.
std::vector<std::size_t> epoch_bag_order(std::size_t num_bags, std::uint64_t seed, std::size_t epoch);

/// Seed for the perturbation of the bag at position `bag_index` (index into
/// the collection, not into the shuffled order).
std::uint64_t bag_seed(std::uint64_t run_seed, std::size_t epoch, std::size_t bag_index);

/// Seed used for weight initialization.
std::uint64_t init_seed(std::uint64_t run_seed);

/// One Adam step per bag, bags visited in a seeded permutation each epoch.
/// `features` is the N x D matrix the bag indices point into; `val_bags` may be
/// empty; `test` enables per-epoch instance accuracy.
TrainResult train(const BagCollection& train_bags, const BagCollection& val_bags, const Tensor& features,
                  const LabeledDataset* test, const TrainConfig& cfg);

TrainResult train(const BagCollection& train_bags, const BagCollection& val_bags, const Tensor& features,
                  const LabeledDataset* test, const TrainConfig& cfg, MlpParams initial);

/// Mean test accuracy of the last `window` epochs.
double final_accuracy(const std::vector<EpochRecord>& records, std::size_t window = 10);

/// Per-metric mean validation error of the last `window` epochs.
std::array<double, 4> final_validation_errors(const std::vector<EpochRecord>& records, std::size_t window = 10);

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& records);

} // namespace llp
