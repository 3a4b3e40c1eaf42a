#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "llp/bagging.hpp"
#include "llp/dataset.hpp"
#include "llp/mlp.hpp"

namespace llp {

enum class MetricKind { HardL1, SoftL1, HardKL, SoftKL };

inline constexpr std::array<MetricKind, 4> kAllMetrics{MetricKind::HardL1, MetricKind::SoftL1, MetricKind::HardKL,
                                                       MetricKind::SoftKL};

/// "hard_l1", "soft_l1", "hard_kl", "soft_kl".
std::string_view to_string(MetricKind kind);
bool is_hard(MetricKind kind);

struct UndefinedCorrelation : std::domain_error {
    using std::domain_error::domain_error;
};

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

/// Mean of probability rows (soft) or of argmax one-hots (hard).
std::vector<double> estimate_proportion(const MlpParams& params, const Tensor& bag_X, bool hard);
std::vector<double> estimate_proportion_from_probs(const Tensor& probs, bool hard);

/// L1 kinds: sum |p - p_hat|. KL kinds: KL(p || clamp_renorm(p_hat)).
double bag_error(std::span<const double> p, std::span<const double> p_hat, MetricKind kind);

enum class BagWeighting { unweighted, by_size };

/// Mean bag error over the collection. Takes features only: no instance labels.
double validation_error(const MlpParams& params, const BagCollection& val_bags, const Tensor& features,
                        MetricKind kind, BagWeighting weighting = BagWeighting::unweighted);

/// All four metrics from a single forward pass per bag, in kAllMetrics order.
std::array<double, 4> validation_errors(const MlpParams& params, const BagCollection& val_bags,
                                        const Tensor& features, BagWeighting weighting = BagWeighting::unweighted);

double instance_accuracy(const MlpParams& params, const LabeledDataset& test);

/// Sample Pearson correlation. Throws UndefinedCorrelation on a constant series.
double pearson(std::span<const double> xs, std::span<const double> ys);

} // namespace llp
