#include "llp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "llp/losses.hpp"

namespace llp {

std::string_view to_string(MetricKind kind) {
    switch (kind) {
    case MetricKind::HardL1: return "hard_l1";
    case MetricKind::SoftL1: return "soft_l1";
    case MetricKind::HardKL: return "hard_kl";
    case MetricKind::SoftKL: return "soft_kl";
    }
    return "hard_l1";
}

bool is_hard(MetricKind kind) { return kind == MetricKind::HardL1 || kind == MetricKind::HardKL; }

std::size_t argmax(std::span<const double> v) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < v.size(); ++j)
        if (v[j] > v[arg]) arg = j;
    return arg;
}

std::vector<double> estimate_proportion_from_probs(const Tensor& probs, bool hard) {
    const std::size_t n = probs.rows();
    if (n == 0) throw std::invalid_argument("estimate_proportion of an empty bag");
    std::vector<double> p(probs.cols(), 0.0);
    if (hard) {
        std::vector<std::size_t> counts(p.size(), 0);
        for (std::size_t r = 0; r < n; ++r) ++counts[argmax(probs.row(r))];
        for (std::size_t j = 0; j < p.size(); ++j) p[j] = static_cast<double>(counts[j]) / static_cast<double>(n);
    } else {
        for (std::size_t r = 0; r < n; ++r) {
            auto row = probs.row(r);
            for (std::size_t j = 0; j < p.size(); ++j) p[j] += row[j];
        }
        for (double& v : p) v /= static_cast<double>(n);
    }
    return p;
}

std::vector<double> estimate_proportion(const MlpParams& params, const Tensor& bag_X, bool hard) {
    return estimate_proportion_from_probs(mlp_forward(params, bag_X), hard);
}

double bag_error(std::span<const double> p, std::span<const double> p_hat, MetricKind kind) {
    if (p.size() != p_hat.size()) throw ShapeError("bag_error of vectors with different lengths");
    require_simplex(p, "proportion label");
    require_simplex(p_hat, "estimated proportion");
    if (kind == MetricKind::HardL1 || kind == MetricKind::SoftL1) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - p_hat[i]);
        return s;
    }
    // The true proportion is used as-is (zero entries contribute nothing);
    // only the estimate is floored.
    double floor_sum = 0.0;
    for (double v : p_hat) floor_sum += std::max(v, kProbFloor);
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(std::max(p_hat[i], kProbFloor) / floor_sum));
    return std::max(kl, 0.0);
}

std::array<double, 4> validation_errors(const MlpParams& params, const BagCollection& val_bags,
                                        const Tensor& features, BagWeighting weighting) {
    if (val_bags.bags.empty()) throw std::invalid_argument("validation needs at least one bag");
    std::array<double, 4> sums{};
    double total_weight = 0.0;
    for (const auto& bag : val_bags.bags) {
        const Tensor probs = mlp_forward(params, features.gather_rows(bag.indices));
        const auto hard = estimate_proportion_from_probs(probs, true);
        const auto soft = estimate_proportion_from_probs(probs, false);
        const double w = weighting == BagWeighting::unweighted ? 1.0 : static_cast<double>(bag.size());
        for (std::size_t m = 0; m < kAllMetrics.size(); ++m)
            sums[m] += w * bag_error(bag.proportion, is_hard(kAllMetrics[m]) ? hard : soft, kAllMetrics[m]);
        total_weight += w;
    }
    for (double& s : sums) s /= total_weight;
    return sums;
}

double validation_error(const MlpParams& params, const BagCollection& val_bags, const Tensor& features,
                        MetricKind kind, BagWeighting weighting) {
    const auto all = validation_errors(params, val_bags, features, weighting);
    return all[static_cast<std::size_t>(kind)];
}

double instance_accuracy(const MlpParams& params, const LabeledDataset& test) {
    if (test.size() == 0) throw std::invalid_argument("accuracy of an empty test set");
    const Tensor probs = mlp_forward(params, test.X);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
        if (static_cast<int>(argmax(probs.row(i))) == test.y[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("pearson needs equal-length series");
    if (xs.size() < 2) throw std::invalid_argument("pearson needs at least two points");
    auto constant = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
    };
    if (constant(xs) || constant(ys)) throw UndefinedCorrelation("pearson correlation of a constant series");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("pearson correlation of a constant series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace llp
