#include "llp/training.hpp"

#include <cmath>
#include <ostream>

#include "llp/rng.hpp"

namespace llp {

AdamState AdamState::zeros_like(const MlpParams& params) {
    return {GradBundle::zeros_like(params), GradBundle::zeros_like(params), 0};
}

void adam_update(MlpParams& params, const GradBundle& grads, AdamState& state, double lr, const AdamHyper& hyper) {
    auto p = params.blocks();
    auto g = grads.blocks();
    auto m = state.m.blocks();
    auto v = state.v.blocks();
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
        throw ShapeError("Adam: gradient/state depth does not match parameters");
    for (std::size_t b = 0; b < p.size(); ++b)
        if (g[b].size() != p[b].size() || m[b].size() != p[b].size() || v[b].size() != p[b].size())
            throw ShapeError("Adam: block " + std::to_string(b) + " shape mismatch");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t b = 0; b < p.size(); ++b) {
        for (std::size_t i = 0; i < p[b].size(); ++i) {
            m[b][i] = hyper.beta1 * m[b][i] + (1.0 - hyper.beta1) * g[b][i];
            v[b][i] = hyper.beta2 * v[b][i] + (1.0 - hyper.beta2) * g[b][i] * g[b][i];
            const double m_hat = m[b][i] / c1;
            const double v_hat = v[b][i] / c2;
            p[b][i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
        }
    }
}

AdamResult adam_step(const MlpParams& params, const GradBundle& grads, const AdamState& state, double lr,
                     const AdamHyper& hyper) {
    AdamResult out{params, state};
    adam_update(out.params, grads, out.state, lr, hyper);
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
        throw std::invalid_argument("lr_decay_factor must lie in (0, 1]");
    if (lr_decay_at > epochs) throw std::invalid_argument("lr_decay_at must be <= epochs");
    if (final_window > epochs) throw std::invalid_argument("final_window must be <= epochs");
    if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be > 0");
    consistency.validate();
}

namespace {

bool params_finite(const MlpParams& p) {
    for (const auto& l : p.layers())
        if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
    return true;
}

} // namespace

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    return epoch < cfg.lr_decay_at ? cfg.base_lr : cfg.base_lr * cfg.lr_decay_factor;
}

TrainingDiverged::TrainingDiverged(std::size_t e, std::size_t b, double loss)
    : std::runtime_error("training diverged (loss " + std::to_string(loss) + ") at epoch " + std::to_string(e) + ", bag " +
                         std::to_string(b)),
      epoch(e), bag(b) {}

std::vector<std::size_t> epoch_bag_order(std::size_t num_bags, std::uint64_t seed, std::size_t epoch) {
    return seeded_permutation(num_bags, derive_seed(seed, {0x6f72646572ULL, epoch}));
}

std::uint64_t bag_seed(std::uint64_t run_seed, std::size_t epoch, std::size_t bag_index) {
    return derive_seed(run_seed, {epoch, bag_index});
}

std::uint64_t init_seed(std::uint64_t run_seed) { return derive_seed(run_seed, {0x696e6974ULL}); }

TrainResult train(const BagCollection& train_bags, const BagCollection& val_bags, const Tensor& features,
                  const LabeledDataset* test, const TrainConfig& cfg) {
    if (train_bags.bags.empty()) throw std::invalid_argument("training needs at least one bag");
    std::vector<std::size_t> dims{features.cols()};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(static_cast<std::size_t>(train_bags.num_classes > 0
                                                ? train_bags.num_classes
                                                : static_cast<int>(train_bags.bags[0].proportion.size())));
    return train(train_bags, val_bags, features, test, cfg, MlpParams::init(dims, init_seed(cfg.seed), cfg.activation));
}

TrainResult train(const BagCollection& train_bags, const BagCollection& val_bags, const Tensor& features,
                  const LabeledDataset* test, const TrainConfig& cfg, MlpParams initial) {
    cfg.validate();
    if (train_bags.bags.empty()) throw std::invalid_argument("training needs at least one bag");
    train_bags.validate(features.rows());
    if (!val_bags.bags.empty()) val_bags.validate(features.rows());

    // Gathered once; bag contents never change during training.
    std::vector<Tensor> bag_features;
    bag_features.reserve(train_bags.size());
    for (const auto& bag : train_bags.bags) bag_features.push_back(features.gather_rows(bag.indices));

    TrainResult result{std::move(initial), {}};
    AdamState state = AdamState::zeros_like(result.params);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.w_t = cfg.consistency.kind == ConsistencyKind::none ? 0.0 : rampup_weight(epoch, cfg.consistency);
        double loss_sum = 0.0;
        for (std::size_t b : epoch_bag_order(train_bags.size(), cfg.seed, epoch)) {
            if (!params_finite(result.params)) throw TrainingDiverged(epoch, b, std::nan(""));
            LossTerms terms = combined_loss(result.params, bag_features[b], train_bags.bags[b].proportion, epoch,
                                            cfg.consistency, bag_seed(cfg.seed, epoch, b));
            if (!std::isfinite(terms.total)) throw TrainingDiverged(epoch, b, terms.total);
            loss_sum += terms.total;
            rec.vat_fallbacks += terms.vat_fallbacks;
            adam_update(result.params, terms.grad, state, lr, cfg.adam);
        }
        rec.train_loss = loss_sum / static_cast<double>(train_bags.size());
        if (!val_bags.bags.empty())
            rec.val_errors = validation_errors(result.params, val_bags, features, cfg.val_weighting);
        if (test) rec.test_acc = instance_accuracy(result.params, *test);
        result.history.push_back(rec);
    }
    return result;
}

double final_accuracy(const std::vector<EpochRecord>& records, std::size_t window) {
    if (window < 1 || window > records.size())
        throw std::invalid_argument("final_accuracy window " + std::to_string(window) + " outside [1, " +
                                    std::to_string(records.size()) + "]");
    double s = 0.0;
    for (std::size_t i = records.size() - window; i < records.size(); ++i) {
        if (!records[i].test_acc) throw std::invalid_argument("epoch record has no test accuracy");
        s += *records[i].test_acc;
    }
    return s / static_cast<double>(window);
}

std::array<double, 4> final_validation_errors(const std::vector<EpochRecord>& records, std::size_t window) {
    if (window < 1 || window > records.size()) throw std::invalid_argument("validation window out of range");
    std::array<double, 4> s{};
    for (std::size_t i = records.size() - window; i < records.size(); ++i) {
        if (!records[i].val_errors) throw std::invalid_argument("epoch record has no validation errors");
        for (std::size_t m = 0; m < 4; ++m) s[m] += (*records[i].val_errors)[m];
    }
    for (double& v : s) v /= static_cast<double>(window);
    return s;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& records) {
    out << "epoch,train_loss,w_t,val_hard_l1,val_soft_l1,val_hard_kl,val_soft_kl,test_acc\n";
    for (const auto& r : records) {
        out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.w_t);
        for (std::size_t m = 0; m < 4; ++m) {
            out << ',';
            if (r.val_errors) out << format_double((*r.val_errors)[m]);
        }
        out << ',';
        if (r.test_acc) out << format_double(*r.test_acc);
        out << '\n';
    }
}

} // namespace llp
