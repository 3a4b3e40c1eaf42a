#include "llp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "llp/rng.hpp"

namespace llp {

using ojson = nlohmann::ordered_json;

bool operator==(const TrainConfig& a, const TrainConfig& b) { return to_json(a) == to_json(b); }

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_json(a) == to_json(b); }

// ---- config serialization ---------------------------------------------

ojson to_json(const DatasetSpec& s) {
    ojson j;
    j["generator"] = s.generator;
    if (s.generator == "two_moons") {
        j["n_per_class"] = s.n_per_class;
        j["noise_std"] = s.noise_std;
    } else if (s.generator == "gaussian_blobs") {
        j["centers"] = s.centers;
        j["n_per_center"] = s.n_per_center;
        j["std"] = s.std_dev;
    } else {
        j["path"] = s.path;
    }
    j["seed"] = s.seed;
    return j;
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
    DatasetSpec s;
    s.generator = j.value("generator", s.generator);
    s.seed = j.value("seed", s.seed);
    if (s.generator == "two_moons") {
        s.n_per_class = j.value("n_per_class", s.n_per_class);
        s.noise_std = j.value("noise_std", s.noise_std);
    } else if (s.generator == "gaussian_blobs") {
        s.centers = j.at("centers").get<std::vector<std::vector<double>>>();
        s.n_per_center = j.at("n_per_center").get<std::size_t>();
        s.std_dev = j.at("std").get<double>();
    } else if (s.generator == "csv") {
        s.path = j.at("path").get<std::string>();
    } else {
        throw std::invalid_argument("unknown dataset generator '" + s.generator + "'");
    }
    return s;
}

ojson to_json(const BaggingSpec& s) {
    ojson j;
    j["method"] = s.method;
    if (s.method == "uniform") {
        j["bag_size"] = s.bag_size;
    } else {
        j["k"] = s.k;
        j["threshold"] = s.threshold;
        j["max_iter"] = s.max_iter;
        j["pca_dim"] = s.pca_dim;
    }
    j["seed"] = s.seed;
    j["train_fraction"] = s.train_fraction;
    j["split_seed"] = s.split_seed;
    if (!s.bag_file.empty()) j["bag_file"] = s.bag_file;
    return j;
}

BaggingSpec bagging_spec_from_json(const nlohmann::json& j) {
    BaggingSpec s;
    s.method = j.value("method", s.method);
    if (s.method != "uniform" && s.method != "kmeans")
        throw std::invalid_argument("unknown bagging method '" + s.method + "'");
    s.bag_size = j.value("bag_size", s.bag_size);
    s.k = j.value("k", s.k);
    s.threshold = j.value("threshold", s.threshold);
    s.max_iter = j.value("max_iter", s.max_iter);
    s.pca_dim = j.value("pca_dim", s.pca_dim);
    s.seed = j.value("seed", s.seed);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.split_seed = j.value("split_seed", s.split_seed);
    s.bag_file = j.value("bag_file", s.bag_file);
    if (s.method == "kmeans" && s.k == 0) throw std::invalid_argument("kmeans bagging needs k >= 1");
    return s;
}

namespace {

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

} // namespace

ojson to_json(const TrainConfig& c) {
    ojson j;
    j["epochs"] = c.epochs;
    j["base_lr"] = c.base_lr;
    j["lr_decay_factor"] = c.lr_decay_factor;
    j["lr_decay_at"] = c.lr_decay_at;
    j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
    const auto& k = c.consistency;
    j["consistency"] = {{"kind", std::string(to_string(k.kind))},
                        {"alpha", k.alpha},
                        {"sigma", k.sigma},
                        {"epsilon", k.epsilon},
                        {"xi", k.xi},
                        {"power_iters", k.power_iters},
                        {"rampup_epochs", k.rampup_epochs},
                        {"stop_gradient", k.stop_gradient}};
    j["seed"] = c.seed;
    j["final_window"] = c.final_window;
    j["hidden"] = c.hidden;
    j["activation"] = activation_name(c.activation);
    j["val_weighting"] = c.val_weighting == BagWeighting::unweighted ? "unweighted" : "by_size";
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.lr_decay_at = j.value("lr_decay_at", c.epochs * 4 / 5);
    if (j.contains("adam")) {
        const auto& a = j["adam"];
        c.adam.beta1 = a.value("beta1", c.adam.beta1);
        c.adam.beta2 = a.value("beta2", c.adam.beta2);
        c.adam.eps = a.value("eps", c.adam.eps);
    }
    c.consistency.rampup_epochs = c.epochs * 3 / 10;
    if (j.contains("consistency")) {
        const auto& k = j["consistency"];
        c.consistency.kind = consistency_kind_from_string(k.value("kind", std::string("none")));
        c.consistency.alpha = k.value("alpha", c.consistency.alpha);
        c.consistency.sigma = k.value("sigma", c.consistency.sigma);
        c.consistency.epsilon = k.value("epsilon", c.consistency.epsilon);
        c.consistency.xi = k.value("xi", c.consistency.xi);
        c.consistency.power_iters = k.value("power_iters", c.consistency.power_iters);
        c.consistency.rampup_epochs = k.value("rampup_epochs", c.consistency.rampup_epochs);
        c.consistency.stop_gradient = k.value("stop_gradient", c.consistency.stop_gradient);
    }
    c.seed = j.value("seed", c.seed);
    c.final_window = j.value("final_window", std::min<std::size_t>(10, c.epochs));
    c.hidden = j.value("hidden", c.hidden);
    c.activation = activation_from_name(j.value("activation", std::string("relu")));
    const std::string w = j.value("val_weighting", std::string("unweighted"));
    if (w != "unweighted" && w != "by_size") throw std::invalid_argument("unknown val_weighting '" + w + "'");
    c.val_weighting = w == "unweighted" ? BagWeighting::unweighted : BagWeighting::by_size;
    c.validate();
    return c;
}

ojson to_json(const ExperimentConfig& c) {
    ojson j;
    j["name"] = c.name;
    j["dataset"] = to_json(c.dataset);
    if (c.test_dataset) j["test_dataset"] = to_json(*c.test_dataset);
    j["bagging"] = to_json(c.bagging);
    j["train"] = to_json(c.train);
    return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    c.dataset = dataset_spec_from_json(j.at("dataset"));
    if (j.contains("test_dataset")) c.test_dataset = dataset_spec_from_json(j["test_dataset"]);
    c.bagging = bagging_spec_from_json(j.value("bagging", nlohmann::json::object()));
    c.train = train_config_from_json(j.value("train", nlohmann::json::object()));
    return c;
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path.string());
    return experiment_config_from_json(nlohmann::json::parse(in));
}

std::string config_hash(const ojson& j) {
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.bagging.seed = derive_seed(seed, {1});
    cfg.bagging.split_seed = derive_seed(seed, {2});
    cfg.train.seed = seed;
}

LabeledDataset make_dataset(const DatasetSpec& s) {
    if (s.generator == "two_moons") return two_moons(s.n_per_class, s.noise_std, s.seed);
    if (s.generator == "gaussian_blobs") return gaussian_blobs(s.centers, s.n_per_center, s.std_dev, s.seed);
    if (s.generator == "csv") return read_dataset_csv(std::filesystem::path(s.path));
    throw std::invalid_argument("unknown dataset generator '" + s.generator + "'");
}

BagCollection make_bags(const LabeledDataset& ds, const BaggingSpec& s, const std::string& source) {
    BagCollection bags;
    if (!s.bag_file.empty()) {
        bags = read_bags_json(s.bag_file);
        bags.validate(ds.size());
        return bags;
    }
    if (s.method == "uniform") {
        bags = uniform_bags(ds, s.bag_size, s.seed);
    } else {
        bags = kmeans_bags(ds, s.k, s.seed, {s.max_iter, s.pca_dim});
        bags = subsample_bags(bags, s.threshold, derive_seed(s.seed, {0x737562ULL}));
    }
    bags.source = source;
    return bags;
}

ojson model_to_json(const MlpParams& p) {
    ojson j;
    j["dims"] = p.dims();
    j["activation"] = activation_name(p.activation());
    auto& layers = j["layers"] = ojson::array();
    for (const auto& l : p.layers()) {
        ojson lj;
        lj["weight"] = std::vector<double>(l.weight.values().begin(), l.weight.values().end());
        lj["bias"] = std::vector<double>(l.bias.values().begin(), l.bias.values().end());
        layers.push_back(std::move(lj));
    }
    return j;
}

MlpParams model_from_json(const nlohmann::json& j) {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    const auto& layers_j = j.at("layers");
    if (dims.size() != layers_j.size() + 1) throw std::invalid_argument("model dims do not match layers");
    std::vector<DenseLayer> layers;
    for (std::size_t k = 0; k < layers_j.size(); ++k) {
        layers.push_back({Tensor::matrix(dims[k], dims[k + 1], layers_j[k].at("weight").get<std::vector<double>>()),
                          Tensor::vector(layers_j[k].at("bias").get<std::vector<double>>())});
    }
    return MlpParams(std::move(layers), activation_from_name(j.value("activation", std::string("relu"))));
}

std::array<double, 5> bag_size_quartiles(const BagCollection& bags) {
    if (bags.bags.empty()) throw std::invalid_argument("quartiles of an empty collection");
    std::vector<double> sizes;
    for (const auto& b : bags.bags) sizes.push_back(static_cast<double>(b.size()));
    std::sort(sizes.begin(), sizes.end());
    auto q = [&](double f) {
        const double pos = f * static_cast<double>(sizes.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, sizes.size() - 1);
        return sizes[lo] + (pos - static_cast<double>(lo)) * (sizes[hi] - sizes[lo]);
    };
    return {sizes.front(), q(0.25), q(0.5), q(0.75), sizes.back()};
}

// ---- artifact output --------------------------------------------------

namespace {

/// Collects artifacts for one command; nothing exists on disk until commit().
class ArtifactSet {
public:
    ArtifactSet(OutputOptions opts, std::string command, std::string hash)
        : opts_(std::move(opts)), command_(std::move(command)), hash_(std::move(hash)) {}

    void add(const std::string& name, std::string contents) { files_.emplace_back(name, std::move(contents)); }
    void add_json(const std::string& name, ojson j) {
        j["config_hash"] = hash_;
        add(name, j.dump(2) + "\n");
    }

    void commit() {
        ojson manifest;
        manifest["command"] = command_;
        manifest["config_hash"] = hash_;
        manifest["artifacts"] = ojson::array();
        for (const auto& [name, _] : files_) manifest["artifacts"].push_back(name);
        files_.emplace_back(command_ + ".manifest.json", manifest.dump(2) + "\n");

        std::filesystem::create_directories(opts_.out_dir);
        if (!opts_.force)
            for (const auto& [name, _] : files_)
                if (std::filesystem::exists(opts_.out_dir / name))
                    throw std::runtime_error("refusing to overwrite " + (opts_.out_dir / name).string() +
                                             " (pass --force)");
        for (const auto& [name, contents] : files_) {
            std::ofstream out(opts_.out_dir / name, std::ios::binary | std::ios::trunc);
            out << contents;
            if (!out) throw std::runtime_error("failed writing " + (opts_.out_dir / name).string());
        }
    }

private:
    OutputOptions opts_;
    std::string command_;
    std::string hash_;
    std::vector<std::pair<std::string, std::string>> files_;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace

GenerateBagsResult run_generate_bags(const ExperimentConfig& cfg, const OutputOptions& out, std::ostream& log) {
    const std::string hash = config_hash(to_json(cfg));
    const LabeledDataset ds = make_dataset(cfg.dataset);
    GenerateBagsResult res{make_bags(ds, cfg.bagging, cfg.name), hash};

    ArtifactSet artifacts(out, "generate-bags", hash);
    auto j = bags_to_json(res.bags);
    j["config_hash"] = hash;
    artifacts.add("bags.json", j.dump() + "\n");
    artifacts.commit();

    const auto q = bag_size_quartiles(res.bags);
    log << "bags: " << res.bags.size() << "\n"
        << "bag size min/q1/median/q3/max: " << fmt(q[0]) << " " << fmt(q[1]) << " " << fmt(q[2]) << " "
        << fmt(q[3]) << " " << fmt(q[4]) << "\n"
        << "instances covered: " << [&] {
               std::size_t n = 0;
               for (const auto& b : res.bags.bags) n += b.size();
               return n;
           }() << " of " << ds.size() << "\n";
    return res;
}

TrainRunResult run_experiment(const ExperimentConfig& cfg) {
    TrainRunResult out;
    out.config_hash = config_hash(to_json(cfg));
    const LabeledDataset ds = make_dataset(cfg.dataset);
    std::optional<LabeledDataset> test;
    if (cfg.test_dataset) test = make_dataset(*cfg.test_dataset);
    const BagCollection bags = make_bags(ds, cfg.bagging, cfg.name);
    const BagSplit split = split_bags(bags, cfg.bagging.train_fraction, cfg.bagging.split_seed);
    out.result = train(split.train, split.val, ds.X, test ? &*test : nullptr, cfg.train);
    if (test) out.final_accuracy = final_accuracy(out.result.history, cfg.train.final_window);
    for (const auto& r : out.result.history)
        if (r.val_errors && (!out.best_val_hard_l1 || (*r.val_errors)[0] < *out.best_val_hard_l1))
            out.best_val_hard_l1 = (*r.val_errors)[0];
    return out;
}

TrainRunResult run_train(const ExperimentConfig& cfg, const OutputOptions& out, std::ostream& log) {
    TrainRunResult res = run_experiment(cfg);
    ArtifactSet artifacts(out, "train", res.config_hash);
    std::ostringstream csv;
    write_history_csv(csv, res.result.history);
    artifacts.add("history.csv", csv.str());
    artifacts.add_json("model.json", model_to_json(res.result.params));
    ojson summary;
    summary["final_accuracy"] = res.final_accuracy ? ojson(*res.final_accuracy) : ojson(nullptr);
    summary["best_val_hard_l1"] = res.best_val_hard_l1 ? ojson(*res.best_val_hard_l1) : ojson(nullptr);
    summary["epochs"] = cfg.train.epochs;
    summary["final_window"] = cfg.train.final_window;
    std::size_t fallbacks = 0;
    for (const auto& r : res.result.history) fallbacks += r.vat_fallbacks;
    summary["vat_fallbacks"] = fallbacks;
    summary["config"] = to_json(cfg);
    artifacts.add_json("summary.json", std::move(summary));
    artifacts.commit();

    if (res.final_accuracy)
        log << "final accuracy (last " << cfg.train.final_window << " epochs): " << fmt(*res.final_accuracy) << "\n";
    else
        log << "final accuracy: n/a (no test dataset)\n";
    if (res.best_val_hard_l1) log << "best val hard L1: " << fmt(*res.best_val_hard_l1) << "\n";
    return res;
}

// ---- toy ----------------------------------------------------------------

TrainConfig ToyOptions::default_toy_train_config() {
    TrainConfig c;
    c.epochs = 300;
    c.base_lr = 1e-2;
    c.lr_decay_at = 240;
    c.lr_decay_factor = 0.2;
    c.final_window = 10;
    c.hidden = {64, 64};
    return c;
}

ConsistencySpec ToyOptions::default_toy_consistency() {
    ConsistencySpec s;
    s.kind = ConsistencyKind::pi_model;
    s.alpha = 1.0;
    s.sigma = 0.1;
    s.rampup_epochs = 90;
    return s;
}

ToyOptions toy_options_from_json(const nlohmann::json& j) {
    ToyOptions o;
    o.seed = j.value("seed", o.seed);
    o.n_per_class = j.value("n_per_class", o.n_per_class);
    o.noise_std = j.value("noise_std", o.noise_std);
    o.bag_size = j.value("bag_size", o.bag_size);
    o.test_n_per_class = j.value("test_n_per_class", o.test_n_per_class);
    o.grid_size = j.value("grid_size", o.grid_size);
    if (j.contains("train")) {
        o.train = train_config_from_json(j["train"]);
        o.train.consistency = {};
    }
    if (j.contains("consistency")) {
        nlohmann::json wrapper{{"epochs", o.train.epochs}, {"consistency", j["consistency"]}};
        o.consistency = train_config_from_json(wrapper).consistency;
    }
    if (o.consistency.kind == ConsistencyKind::none)
        throw std::invalid_argument("toy consistency variant needs kind pi_model or vat");
    if (o.grid_size < 2) throw std::invalid_argument("toy grid_size must be >= 2");
    return o;
}

ojson to_json(const ToyOptions& o) {
    ojson j;
    j["seed"] = o.seed;
    j["n_per_class"] = o.n_per_class;
    j["noise_std"] = o.noise_std;
    j["bag_size"] = o.bag_size;
    j["test_n_per_class"] = o.test_n_per_class;
    j["grid_size"] = o.grid_size;
    // the toy run derives its own training seed and sets consistency per variant
    ojson train = to_json(o.train);
    train.erase("consistency");
    train.erase("seed");
    j["train"] = std::move(train);
    TrainConfig wrapper;
    wrapper.consistency = o.consistency;
    j["consistency"] = to_json(wrapper)["consistency"];
    return j;
}

ToyResult run_toy_experiment(const ToyOptions& o) {
    ToyResult res;
    res.train = two_moons(o.n_per_class, o.noise_std, derive_seed(o.seed, {1}));
    const LabeledDataset test = two_moons(o.test_n_per_class, o.noise_std, derive_seed(o.seed, {2}));
    res.bags = uniform_bags(res.train, o.bag_size, derive_seed(o.seed, {3}));
    res.bags.source = "toy_two_moons";

    TrainConfig cfg = o.train;
    cfg.seed = derive_seed(o.seed, {4});
    cfg.consistency = {};
    const BagCollection no_val;
    const TrainResult vanilla = train(res.bags, no_val, res.train.X, &test, cfg);
    cfg.consistency = o.consistency;
    const TrainResult cons = train(res.bags, no_val, res.train.X, &test, cfg);

    res.vanilla = vanilla.params;
    res.consistency = cons.params;
    res.vanilla_accuracy = final_accuracy(vanilla.history, cfg.final_window);
    res.consistency_accuracy = final_accuracy(cons.history, cfg.final_window);

    double lo0 = res.train.X(0, 0), hi0 = lo0, lo1 = res.train.X(0, 1), hi1 = lo1;
    for (std::size_t i = 0; i < res.train.size(); ++i) {
        lo0 = std::min(lo0, res.train.X(i, 0));
        hi0 = std::max(hi0, res.train.X(i, 0));
        lo1 = std::min(lo1, res.train.X(i, 1));
        hi1 = std::max(hi1, res.train.X(i, 1));
    }
    const double pad0 = 0.2 * (hi0 - lo0);
    const double pad1 = 0.2 * (hi1 - lo1);
    res.grid_box = {lo0 - pad0, hi0 + pad0, lo1 - pad1, hi1 + pad1};
    return res;
}

ToyResult run_toy(const ToyOptions& o, const OutputOptions& out, std::ostream& log) {
    ToyResult res = run_toy_experiment(o);
    const ojson opts_json = to_json(o);
    ArtifactSet artifacts(out, "toy", config_hash(opts_json));

    std::ostringstream data;
    write_dataset_csv(data, res.train);
    artifacts.add("dataset.csv", data.str());

    const std::size_t g = o.grid_size;
    Tensor grid = Tensor::matrix(g * g, 2);
    for (std::size_t a = 0; a < g; ++a)
        for (std::size_t b = 0; b < g; ++b) {
            const double fa = static_cast<double>(a) / static_cast<double>(g - 1);
            const double fb = static_cast<double>(b) / static_cast<double>(g - 1);
            grid(a * g + b, 0) = res.grid_box[0] + fa * (res.grid_box[1] - res.grid_box[0]);
            grid(a * g + b, 1) = res.grid_box[2] + fb * (res.grid_box[3] - res.grid_box[2]);
        }
    const Tensor pv = mlp_forward(res.vanilla, grid);
    const Tensor pc = mlp_forward(res.consistency, grid);
    std::ostringstream grid_csv;
    grid_csv << "x0,x1,prob_class1_vanilla,prob_class1_cons\n";
    for (std::size_t i = 0; i < grid.rows(); ++i)
        grid_csv << format_double(grid(i, 0)) << ',' << format_double(grid(i, 1)) << ',' << format_double(pv(i, 1))
                 << ',' << format_double(pc(i, 1)) << '\n';
    artifacts.add("grid.csv", grid_csv.str());

    ojson summary;
    summary["vanilla_accuracy"] = res.vanilla_accuracy;
    summary["consistency_accuracy"] = res.consistency_accuracy;
    summary["bags"] = ojson::array();
    for (const auto& b : res.bags.bags) summary["bags"].push_back({{"size", b.size()}, {"proportion", b.proportion}});
    summary["grid_box"] = res.grid_box;
    summary["options"] = opts_json;
    artifacts.add_json("toy_summary.json", std::move(summary));
    artifacts.commit();

    log << "bags: " << res.bags.size() << " x " << o.bag_size << "\n"
        << "vanilla test accuracy: " << fmt(res.vanilla_accuracy) << "\n"
        << "consistency (" << to_string(o.consistency.kind) << ") test accuracy: " << fmt(res.consistency_accuracy)
        << "\n";
    return res;
}

// ---- correlation study --------------------------------------------------

CorrelateConfig correlate_config_from_json(const nlohmann::json& j) {
    CorrelateConfig c;
    for (const auto& d : j.at("datasets")) c.datasets.push_back(experiment_config_from_json(d));
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        c.grid.alphas = g.value("alpha", c.grid.alphas);
        c.grid.epsilons = g.value("epsilon", c.grid.epsilons);
        c.grid.seeds = g.value("seeds", c.grid.seeds);
    }
    if (c.datasets.empty()) throw std::invalid_argument("correlate needs at least one dataset");
    const std::size_t runs = c.datasets.size() * c.grid.alphas.size() * c.grid.epsilons.size() * c.grid.seeds.size();
    if (runs < 5) throw std::invalid_argument("correlate grid must have at least 5 runs, got " + std::to_string(runs));
    for (const auto& d : c.datasets)
        if (!d.test_dataset) throw std::invalid_argument("correlate dataset '" + d.name + "' needs a test_dataset");
    return c;
}

ojson to_json(const CorrelateConfig& c) {
    ojson j;
    j["datasets"] = ojson::array();
    for (const auto& d : c.datasets) j["datasets"].push_back(to_json(d));
    j["grid"] = {{"alpha", c.grid.alphas}, {"epsilon", c.grid.epsilons}, {"seeds", c.grid.seeds}};
    return j;
}

namespace {

DatasetSpec moons_spec(std::size_t n_per_class, std::uint64_t seed) {
    DatasetSpec s;
    s.generator = "two_moons";
    s.n_per_class = n_per_class;
    s.noise_std = 0.1;
    s.seed = seed;
    return s;
}

DatasetSpec blobs_spec(const std::vector<std::vector<double>>& centers, std::size_t n_per_center, std::uint64_t seed) {
    DatasetSpec s;
    s.generator = "gaussian_blobs";
    s.centers = centers;
    s.n_per_center = n_per_center;
    s.std_dev = 0.35;
    s.seed = seed;
    return s;
}

} // namespace

CorrelateConfig default_correlate_config() {
    TrainConfig t;
    t.epochs = 100;
    t.base_lr = 1e-3;
    t.lr_decay_at = 80;
    t.lr_decay_factor = 0.2;
    t.final_window = 10;
    t.hidden = {32, 32};
    t.consistency.kind = ConsistencyKind::vat;
    t.consistency.rampup_epochs = 30;

    ExperimentConfig moons;
    moons.name = "two_moons";
    moons.dataset = moons_spec(2000, 11);
    moons.test_dataset = moons_spec(1000, 12);
    moons.bagging.method = "uniform";
    moons.bagging.bag_size = 8;
    moons.bagging.seed = 13;
    moons.bagging.split_seed = 14;
    moons.train = t;

    ExperimentConfig blobs;
    blobs.name = "blobs";
    const std::vector<std::vector<double>> centers{{0.0, 0.0}, {1.5, 0.0}, {0.75, 1.275}};
    blobs.dataset = blobs_spec(centers, 1333, 21);
    blobs.test_dataset = blobs_spec(centers, 700, 22);
    blobs.bagging.method = "uniform";
    blobs.bagging.bag_size = 8;
    blobs.bagging.seed = 23;
    blobs.bagging.split_seed = 24;
    blobs.train = t;

    return CorrelateConfig{{moons, blobs}, GridSpec{}};
}

std::vector<std::pair<std::string, ExperimentConfig>> expand_grid(const CorrelateConfig& c) {
    std::vector<std::pair<std::string, ExperimentConfig>> out;
    for (const auto& base : c.datasets)
        for (double a : c.grid.alphas)
            for (double e : c.grid.epsilons)
                for (std::uint64_t s : c.grid.seeds) {
                    ExperimentConfig run = base;
                    if (run.train.consistency.kind == ConsistencyKind::none) run.train.consistency.kind = ConsistencyKind::vat;
                    run.train.consistency.alpha = a;
                    run.train.consistency.epsilon = e;
                    run.train.seed = s;
                    char id[160];
                    std::snprintf(id, sizeof id, "%03zu-%s-a%g-e%g-s%llu", out.size(), base.name.c_str(), a, e,
                                  static_cast<unsigned long long>(s));
                    out.emplace_back(id, std::move(run));
                }
    return out;
}

std::size_t default_thread_count() {
    if (const char* env = std::getenv("LLP_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

std::array<std::optional<double>, 4> correlations(const std::vector<const CorrelationRun*>& runs) {
    std::array<std::optional<double>, 4> out;
    std::vector<double> te;
    for (const auto* r : runs) te.push_back(r->test_error);
    for (std::size_t m = 0; m < 4; ++m) {
        std::vector<double> xs;
        for (const auto* r : runs) xs.push_back(r->val_errors[m]);
        try {
            out[m] = pearson(xs, te);
        } catch (const UndefinedCorrelation&) {
        } catch (const std::invalid_argument&) {
        }
    }
    return out;
}

ojson coefficients_json(const std::array<std::optional<double>, 4>& c) {
    ojson j;
    for (std::size_t m = 0; m < 4; ++m)
        j[std::string(to_string(kAllMetrics[m]))] = c[m] ? ojson(*c[m]) : ojson(nullptr);
    return j;
}

} // namespace

CorrelationSummary run_correlation_study(const CorrelateConfig& cfg, std::size_t threads) {
    const auto runs = expand_grid(cfg);
    std::vector<std::optional<CorrelationRun>> results(runs.size());
    std::vector<std::string> errors(runs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            const auto& [id, exp] = runs[i];
            try {
                const TrainRunResult r = run_experiment(exp);
                CorrelationRun row;
                row.run_id = id;
                row.dataset = exp.name;
                row.config_hash = r.config_hash;
                row.val_errors = final_validation_errors(r.result.history, exp.train.final_window);
                row.test_error = 1.0 - *r.final_accuracy;
                results[i] = std::move(row);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, runs.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    CorrelationSummary summary;
    for (auto& r : results)
        if (r) summary.runs.push_back(std::move(*r));
    if (summary.runs.size() < 2) {
        std::string msg = "correlation study needs at least 2 completed runs, got " + std::to_string(summary.runs.size());
        for (std::size_t i = 0; i < errors.size(); ++i)
            if (!errors[i].empty()) msg += "\n  " + runs[i].first + ": " + errors[i];
        throw std::runtime_error(msg);
    }
    std::sort(summary.runs.begin(), summary.runs.end(),
              [](const CorrelationRun& a, const CorrelationRun& b) { return a.run_id < b.run_id; });

    std::vector<const CorrelationRun*> all;
    for (const auto& r : summary.runs) all.push_back(&r);
    summary.pooled = correlations(all);
    for (const auto& d : cfg.datasets) {
        std::vector<const CorrelationRun*> sub;
        for (const auto& r : summary.runs)
            if (r.dataset == d.name) sub.push_back(&r);
        summary.per_dataset.emplace_back(d.name, correlations(sub));
    }
    return summary;
}

void write_correlation_csv(std::ostream& out, const std::vector<CorrelationRun>& runs) {
    out << "run_id,config_hash,val_hard_l1,val_soft_l1,val_hard_kl,val_soft_kl,test_error\n";
    for (const auto& r : runs) {
        out << r.run_id << ',' << r.config_hash;
        for (double v : r.val_errors) out << ',' << format_double(v);
        out << ',' << format_double(r.test_error) << '\n';
    }
}

CorrelationSummary run_correlate(const CorrelateConfig& cfg, const OutputOptions& out, std::size_t threads,
                                 std::ostream& log) {
    CorrelationSummary summary = run_correlation_study(cfg, threads);
    const ojson cfg_json = to_json(cfg);
    const std::string hash = config_hash(cfg_json);

    for (std::size_t m = 0; m < 4; ++m)
        if (!summary.pooled[m])
            throw UndefinedCorrelation(std::string("pooled ") + std::string(to_string(kAllMetrics[m])) +
                                       " correlation is undefined: a series is constant");

    ArtifactSet artifacts(out, "correlate", hash);
    std::ostringstream csv;
    write_correlation_csv(csv, summary.runs);
    artifacts.add("correlation.csv", csv.str());
    ojson j;
    j["pearson"] = coefficients_json(summary.pooled);
    j["runs"] = summary.runs.size();
    j["per_dataset"] = ojson::object();
    for (const auto& [name, c] : summary.per_dataset) j["per_dataset"][name] = coefficients_json(c);
    artifacts.add_json("correlation_summary.json", std::move(j));
    artifacts.commit();

    log << "runs: " << summary.runs.size() << "\n";
    log << "pearson(test error, validation metric), pooled:";
    for (std::size_t m = 0; m < 4; ++m) log << " " << to_string(kAllMetrics[m]) << "=" << fmt(*summary.pooled[m]);
    log << "\n";
    for (const auto& [name, c] : summary.per_dataset) {
        log << "  " << name << ":";
        for (std::size_t m = 0; m < 4; ++m)
            log << " " << to_string(kAllMetrics[m]) << "=" << (c[m] ? fmt(*c[m]) : std::string("undefined"));
        log << "\n";
    }
    return summary;
}

} // namespace llp
