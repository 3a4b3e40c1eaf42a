#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "llp/experiment.hpp"
#include "llp/rng.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path);
    return nlohmann::json::parse(in);
}

struct Common {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    bool force = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
    auto* opt = cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
    if (config_required) opt->required();
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
    cmd->add_option("--seed", c.seed, "override the run seeds");
    cmd->add_flag("--force", c.force, "overwrite existing outputs");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning from label proportions: bag generation, training and evaluation"};
    app.require_subcommand(1);

    Common gen, tr, toy, cor;
    std::size_t threads = 0;
    auto* gen_cmd = app.add_subcommand("generate-bags", "build bags for a dataset and write bags.json");
    add_common(gen_cmd, gen, true);
    auto* train_cmd = app.add_subcommand("train", "train one model from an experiment config");
    add_common(train_cmd, tr, true);
    auto* toy_cmd = app.add_subcommand("toy", "vanilla vs consistency-regularized training on a small two-moons set");
    add_common(toy_cmd, toy, false);
    auto* cor_cmd = app.add_subcommand("correlate", "correlate validation bag error with test error over a grid");
    add_common(cor_cmd, cor, false);
    cor_cmd->add_option("--threads", threads, "worker threads (default: LLP_THREADS or core count)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_cmd || *train_cmd) {
            const Common& c = *gen_cmd ? gen : tr;
            llp::ExperimentConfig cfg = llp::read_experiment_config(c.config);
            if (c.seed) llp::override_seed(cfg, *c.seed);
            const llp::OutputOptions out{c.out, c.force};
            if (*gen_cmd)
                llp::run_generate_bags(cfg, out, std::cout);
            else
                llp::run_train(cfg, out, std::cout);
        } else if (*toy_cmd) {
            llp::ToyOptions opts = toy.config.empty() ? llp::ToyOptions{} : llp::toy_options_from_json(load_json(toy.config));
            if (toy.seed) opts.seed = *toy.seed;
            llp::run_toy(opts, {toy.out, toy.force}, std::cout);
        } else {
            llp::CorrelateConfig cfg =
                cor.config.empty() ? llp::default_correlate_config() : llp::correlate_config_from_json(load_json(cor.config));
            if (cor.seed)
                for (auto& s : cfg.grid.seeds) s = llp::derive_seed(*cor.seed, {s});
            llp::run_correlate(cfg, {cor.out, cor.force}, threads ? threads : llp::default_thread_count(), std::cout);
        }
    } catch (const llp::TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
