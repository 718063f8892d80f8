#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gatk/attacks.hpp"
#include "gatk/data_io.hpp"
#include "gatk/error.hpp"
#include "gatk/eval.hpp"
#include "gatk/models.hpp"
#include "gatk/parallel.hpp"

using namespace gatk;

namespace {

struct DataOptions {
    std::string source;
    std::size_t synthetic_per_class = 100;
    std::uint64_t synthetic_seed = 1;
    std::size_t limit = 0;
};

void add_data_options(CLI::App* cmd, DataOptions& d, bool required = true) {
    auto* opt = cmd->add_option("--data", d.source, "IDX prefix (<prefix>-images-idx3-ubyte) or 'synthetic'");
    if (required) opt->required();
    cmd->add_option("--synthetic-per-class", d.synthetic_per_class, "images per class for synthetic data")
        ->capture_default_str();
    cmd->add_option("--synthetic-seed", d.synthetic_seed, "seed for synthetic data")->capture_default_str();
    cmd->add_option("--limit", d.limit, "use only the first N images (0 = all)")->capture_default_str();
}

LabeledDataset load_data(const DataOptions& d) {
    LabeledDataset ds = d.source == "synthetic" ? synthetic_blobs(d.synthetic_per_class, 10, 28, d.synthetic_seed)
                                                : load_idx_prefix(d.source);
    if (d.limit > 0 && d.limit < ds.size()) ds = ds.slice(0, d.limit);
    return ds;
}

std::string model_name(const std::string& path) { return std::filesystem::path(path).stem().string(); }

struct AttackOptions {
    std::string method = "mifgsm";
    std::string rule = "sign";
    double c = 2.0;
    std::string sampler = "none";
    std::size_t n = 12;
    double beta = 1.5;
    std::string transforms;
    double dim_p = 0.5;
    std::size_t sim_m = 5;
    std::size_t tim_size = 7;
    double eps = 16.0 / 255.0;
    std::size_t iters = 10;
    double alpha = 1.6 / 255.0;
    double mu = 1.0;
    std::uint64_t seed = 0;
};

void add_attack_options(CLI::App* cmd, AttackOptions& a) {
    cmd->add_option("--method", a.method, "fgsm|ifgsm|mifgsm|nifgsm (fgsm forces one step of size eps)")->capture_default_str();
    cmd->add_option("--rule", a.rule, "sign|rescale")->capture_default_str();
    cmd->add_option("--c", a.c, "rescale factor")->capture_default_str();
    cmd->add_option("--sampler", a.sampler, "none|dfs|gaussian")->capture_default_str();
    cmd->add_option("--n", a.n, "number of sampled points")->capture_default_str();
    cmd->add_option("--beta", a.beta, "sampling range as a multiple of eps")->capture_default_str();
    cmd->add_option("--transforms", a.transforms, "comma list of dim, sim, tim");
    cmd->add_option("--dim-p", a.dim_p, "DIM application probability")->capture_default_str();
    cmd->add_option("--sim-m", a.sim_m, "SIM scale copies")->capture_default_str();
    cmd->add_option("--tim-size", a.tim_size, "TIM kernel size (odd)")->capture_default_str();
    cmd->add_option("--eps", a.eps, "L-infinity budget")->capture_default_str();
    cmd->add_option("--iters", a.iters, "iterations")->capture_default_str();
    cmd->add_option("--alpha", a.alpha, "step size")->capture_default_str();
    cmd->add_option("--mu", a.mu, "momentum decay")->capture_default_str();
    cmd->add_option("--seed", a.seed, "attack seed")->capture_default_str();
}

AttackConfig build_attack_config(const AttackOptions& a) {
    AttackConfig cfg;
    cfg.method = parse_method(a.method);
    if (a.rule == "sign") {
        cfg.rule = UpdateRule::sign();
    } else if (a.rule == "rescale") {
        cfg.rule = UpdateRule::rescale(a.c);
    } else {
        throw ConfigError("unknown update rule '" + a.rule + "' (expected sign or rescale)");
    }
    if (a.sampler == "none") {
        cfg.sampler = SamplerConfig::none();
    } else if (a.sampler == "dfs") {
        cfg.sampler = SamplerConfig::depth_first(a.n, a.beta);
    } else if (a.sampler == "gaussian") {
        cfg.sampler = SamplerConfig::gaussian(a.n, a.beta);
    } else {
        throw ConfigError("unknown sampler '" + a.sampler + "' (expected none, dfs or gaussian)");
    }
    std::stringstream ss(a.transforms);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (item == "dim") {
            cfg.pipeline.dim = DimConfig{a.dim_p, 0.9};
        } else if (item == "sim") {
            cfg.pipeline.sim = SimConfig{a.sim_m};
        } else if (item == "tim") {
            cfg.pipeline.tim = TimConfig{a.tim_size, std::nullopt};
        } else {
            throw ConfigError("unknown transform '" + item + "' (expected dim, sim or tim)");
        }
    }
    cfg.epsilon = a.eps;
    cfg.iterations = a.iters;
    cfg.alpha = a.alpha;
    cfg.mu = a.mu;
    cfg.seed = a.seed;
    if (cfg.method == Method::Fgsm) {
        cfg.iterations = 1;
        cfg.alpha = cfg.epsilon;
    }
    cfg.validate();
    return cfg;
}

GradientSource load_source(const std::string& model, const std::vector<std::string>& ensemble) {
    std::vector<Classifier> members{load_classifier(model)};
    for (const auto& p : ensemble) members.push_back(load_classifier(p));
    return GradientSource(std::move(members));
}

std::vector<NamedModel> load_targets(const std::vector<std::string>& paths) {
    std::vector<NamedModel> out;
    for (const auto& p : paths) out.push_back({model_name(p), load_classifier(p)});
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

int run(int argc, char** argv) {
    CLI::App app{"gatk: gradient-based adversarial attack toolkit"};
    app.require_subcommand(1);
    std::size_t threads = 0;
    app.add_option("--threads", threads, "worker threads (default: GATK_THREADS or logical cores)");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a classifier");
    std::string arch = "cnn-a", train_out;
    DataOptions train_data;
    TrainConfig tcfg;
    train_cmd->add_option("--arch", arch, "mlp-a|cnn-a|cnn-b")->capture_default_str();
    add_data_options(train_cmd, train_data);
    train_cmd->add_option("--epochs", tcfg.epochs)->capture_default_str();
    train_cmd->add_option("--batch-size", tcfg.batch_size)->capture_default_str();
    train_cmd->add_option("--lr", tcfg.learning_rate)->capture_default_str();
    train_cmd->add_option("--momentum", tcfg.momentum)->capture_default_str();
    train_cmd->add_option("--adv-fraction", tcfg.adversarial_fraction, "fraction of each batch replaced by FGSM examples")
        ->capture_default_str();
    train_cmd->add_option("--adv-eps", tcfg.adversarial_epsilon)->capture_default_str();
    train_cmd->add_option("--seed", tcfg.seed)->capture_default_str();
    train_cmd->add_option("--out", train_out, "output weight file")->required();
    std::string eval_data_src;
    train_cmd->add_option("--eval-data", eval_data_src, "IDX prefix for reporting clean accuracy");

    // attack
    auto* attack_cmd = app.add_subcommand("attack", "craft adversarial examples");
    std::string surrogate_path, adv_out;
    std::vector<std::string> ensemble;
    AttackOptions aopt;
    DataOptions attack_data;
    std::size_t max_images = 1000;
    attack_cmd->add_option("--model", surrogate_path, "surrogate weight file")->required();
    attack_cmd->add_option("--ensemble", ensemble, "additional surrogate weight files (logit ensemble)");
    add_attack_options(attack_cmd, aopt);
    add_data_options(attack_cmd, attack_data);
    attack_cmd->add_option("--max-images", max_images, "attack at most this many eligible images")
        ->capture_default_str();
    attack_cmd->add_option("--out", adv_out, "output GADV file")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score adversarial examples against targets");
    std::string adv_in, format = "csv", eval_out, eval_surrogate;
    std::vector<std::string> eval_targets;
    DataOptions eval_data;
    eval_cmd->add_option("--adv", adv_in, "GADV file")->required();
    eval_cmd->add_option("--targets", eval_targets, "target weight files")->required();
    eval_cmd->add_option("--format", format, "csv|markdown")->capture_default_str();
    eval_cmd->add_option("--surrogate", eval_surrogate, "surrogate weight file, used for naming and white-box flags");
    add_data_options(eval_cmd, eval_data);
    eval_cmd->add_option("--out", eval_out, "output file (default stdout)");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "parameter sweep");
    std::string param, grid_text, sweep_out, sweep_model;
    std::vector<std::string> sweep_ensemble, sweep_targets;
    AttackOptions sopt;
    DataOptions sweep_data;
    std::size_t sweep_max_images = 1000;
    sweep_cmd->add_option("--param", param, "n|beta|c")->required();
    sweep_cmd->add_option("--grid", grid_text, "comma separated, strictly increasing")->required();
    sweep_cmd->add_option("--model", sweep_model, "surrogate weight file")->required();
    sweep_cmd->add_option("--ensemble", sweep_ensemble, "additional surrogate weight files");
    sweep_cmd->add_option("--targets", sweep_targets, "target weight files")->required();
    add_attack_options(sweep_cmd, sopt);
    add_data_options(sweep_cmd, sweep_data);
    sweep_cmd->add_option("--max-images", sweep_max_images)->capture_default_str();
    sweep_cmd->add_option("--out", sweep_out, "output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (threads == 0) threads = default_thread_count();

    if (*train_cmd) {
        const LabeledDataset data = load_data(train_data);
        ModelSpec spec;
        spec.arch = parse_architecture(arch);
        spec.channels = data.image_shape()[0];
        spec.height = data.image_shape()[1];
        spec.width = data.image_shape()[2];
        spec.classes = data.classes;
        const TrainResult res = train(spec, data, tcfg);
        for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) {
            std::fprintf(stderr, "epoch %zu loss %.5f\n", e + 1, res.epoch_losses[e]);
        }
        std::fprintf(stderr, "train accuracy %.4f\n", accuracy(res.model, data));
        if (!eval_data_src.empty()) {
            const LabeledDataset held = load_idx_prefix(eval_data_src);
            std::fprintf(stderr, "eval accuracy %.4f\n", accuracy(res.model, held));
        }
        save_classifier(res.model, train_out);
        return 0;
    }

    if (*attack_cmd) {
        const AttackConfig cfg = build_attack_config(aopt);
        const GradientSource src = load_source(surrogate_path, ensemble);
        const LabeledDataset data = load_data(attack_data);
        const auto indices = eligible_indices(src, data, max_images);
        if (indices.empty()) throw NoEligibleSamplesError("the surrogate classifies no image correctly");
        const CraftedSet crafted = craft_adversarials(src, data, indices, cfg, threads);
        AdvBatch batch;
        batch.fingerprint = cfg.fingerprint();
        batch.seed = cfg.seed;
        for (std::size_t i = 0; i < crafted.indices.size(); ++i) {
            batch.indices.push_back(crafted.indices[i]);
            batch.examples.push_back(crafted.adversarials[i]);
            for (const auto& w : crafted.results[i].warnings) {
                std::fprintf(stderr, "image %zu: %s\n", crafted.indices[i], w.c_str());
            }
        }
        save_adv_batch(batch, adv_out);
        std::fprintf(stderr, "wrote %zu adversarial examples (fingerprint %016llx)\n", batch.examples.size(),
                     static_cast<unsigned long long>(batch.fingerprint));
        return 0;
    }

    if (*eval_cmd) {
        const ReportFormat fmt = parse_report_format(format);
        const AdvBatch batch = load_adv_batch(adv_in);
        const LabeledDataset data = load_data(eval_data);
        CraftedSet crafted;
        for (std::size_t i = 0; i < batch.indices.size(); ++i) {
            if (batch.indices[i] >= data.size()) {
                throw ConsistencyError("GADV index " + std::to_string(batch.indices[i]) + " is outside the dataset");
            }
            if (batch.examples[i].shape() != data.image_shape()) {
                throw ShapeError("GADV example " + std::to_string(i) + " does not match the dataset image shape");
            }
            crafted.indices.push_back(batch.indices[i]);
            crafted.adversarials.push_back(batch.examples[i]);
        }
        if (crafted.indices.empty()) throw NoEligibleSamplesError("GADV file holds no examples");
        const auto targets = load_targets(eval_targets);
        TransferReport report;
        report.fingerprint = batch.fingerprint;
        const std::string sname = eval_surrogate.empty() ? "surrogate" : model_name(eval_surrogate);
        report.surrogates.push_back(sname);
        report.rates.emplace_back();
        report.counts.emplace_back();
        report.white_box.emplace_back();
        for (const auto& t : targets) {
            report.targets.push_back(t.name);
            report.rates[0].push_back(crafted_success_rate(t.model, data, crafted));
            report.counts[0].push_back(crafted.indices.size());
            report.white_box[0].push_back(t.name == sname);
        }
        write_text(eval_out, emit_report(report, fmt));
        return 0;
    }

    if (*sweep_cmd) {
        const SweepParam p = parse_sweep_param(param);
        std::vector<double> grid;
        std::stringstream ss(grid_text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                std::size_t used = 0;
                grid.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("sweep: cannot parse grid value '" + item + "'");
            }
        }
        const AttackConfig base = build_attack_config(sopt);
        const NamedSource src{model_name(sweep_model), load_source(sweep_model, sweep_ensemble)};
        const auto targets = load_targets(sweep_targets);
        const LabeledDataset data = load_data(sweep_data);
        const SweepResult res = run_sweep(p, grid, base, src, targets, data, sweep_max_images, threads);
        write_text(sweep_out, emit_sweep_csv(res));
        return 0;
    }
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
