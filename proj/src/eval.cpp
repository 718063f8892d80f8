#include "gatk/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include "gatk/error.hpp"

namespace gatk {

double success_rate(const Classifier& target, std::span<const Tensor> originals, std::span<const Tensor> adversarials,
                    std::span<const std::size_t> labels, std::span<const bool> mask) {
    const std::size_t n = labels.size();
    if (originals.size() != n || adversarials.size() != n || mask.size() != n) {
        throw ConsistencyError("success_rate: originals, adversarials, labels and mask must align");
    }
    std::size_t eligible = 0, fooled = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        require_same_shape(originals[i], adversarials[i], "success_rate");
        ++eligible;
        fooled += target.predict(adversarials[i]) != labels[i];
    }
    if (eligible == 0) throw NoEligibleSamplesError("success_rate: no eligible samples");
    return 100.0 * static_cast<double>(fooled) / static_cast<double>(eligible);
}

std::vector<std::size_t> eligible_indices(const GradientSource& surrogate, const LabeledDataset& data,
                                          std::size_t limit) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.size() && out.size() < limit; ++i) {
        if (surrogate.predict(data.images[i]) == data.labels[i]) out.push_back(i);
    }
    return out;
}

CraftedSet craft_adversarials(const GradientSource& surrogate, const LabeledDataset& data,
                              std::span<const std::size_t> indices, const AttackConfig& cfg, std::size_t threads) {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::vector<std::uint64_t> streams;
    for (std::size_t idx : indices) {
        images.push_back(data.images.at(idx));
        labels.push_back(data.labels.at(idx));
        streams.push_back(idx);
    }
    auto items = attack_batch(surrogate, images, labels, cfg, streams, threads);
    CraftedSet out;
    out.indices.assign(indices.begin(), indices.end());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!items[i].ok()) std::rethrow_exception(items[i].exception);
        out.adversarials.push_back(items[i].result->adversarial);
        out.results.push_back(std::move(*items[i].result));
    }
    return out;
}

double crafted_success_rate(const Classifier& target, const LabeledDataset& data, const CraftedSet& crafted) {
    std::vector<Tensor> originals;
    std::vector<std::size_t> labels;
    for (std::size_t idx : crafted.indices) {
        originals.push_back(data.images.at(idx));
        labels.push_back(data.labels.at(idx));
    }
    const std::unique_ptr<bool[]> mask(new bool[crafted.indices.size()]);
    std::fill(mask.get(), mask.get() + crafted.indices.size(), true);
    return success_rate(target, originals, crafted.adversarials, labels,
                        std::span<const bool>(mask.get(), crafted.indices.size()));
}

void TransferReport::validate() const {
    if (rates.size() != surrogates.size() || counts.size() != surrogates.size() ||
        white_box.size() != surrogates.size()) {
        throw ConsistencyError("transfer report: row count does not match surrogate list");
    }
    for (std::size_t s = 0; s < surrogates.size(); ++s) {
        if (rates[s].size() != targets.size() || counts[s].size() != targets.size() ||
            white_box[s].size() != targets.size()) {
            throw ConsistencyError("transfer report: column count does not match target list");
        }
        for (std::size_t t = 0; t < targets.size(); ++t) {
            if (!(rates[s][t] >= 0.0 && rates[s][t] <= 100.0)) {
                throw ConsistencyError("transfer report: rate outside [0, 100]");
            }
            if (white_box[s][t] != (surrogates[s] == targets[t])) {
                throw ConsistencyError("transfer report: white-box flag disagrees with model names");
            }
        }
    }
}

TransferReport transfer_matrix(std::span<const NamedSource> surrogates, std::span<const NamedModel> targets,
                               const LabeledDataset& data, const AttackConfig& cfg, std::size_t max_images,
                               std::size_t threads) {
    if (data.empty()) throw ConfigError("transfer_matrix: dataset is empty");
    cfg.validate();
    TransferReport report;
    report.fingerprint = cfg.fingerprint();
    for (const auto& t : targets) report.targets.push_back(t.name);
    for (const auto& s : surrogates) {
        report.surrogates.push_back(s.name);
        const auto indices = eligible_indices(s.source, data, max_images);
        if (indices.empty()) throw NoEligibleSamplesError("surrogate " + s.name + " classifies no image correctly");
        const CraftedSet crafted = craft_adversarials(s.source, data, indices, cfg, threads);
        std::vector<double> row;
        std::vector<std::size_t> counts;
        std::vector<bool> flags;
        for (const auto& t : targets) {
            row.push_back(crafted_success_rate(t.model, data, crafted));
            counts.push_back(indices.size());
            flags.push_back(s.name == t.name);
        }
        report.rates.push_back(std::move(row));
        report.counts.push_back(std::move(counts));
        report.white_box.push_back(std::move(flags));
    }
    return report;
}

std::string sweep_param_name(SweepParam p) {
    switch (p) {
        case SweepParam::N:
            return "n";
        case SweepParam::Beta:
            return "beta";
        case SweepParam::C:
            return "c";
    }
    return "unknown";
}

SweepParam parse_sweep_param(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "n") return SweepParam::N;
    if (s == "beta") return SweepParam::Beta;
    if (s == "c") return SweepParam::C;
    throw ConfigError("unknown sweep parameter '" + name + "' (expected n, beta or c)");
}

AttackConfig with_param(const AttackConfig& base, SweepParam param, double value) {
    AttackConfig cfg = base;
    switch (param) {
        case SweepParam::N:
            if (value < 0.0 || value != std::floor(value)) throw ConfigError("sweep: N must be a non-negative integer");
            if (cfg.sampler.kind == SamplerKind::None) cfg.sampler.kind = SamplerKind::DepthFirst;
            cfg.sampler.n = static_cast<std::size_t>(value);
            break;
        case SweepParam::Beta:
            if (cfg.sampler.kind == SamplerKind::None) cfg.sampler.kind = SamplerKind::DepthFirst;
            cfg.sampler.beta = value;
            break;
        case SweepParam::C:
            cfg.rule = UpdateRule::rescale(value);
            break;
    }
    return cfg;
}

SweepResult run_sweep(SweepParam param, std::span<const double> grid, const AttackConfig& base,
                      const NamedSource& surrogate, std::span<const NamedModel> targets, const LabeledDataset& data,
                      std::size_t max_images, std::size_t threads) {
    if (grid.empty()) throw ConfigError("sweep: grid is empty");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) throw ConfigError("sweep: grid must be strictly increasing");
    }
    SweepResult out;
    out.param = param;
    out.grid.assign(grid.begin(), grid.end());
    for (const auto& t : targets) out.targets.push_back(t.name);
    const auto indices = eligible_indices(surrogate.source, data, max_images);
    if (indices.empty()) throw NoEligibleSamplesError("surrogate " + surrogate.name + " classifies no image correctly");
    for (double v : grid) {
        const AttackConfig cfg = with_param(base, param, v);
        const CraftedSet crafted = craft_adversarials(surrogate.source, data, indices, cfg, threads);
        std::vector<double> row;
        for (const auto& t : targets) row.push_back(crafted_success_rate(t.model, data, crafted));
        out.rates.push_back(std::move(row));
        out.counts.push_back(indices.size());
    }
    return out;
}

ReportFormat parse_report_format(const std::string& name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "markdown" || name == "md") return ReportFormat::Markdown;
    throw ConfigError("unknown report format '" + name + "' (expected csv or markdown)");
}

std::string format_rate(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", rate);
    return buf;
}

std::string emit_report(const TransferReport& report, ReportFormat format) {
    report.validate();
    std::ostringstream os;
    if (format == ReportFormat::Csv) {
        os << "surrogate,target,success_rate,n,white_box\n";
        for (std::size_t s = 0; s < report.surrogates.size(); ++s) {
            for (std::size_t t = 0; t < report.targets.size(); ++t) {
                os << report.surrogates[s] << ',' << report.targets[t] << ',' << format_rate(report.rates[s][t])
                   << ',' << report.counts[s][t] << ',' << (report.white_box[s][t] ? 1 : 0) << '\n';
            }
        }
        return os.str();
    }
    for (std::size_t s = 0; s < report.surrogates.size(); ++s) {
        if (s) os << '\n';
        os << "### Surrogate: " << report.surrogates[s] << "\n\n";
        os << "| Target | Success rate (%) | n |\n";
        os << "|---|---:|---:|\n";
        for (std::size_t t = 0; t < report.targets.size(); ++t) {
            os << "| " << report.targets[t] << " | " << format_rate(report.rates[s][t])
               << (report.white_box[s][t] ? "*" : "") << " | " << report.counts[s][t] << " |\n";
        }
    }
    os << "\n\\* white-box (surrogate = target)\n";
    return os.str();
}

std::string emit_sweep_csv(const SweepResult& sweep) {
    std::ostringstream os;
    os.precision(10);
    os << "param,value,target,success_rate,n\n";
    for (std::size_t g = 0; g < sweep.grid.size(); ++g) {
        for (std::size_t t = 0; t < sweep.targets.size(); ++t) {
            os << sweep_param_name(sweep.param) << ',' << sweep.grid[g] << ',' << sweep.targets[t] << ','
               << format_rate(sweep.rates[g][t]) << ',' << sweep.counts[g] << '\n';
        }
    }
    return os.str();
}

}  // namespace gatk
