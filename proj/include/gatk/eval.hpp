#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gatk/attacks.hpp"
#include "gatk/data_io.hpp"
#include "gatk/models.hpp"

namespace gatk {

struct NamedSource {
    std::string name;
    GradientSource source;
};

struct NamedModel {
    std::string name;
    Classifier model;
};

/// 100 * |{i in mask : argmax target(adversarial_i) != label_i}| / |mask|.
/// Throws NoEligibleSamplesError when the mask selects nothing.
double success_rate(const Classifier& target, std::span<const Tensor> originals, std::span<const Tensor> adversarials,
                    std::span<const std::size_t> labels, std::span<const bool> mask);

/// Indices of images the surrogate classifies correctly, at most `limit`.
std::vector<std::size_t> eligible_indices(const GradientSource& surrogate, const LabeledDataset& data,
                                          std::size_t limit);

/// Adversarial examples crafted on the eligible subset of a dataset.
struct CraftedSet {
    std::vector<std::size_t> indices;
    std::vector<Tensor> adversarials;
    std::vector<AttackResult> results;
};

/// Attacks every index in `indices`; the stream index of each image is its
/// dataset index. Throws the first per-image failure.
CraftedSet craft_adversarials(const GradientSource& surrogate, const LabeledDataset& data,
                              std::span<const std::size_t> indices, const AttackConfig& cfg, std::size_t threads = 0);

/// Success rate of a crafted set against one target (every crafted image is eligible).
double crafted_success_rate(const Classifier& target, const LabeledDataset& data, const CraftedSet& crafted);

struct TransferReport {
    std::vector<std::string> surrogates;
    std::vector<std::string> targets;
    std::vector<std::vector<double>> rates;        // percent, [surrogate][target]
    std::vector<std::vector<std::size_t>> counts;  // eligible images per cell
    std::vector<std::vector<bool>> white_box;      // surrogate name == target name
    std::uint64_t fingerprint = 0;

    /// Throws ConsistencyError on malformed dimensions or out-of-range rates.
    void validate() const;
};

/// Crafts once per surrogate (on up to `max_images` eligible images) and
/// scores the result against every target.
TransferReport transfer_matrix(std::span<const NamedSource> surrogates, std::span<const NamedModel> targets,
                               const LabeledDataset& data, const AttackConfig& cfg, std::size_t max_images = 1000,
                               std::size_t threads = 0);

enum class SweepParam { N, Beta, C };

std::string sweep_param_name(SweepParam p);
SweepParam parse_sweep_param(const std::string& name);

struct SweepResult {
    SweepParam param = SweepParam::N;
    std::vector<double> grid;
    std::vector<std::string> targets;
    std::vector<std::vector<double>> rates;  // [grid point][target]
    std::vector<std::size_t> counts;         // eligible images per grid point
};

/// Returns `base` with the swept parameter set to `value`. Sweeping N or
/// beta implies depth-first sampling when no sampler is configured; sweeping
/// c implies the rescale rule.
AttackConfig with_param(const AttackConfig& base, SweepParam param, double value);

/// One transfer evaluation per grid point with every other setting fixed.
/// The grid must be nonempty and strictly increasing.
SweepResult run_sweep(SweepParam param, std::span<const double> grid, const AttackConfig& base,
                      const NamedSource& surrogate, std::span<const NamedModel> targets, const LabeledDataset& data,
                      std::size_t max_images = 1000, std::size_t threads = 0);

enum class ReportFormat { Csv, Markdown };

ReportFormat parse_report_format(const std::string& name);

/// CSV: "surrogate,target,success_rate,n,white_box" rows. Markdown: one table
/// per surrogate, white-box cells starred. Rates carry one decimal place.
std::string emit_report(const TransferReport& report, ReportFormat format);
/// "param,value,target,success_rate,n" rows.
std::string emit_sweep_csv(const SweepResult& sweep);

std::string format_rate(double rate);

}  // namespace gatk
