#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gatk/models.hpp"
#include "gatk/sampling.hpp"
#include "gatk/tensor.hpp"
#include "gatk/transforms.hpp"
#include "gatk/update_rules.hpp"

namespace gatk {

enum class Method { Fgsm, Ifgsm, Mifgsm, Nifgsm };

std::string method_name(Method m);
Method parse_method(const std::string& name);

/// Full attack hyperparameter bundle. Defaults are the ImageNet-scale
/// settings on the [0, 1] pixel scale (eps 16/255, T 10, alpha 1.6/255,
/// mu 1); `smi_fgrm()` adds the rescale rule and depth-first sampling.
struct AttackConfig {
    Method method = Method::Mifgsm;
    UpdateRule rule = UpdateRule::sign();
    SamplerConfig sampler;
    TransformPipeline pipeline;
    double epsilon = 16.0 / 255.0;
    std::size_t iterations = 10;
    double alpha = 1.6 / 255.0;
    double mu = 1.0;
    std::uint64_t seed = 0;

    /// Momentum + rescale(c = 2) + depth-first sampling (N = 12, beta = 1.5).
    static AttackConfig smi_fgrm();
    /// Single step with alpha = epsilon.
    static AttackConfig fgsm(double epsilon);

    void validate() const;
    /// Stable textual description of every field, used for fingerprinting.
    std::string canonical() const;
    std::uint64_t fingerprint() const;
};

/// A single classifier or a logit-averaging ensemble.
class GradientSource {
public:
    explicit GradientSource(Classifier model);
    explicit GradientSource(std::vector<Classifier> members);

    std::size_t size() const noexcept { return members_.size(); }
    const Classifier& member(std::size_t i) const { return *members_.at(i); }
    const Shape& input_shape() const;

    /// Mean of the member logits.
    Tensor logits(const Tensor& x) const;
    std::size_t predict(const Tensor& x) const;
    /// Gradient of the cross-entropy of the averaged logits with respect to x.
    Tensor gradient(const Tensor& x, std::size_t label) const;

private:
    void check_members();

    std::vector<std::shared_ptr<const Classifier>> members_;
    Shape input_shape_;
};

Tensor source_gradient(const GradientSource& src, const Tensor& x, std::size_t label);

struct AttackResult {
    Tensor adversarial;
    std::size_t iterations = 0;
    double linf = 0.0;
    /// Fraction of entries altered by the budget projection, per iteration.
    std::vector<double> clipped_fraction;
    std::size_t degenerate_steps = 0;
    std::vector<std::string> warnings;
};

/// Crafts an untargeted adversarial example. Iteration t draws its
/// randomness from RngStream(cfg.seed, image_index, t).
AttackResult run_attack(const GradientSource& src, const Tensor& x, std::size_t label, const AttackConfig& cfg,
                        std::uint64_t image_index = 0);

struct BatchItem {
    std::optional<AttackResult> result;
    std::string error;
    std::exception_ptr exception;

    bool ok() const noexcept { return result.has_value(); }
};

/// run_attack over every image; image i uses stream index `indices[i]` when
/// given, i otherwise. Output order matches input order. Failures are
/// captured per item.
std::vector<BatchItem> attack_batch(const GradientSource& src, std::span<const Tensor> images,
                                    std::span<const std::size_t> labels, const AttackConfig& cfg,
                                    std::span<const std::uint64_t> indices = {}, std::size_t threads = 0);

}  // namespace gatk
