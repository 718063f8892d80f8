#include "gatk/attacks.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "gatk/error.hpp"
#include "gatk/parallel.hpp"

namespace gatk {

std::string method_name(Method m) {
    switch (m) {
        case Method::Fgsm:
            return "fgsm";
        case Method::Ifgsm:
            return "ifgsm";
        case Method::Mifgsm:
            return "mifgsm";
        case Method::Nifgsm:
            return "nifgsm";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    s.erase(std::remove(s.begin(), s.end(), '-'), s.end());
    if (s == "fgsm") return Method::Fgsm;
    if (s == "ifgsm") return Method::Ifgsm;
    if (s == "mifgsm") return Method::Mifgsm;
    if (s == "nifgsm") return Method::Nifgsm;
    throw ConfigError("unknown attack method '" + name + "'");
}

// ---------------------------------------------------------------------------

AttackConfig AttackConfig::smi_fgrm() {
    AttackConfig cfg;
    cfg.method = Method::Mifgsm;
    cfg.rule = UpdateRule::rescale(2.0);
    cfg.sampler = SamplerConfig::depth_first(12, 1.5);
    return cfg;
}

AttackConfig AttackConfig::fgsm(double epsilon) {
    AttackConfig cfg;
    cfg.method = Method::Fgsm;
    cfg.epsilon = epsilon;
    cfg.alpha = epsilon;
    cfg.iterations = 1;
    return cfg;
}

void AttackConfig::validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (iterations < 1) throw ConfigError("at least one iteration is required");
    if (!(alpha > 0.0)) throw ConfigError("step size alpha must be positive");
    if (!(mu >= 0.0)) throw ConfigError("momentum decay mu must be non-negative");
    if (method == Method::Fgsm && (iterations != 1 || alpha != epsilon)) {
        throw ConfigError("fgsm requires one iteration with alpha equal to epsilon");
    }
    if (!rule.is_sign() && !(rule.rescale_factor() > 0.0)) throw ConfigError("rescale factor c must be positive");
    sampler.validate();
    pipeline.validate();
}

std::string AttackConfig::canonical() const {
    std::ostringstream os;
    os.precision(17);
    os << "method=" << method_name(method);
    os << ";rule=" << (rule.is_sign() ? "sign" : "rescale") << ";c=" << rule.rescale_factor();
    os << ";sampler=" << static_cast<int>(sampler.kind) << ";n=" << sampler.n << ";beta=" << sampler.beta;
    os << ";sigma=" << (sampler.sigma ? *sampler.sigma : -1.0);
    if (pipeline.dim) os << ";dim=" << pipeline.dim->p << "," << pipeline.dim->r_min_fraction;
    if (pipeline.sim) os << ";sim=" << pipeline.sim->m;
    if (pipeline.tim) os << ";tim=" << pipeline.tim->kernel_size << "," << pipeline.tim->sigma();
    os << ";eps=" << epsilon << ";T=" << iterations << ";alpha=" << alpha << ";mu=" << mu << ";seed=" << seed;
    return os.str();
}

std::uint64_t AttackConfig::fingerprint() const {
    // FNV-1a, 64-bit.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------

GradientSource::GradientSource(Classifier model) {
    members_.push_back(std::make_shared<const Classifier>(std::move(model)));
    check_members();
}

GradientSource::GradientSource(std::vector<Classifier> members) {
    for (auto& m : members) members_.push_back(std::make_shared<const Classifier>(std::move(m)));
    check_members();
}

void GradientSource::check_members() {
    if (members_.empty()) throw ConfigError("gradient source needs at least one model");
    input_shape_ = members_[0]->spec().input_shape();
    for (const auto& m : members_) {
        if (m->spec().input_shape() != input_shape_ || m->spec().classes != members_[0]->spec().classes) {
            throw ConfigError("ensemble members disagree on input or output shape: " + shape_str(input_shape_) +
                              " vs " + shape_str(m->spec().input_shape()));
        }
    }
}

const Shape& GradientSource::input_shape() const { return input_shape_; }

Tensor GradientSource::logits(const Tensor& x) const {
    if (members_.size() == 1) return members_[0]->logits(x);
    Tape tape;
    Var in = tape.constant_ref(x);
    std::vector<Var> outs;
    for (const auto& m : members_) outs.push_back(m->forward(tape, in));
    return tape.value(ad::mean(tape, outs));
}

std::size_t GradientSource::predict(const Tensor& x) const {
    const Tensor l = logits(x);
    return static_cast<std::size_t>(std::max_element(l.values().begin(), l.values().end()) - l.values().begin());
}

Tensor GradientSource::gradient(const Tensor& x, std::size_t label) const {
    if (members_.size() == 1) return members_[0]->input_gradient(x, label);
    Tape tape;
    Var in = tape.input(x);
    std::vector<Var> outs;
    for (const auto& m : members_) outs.push_back(m->forward(tape, in));
    Var loss = ad::softmax_cross_entropy(tape, ad::mean(tape, outs), label);
    tape.backward(loss);
    return tape.grad(in);
}

Tensor source_gradient(const GradientSource& src, const Tensor& x, std::size_t label) {
    return src.gradient(x, label);
}

// ---------------------------------------------------------------------------

AttackResult run_attack(const GradientSource& src, const Tensor& x, std::size_t label, const AttackConfig& cfg,
                        std::uint64_t image_index) {
    cfg.validate();
    if (x.shape() != src.input_shape()) {
        throw DimensionError("attack input is " + shape_str(x.shape()) + " but the model expects " +
                             shape_str(src.input_shape()));
    }

    const InputGradFn plain = [&](const Tensor& p) { return src.gradient(p, label); };
    const GradFn transformed = [&](const Tensor& p, RngStream& rng) {
        return composite_gradient(plain, p, cfg.pipeline, rng);
    };
    const bool momentum = cfg.method == Method::Mifgsm || cfg.method == Method::Nifgsm;

    AttackResult result;
    Tensor adv = x;
    Tensor g(x.shape());
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        const RngStream rng(cfg.seed, image_index, t);
        Tensor at = adv;
        if (cfg.method == Method::Nifgsm) {
            const double look = cfg.alpha * cfg.mu;
            for (std::size_t i = 0; i < at.size(); ++i) at[i] += look * g[i];
        }

        Tensor sampled = sampled_gradient(cfg.sampler, transformed, at, cfg.epsilon, rng);
        require_finite(sampled, "attack gradient");
        bool degenerate = false;
        if (momentum) {
            Tensor normalized = l1_normalize(sampled, degenerate);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = cfg.mu * g[i] + normalized[i];
        } else {
            degenerate = !(sampled.abs_sum() > 0.0);
            g = std::move(sampled);
        }
        if (degenerate) ++result.degenerate_steps;

        const Tensor step = cfg.rule.apply(g);
        Tensor proposal = adv;
        for (std::size_t i = 0; i < proposal.size(); ++i) proposal[i] += cfg.alpha * step[i];
        Tensor next = clip_to_budget(proposal, x, cfg.epsilon);
        std::size_t clipped = 0;
        for (std::size_t i = 0; i < next.size(); ++i) clipped += next[i] != proposal[i];
        result.clipped_fraction.push_back(static_cast<double>(clipped) / static_cast<double>(next.size()));
        adv = std::move(next);
    }

    if (result.degenerate_steps == cfg.iterations) {
        result.warnings.push_back("gradient vanished at every iteration; returning the input unchanged");
        adv = x;
    } else if (result.degenerate_steps > 0) {
        result.warnings.push_back("gradient vanished at " + std::to_string(result.degenerate_steps) + " of " +
                                  std::to_string(cfg.iterations) + " iterations");
    }
    result.iterations = cfg.iterations;
    result.linf = linf_distance(adv, x);
    result.adversarial = std::move(adv);
    return result;
}

std::vector<BatchItem> attack_batch(const GradientSource& src, std::span<const Tensor> images,
                                    std::span<const std::size_t> labels, const AttackConfig& cfg,
                                    std::span<const std::uint64_t> indices, std::size_t threads) {
    if (images.size() != labels.size()) throw ConsistencyError("attack_batch: images and labels differ in length");
    if (!indices.empty() && indices.size() != images.size()) {
        throw ConsistencyError("attack_batch: stream indices and images differ in length");
    }
    cfg.validate();
    std::vector<BatchItem> out(images.size());
    parallel_for(
        images.size(),
        [&](std::size_t i) {
            try {
                const std::uint64_t index = indices.empty() ? i : indices[i];
                out[i].result = run_attack(src, images[i], labels[i], cfg, index);
            } catch (const std::exception& e) {
                out[i].error = e.what();
                out[i].exception = std::current_exception();
            }
        },
        threads);
    return out;
}

}  // namespace gatk
