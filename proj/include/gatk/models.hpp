#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gatk/autograd.hpp"
#include "gatk/data_io.hpp"
#include "gatk/tensor.hpp"

namespace gatk {

enum class Architecture {
    MlpA,  // flatten -> dense(256) -> relu -> dense(K)
    CnnA,  // conv(8, 3x3) -> relu -> pool -> conv(16, 3x3) -> relu -> pool -> dense(K)
    CnnB,  // conv(6, 5x5) -> relu -> pool -> dense(64) -> relu -> dense(K)
};

std::string architecture_name(Architecture arch);
/// Accepts "mlp-a", "cnn-a", "cnn-b" (case-insensitive); throws ConfigError otherwise.
Architecture parse_architecture(const std::string& name);

struct ModelSpec {
    Architecture arch = Architecture::CnnA;
    std::size_t channels = 1;
    std::size_t height = 28;
    std::size_t width = 28;
    std::size_t classes = 10;

    Shape input_shape() const { return {channels, height, width}; }
    /// Throws ConfigError when the input size is incompatible with the pooling layout.
    void validate() const;
    /// Expected (name, shape) of every trainable tensor, in storage order.
    std::vector<std::pair<std::string, Shape>> parameter_layout() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct NamedTensor {
    std::string name;
    Tensor value;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

using Weights = std::vector<NamedTensor>;

/// Feedforward classifier with fixed weights. Read-only use is thread-safe.
class Classifier {
public:
    /// Throws ShapeError unless `weights` matches spec.parameter_layout().
    Classifier(ModelSpec spec, Weights weights);

    const ModelSpec& spec() const noexcept { return spec_; }
    const Weights& weights() const noexcept { return weights_; }
    Weights& mutable_weights() noexcept { return weights_; }

    /// Records the forward pass on `tape` and returns the K logits. When
    /// `track_params` is set the weights are recorded as differentiable
    /// leaves, in parameter_layout() order, starting at the returned
    /// `first_param` id.
    Var forward(Tape& tape, Var x, bool track_params = false, std::size_t* first_param = nullptr) const;

    Tensor logits(const Tensor& x) const;
    std::vector<double> probabilities(const Tensor& x) const;
    std::size_t predict(const Tensor& x) const;
    double loss(const Tensor& x, std::size_t label) const;

    /// Exact reverse-mode gradient of the cross-entropy loss with respect to x.
    Tensor input_gradient(const Tensor& x, std::size_t label) const;

    /// Loss and per-parameter gradients (parameter_layout() order).
    double parameter_gradients(const Tensor& x, std::size_t label, std::vector<Tensor>& grads) const;

private:
    void check_input(const Tensor& x) const;

    ModelSpec spec_;
    Weights weights_;
};

/// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases.
Classifier init_model(const ModelSpec& spec, std::uint64_t seed);

struct TrainConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    /// Fraction of each batch replaced by single-step sign attacks (eps 0.2).
    double adversarial_fraction = 0.0;
    double adversarial_epsilon = 0.2;

    void validate() const;
};

struct TrainResult {
    Classifier model;
    std::vector<double> epoch_losses;
};

/// Mini-batch SGD with momentum on softmax cross-entropy. Deterministic for a
/// fixed (spec, dataset order, cfg). Throws NumericalError naming the batch
/// when the loss becomes non-finite.
TrainResult train(const ModelSpec& spec, const LabeledDataset& data, const TrainConfig& cfg);

/// Fraction of examples whose argmax prediction equals the label.
double accuracy(const Classifier& model, const LabeledDataset& data);

// GATK weight files (little-endian): "GATK", u32 version, u32 tensor count,
// then per tensor u32 name length + UTF-8 name, u32 rank, u64 dims and f64
// payload, followed by a CRC32 of every preceding byte.
std::vector<std::uint8_t> encode_weights(const Weights& w);
Weights decode_weights(std::span<const std::uint8_t> bytes);
void save_weights(const Weights& w, const std::string& path);
Weights load_weights(const std::string& path);

/// Classifier persistence: a leading "model.spec" tensor [arch, C, H, W, K]
/// followed by the parameters.
Weights export_classifier(const Classifier& model);
Classifier import_classifier(const Weights& w);
void save_classifier(const Classifier& model, const std::string& path);
Classifier load_classifier(const std::string& path);

}  // namespace gatk
