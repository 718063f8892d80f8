#include "gatk/models.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "gatk/error.hpp"
#include "gatk/rng.hpp"
#include "gatk/update_rules.hpp"

namespace gatk {

namespace {

constexpr char kWeightsMagic[4] = {'G', 'A', 'T', 'K'};
constexpr std::uint32_t kWeightsVersion = 1;
constexpr const char* kSpecTensorName = "model.spec";

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = crc32(crc, bytes.data() + off, n);
        off += n;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string architecture_name(Architecture arch) {
    switch (arch) {
        case Architecture::MlpA:
            return "mlp-a";
        case Architecture::CnnA:
            return "cnn-a";
        case Architecture::CnnB:
            return "cnn-b";
    }
    return "unknown";
}

Architecture parse_architecture(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "mlp-a") return Architecture::MlpA;
    if (s == "cnn-a") return Architecture::CnnA;
    if (s == "cnn-b") return Architecture::CnnB;
    throw ConfigError("unknown architecture '" + name + "' (expected mlp-a, cnn-a or cnn-b)");
}

void ModelSpec::validate() const {
    if (channels == 0 || height == 0 || width == 0) throw ConfigError("model input dimensions must be positive");
    if (classes < 2) throw ConfigError("model needs at least two classes");
    if (arch == Architecture::CnnA && (height % 4 != 0 || width % 4 != 0)) {
        throw ConfigError("cnn-a needs input height and width divisible by 4");
    }
    if (arch == Architecture::CnnB && (height % 2 != 0 || width % 2 != 0)) {
        throw ConfigError("cnn-b needs even input height and width");
    }
}

std::vector<std::pair<std::string, Shape>> ModelSpec::parameter_layout() const {
    validate();
    const std::size_t k = classes;
    switch (arch) {
        case Architecture::MlpA: {
            const std::size_t in = channels * height * width;
            return {{"fc1.weight", {in, 256}}, {"fc1.bias", {256}}, {"fc2.weight", {256, k}}, {"fc2.bias", {k}}};
        }
        case Architecture::CnnA: {
            const std::size_t flat = 16 * (height / 4) * (width / 4);
            return {{"conv1.weight", {8, channels, 3, 3}}, {"conv1.bias", {8}},
                    {"conv2.weight", {16, 8, 3, 3}},       {"conv2.bias", {16}},
                    {"fc1.weight", {flat, k}},             {"fc1.bias", {k}}};
        }
        case Architecture::CnnB: {
            const std::size_t flat = 6 * (height / 2) * (width / 2);
            return {{"conv1.weight", {6, channels, 5, 5}}, {"conv1.bias", {6}}, {"fc1.weight", {flat, 64}},
                    {"fc1.bias", {64}},                    {"fc2.weight", {64, k}}, {"fc2.bias", {k}}};
        }
    }
    throw ConfigError("unknown architecture");
}

// ---------------------------------------------------------------------------

Classifier::Classifier(ModelSpec spec, Weights weights) : spec_(spec), weights_(std::move(weights)) {
    const auto layout = spec_.parameter_layout();
    if (weights_.size() != layout.size()) {
        throw ShapeError(architecture_name(spec_.arch) + " expects " + std::to_string(layout.size()) +
                         " tensors, got " + std::to_string(weights_.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (weights_[i].name != layout[i].first || weights_[i].value.shape() != layout[i].second) {
            throw ShapeError("tensor " + std::to_string(i) + ": expected " + layout[i].first + " " +
                             shape_str(layout[i].second) + ", got " + weights_[i].name + " " +
                             shape_str(weights_[i].value.shape()));
        }
        if (!weights_[i].value.all_finite()) throw NumericalError("tensor " + weights_[i].name + " is not finite");
    }
}

void Classifier::check_input(const Tensor& x) const {
    if (x.shape() != spec_.input_shape()) {
        throw DimensionError("model input must be " + shape_str(spec_.input_shape()) + ", got " +
                             shape_str(x.shape()));
    }
}

Var Classifier::forward(Tape& tape, Var x, bool track_params, std::size_t* first_param) const {
    check_input(tape.value(x));
    std::vector<Var> p;
    p.reserve(weights_.size());
    for (const auto& w : weights_) p.push_back(track_params ? tape.parameter_ref(w.value) : tape.constant_ref(w.value));
    if (first_param) *first_param = p.front().id;

    auto dense = [&](Var h, std::size_t wi) {
        Var flat = ad::reshape(tape, h, {1, tape.value(h).size()});
        return ad::add_bias(tape, ad::matmul(tape, flat, p[wi]), p[wi + 1]);
    };
    auto conv = [&](Var h, std::size_t wi) {
        return ad::add_channel_bias(tape, ad::conv2d(tape, h, p[wi], Padding::Same), p[wi + 1]);
    };

    Var out;
    switch (spec_.arch) {
        case Architecture::MlpA: {
            Var h = ad::relu(tape, dense(x, 0));
            out = dense(h, 2);
            break;
        }
        case Architecture::CnnA: {
            Var h = ad::avgpool2(tape, ad::relu(tape, conv(x, 0)));
            h = ad::avgpool2(tape, ad::relu(tape, conv(h, 2)));
            out = dense(h, 4);
            break;
        }
        case Architecture::CnnB: {
            Var h = ad::avgpool2(tape, ad::relu(tape, conv(x, 0)));
            h = ad::relu(tape, dense(h, 2));
            out = dense(h, 4);
            break;
        }
    }
    return ad::reshape(tape, out, {spec_.classes});
}

Tensor Classifier::logits(const Tensor& x) const {
    Tape tape;
    Var in = tape.constant_ref(x);
    return tape.value(forward(tape, in));
}

std::vector<double> Classifier::probabilities(const Tensor& x) const {
    return kernels::softmax(logits(x).values());
}

std::size_t Classifier::predict(const Tensor& x) const {
    const Tensor l = logits(x);
    return static_cast<std::size_t>(std::max_element(l.values().begin(), l.values().end()) - l.values().begin());
}

double Classifier::loss(const Tensor& x, std::size_t label) const {
    return softmax_cross_entropy(logits(x).values(), label);
}

Tensor Classifier::input_gradient(const Tensor& x, std::size_t label) const {
    Tape tape;
    Var in = tape.input(x);
    Var loss = ad::softmax_cross_entropy(tape, forward(tape, in), label);
    tape.backward(loss);
    return tape.grad(in);
}

double Classifier::parameter_gradients(const Tensor& x, std::size_t label, std::vector<Tensor>& grads) const {
    Tape tape;
    Var in = tape.constant_ref(x);
    std::size_t first = 0;
    Var loss = ad::softmax_cross_entropy(tape, forward(tape, in, true, &first), label);
    tape.backward(loss);
    grads.resize(weights_.size());
    for (std::size_t i = 0; i < weights_.size(); ++i) grads[i] = tape.grad(Var{first + i});
    return tape.value(loss)[0];
}

// ---------------------------------------------------------------------------

Classifier init_model(const ModelSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(splitmix64(seed));
    Weights w;
    for (auto& [name, shape] : spec.parameter_layout()) {
        Tensor t(shape);
        if (shape.size() > 1) {
            std::size_t fan_in = 0, fan_out = 0;
            if (shape.size() == 2) {
                fan_in = shape[0];
                fan_out = shape[1];
            } else {
                const std::size_t receptive = shape[2] * shape[3];
                fan_in = shape[1] * receptive;
                fan_out = shape[0] * receptive;
            }
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (double& v : t.values()) v = dist(rng);
        }
        w.push_back({name, std::move(t)});
    }
    return Classifier(spec, std::move(w));
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(adversarial_fraction >= 0.0 && adversarial_fraction <= 1.0)) {
        throw ConfigError("adversarial fraction must lie in [0, 1]");
    }
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(momentum >= 0.0)) throw ConfigError("momentum must be non-negative");
}

TrainResult train(const ModelSpec& spec, const LabeledDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw ConfigError("training set is empty");
    data.validate();
    if (data.image_shape() != spec.input_shape()) {
        throw DimensionError("training images are " + shape_str(data.image_shape()) + " but the model expects " +
                             shape_str(spec.input_shape()));
    }
    if (data.classes > spec.classes) throw ConfigError("dataset has more classes than the model outputs");

    Classifier model = init_model(spec, cfg.seed);
    std::vector<Tensor> velocity;
    for (const auto& w : model.weights()) velocity.emplace_back(w.value.shape());

    std::mt19937_64 shuffle_rng(splitmix64(cfg.seed ^ 0x5bd1e995ULL));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result{model, {}};
    std::vector<Tensor> grads;
    std::vector<Tensor> batch_grad;
    std::size_t batch_index = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::size_t n = end - start;
            const auto n_adv = static_cast<std::size_t>(std::llround(cfg.adversarial_fraction * static_cast<double>(n)));

            batch_grad.clear();
            for (const auto& w : model.weights()) batch_grad.emplace_back(w.value.shape());
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t idx = order[start + b];
                const Tensor& x = data.images[idx];
                const std::size_t y = data.labels[idx];
                double l;
                if (b < n_adv) {
                    Tensor step = sign_update(model.input_gradient(x, y));
                    Tensor adv = clip_to_budget(x + step * cfg.adversarial_epsilon, x, cfg.adversarial_epsilon);
                    l = model.parameter_gradients(adv, y, grads);
                } else {
                    l = model.parameter_gradients(x, y, grads);
                }
                batch_loss += l;
                for (std::size_t i = 0; i < grads.size(); ++i) batch_grad[i] += grads[i];
            }
            if (!std::isfinite(batch_loss)) {
                throw NumericalError("non-finite training loss at batch " + std::to_string(batch_index) + " (epoch " +
                                     std::to_string(epoch) + ")");
            }
            const double inv = 1.0 / static_cast<double>(n);
            auto& weights = model.mutable_weights();
            for (std::size_t i = 0; i < weights.size(); ++i) {
                Tensor& v = velocity[i];
                const Tensor& g = batch_grad[i];
                Tensor& w = weights[i].value;
                for (std::size_t j = 0; j < w.size(); ++j) {
                    v[j] = cfg.momentum * v[j] + g[j] * inv;
                    w[j] -= cfg.learning_rate * v[j];
                }
                if (!w.all_finite()) {
                    throw NumericalError("non-finite " + weights[i].name + " after batch " +
                                         std::to_string(batch_index) + " (epoch " + std::to_string(epoch) + ")");
                }
            }
            epoch_loss += batch_loss;
            seen += n;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
    }
    result.model = std::move(model);
    return result;
}

double accuracy(const Classifier& model, const LabeledDataset& data) {
    if (data.empty()) throw NoEligibleSamplesError("accuracy: empty dataset");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += model.predict(data.images[i]) == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_weights(const Weights& w) {
    detail::ByteWriter out;
    out.bytes(kWeightsMagic, 4);
    out.u32(kWeightsVersion);
    out.u32(static_cast<std::uint32_t>(w.size()));
    for (const auto& t : w) {
        out.str(t.name);
        out.tensor(t.value);
    }
    const std::uint32_t crc = crc32_of(out.data());
    out.u32(crc);
    return std::move(out.data());
}

Weights decode_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 4 && !std::equal(bytes.begin(), bytes.begin() + 4, kWeightsMagic)) {
        throw FormatError("GATK: bad magic bytes");
    }
    detail::ByteReader r(bytes, "GATK");
    char magic[4];
    r.bytes(magic, 4);
    const std::uint32_t version = r.u32();
    if (version != kWeightsVersion) throw VersionError("GATK: unsupported format version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    Weights w;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str();
        t.value = r.tensor();
        w.push_back(std::move(t));
    }
    const std::size_t body = r.position();
    const std::uint32_t stored = r.u32();
    if (r.remaining() != 0) throw LengthError("GATK: " + std::to_string(r.remaining()) + " trailing bytes");
    if (stored != crc32_of(bytes.first(body))) throw ChecksumError("GATK: CRC32 mismatch");
    return w;
}

void save_weights(const Weights& w, const std::string& path) { write_file(path, encode_weights(w)); }

Weights load_weights(const std::string& path) { return decode_weights(read_file(path)); }

Weights export_classifier(const Classifier& model) {
    const ModelSpec& s = model.spec();
    Weights w;
    w.push_back({kSpecTensorName, Tensor({5}, {static_cast<double>(s.arch), static_cast<double>(s.channels),
                                              static_cast<double>(s.height), static_cast<double>(s.width),
                                              static_cast<double>(s.classes)})});
    w.insert(w.end(), model.weights().begin(), model.weights().end());
    return w;
}

Classifier import_classifier(const Weights& w) {
    if (w.empty() || w.front().name != kSpecTensorName || w.front().value.size() != 5) {
        throw ShapeError("weight file does not start with a model.spec tensor");
    }
    const Tensor& s = w.front().value;
    for (double v : s.values()) {
        if (!(v >= 0.0 && v < 1e6) || v != std::floor(v)) throw FormatError("model.spec holds invalid values");
    }
    if (s[0] > 2.0) throw FormatError("model.spec names an unknown architecture");
    ModelSpec spec{static_cast<Architecture>(static_cast<int>(s[0])), static_cast<std::size_t>(s[1]),
                   static_cast<std::size_t>(s[2]), static_cast<std::size_t>(s[3]), static_cast<std::size_t>(s[4])};
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        throw ShapeError(std::string("model.spec: ") + e.what());
    }
    return Classifier(spec, Weights(w.begin() + 1, w.end()));
}

void save_classifier(const Classifier& model, const std::string& path) {
    save_weights(export_classifier(model), path);
}

Classifier load_classifier(const std::string& path) { return import_classifier(load_weights(path)); }

}  // namespace gatk
