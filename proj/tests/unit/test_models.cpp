#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "gatk/data_io.hpp"
#include "gatk/error.hpp"
#include "gatk/models.hpp"
#include "gatk/update_rules.hpp"
#include "test_util.hpp"

using namespace gatk;
using testutil::bit_equal;

namespace {

ModelSpec small_spec(Architecture arch, std::size_t classes = 4) { return {arch, 2, 8, 8, classes}; }

const Architecture kArchs[] = {Architecture::MlpA, Architecture::CnnA, Architecture::CnnB};

// Little-endian reference writer for the weight format.
struct RefWriter {
    std::vector<std::uint8_t> b;
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double d) {
        std::uint64_t v;
        std::memcpy(&v, &d, 8);
        u64(v);
    }
};

double fgsm_accuracy(const Classifier& m, const LabeledDataset& d, double eps) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Tensor& x = d.images[i];
        const Tensor adv = clip_to_budget(x + sign_update(m.input_gradient(x, d.labels[i])) * eps, x, eps);
        ok += m.predict(adv) == d.labels[i];
    }
    return static_cast<double>(ok) / static_cast<double>(d.size());
}

}  // namespace

TEST_CASE("parameter layouts follow the architecture definitions") {
    const ModelSpec mnist{Architecture::CnnA, 1, 28, 28, 10};
    const auto a = mnist.parameter_layout();
    REQUIRE(a.size() == 6);
    CHECK(a[0].second == Shape{8, 1, 3, 3});
    CHECK(a[2].second == Shape{16, 8, 3, 3});
    CHECK(a[4].second == Shape{16 * 7 * 7, 10});
    const auto b = ModelSpec{Architecture::CnnB, 1, 28, 28, 10}.parameter_layout();
    REQUIRE(b.size() == 6);
    CHECK(b[0].second == Shape{6, 1, 5, 5});
    CHECK(b[2].second == Shape{6 * 14 * 14, 64});
    CHECK(b[4].second == Shape{64, 10});
    const auto m = ModelSpec{Architecture::MlpA, 1, 28, 28, 10}.parameter_layout();
    REQUIRE(m.size() == 4);
    CHECK(m[0].second == Shape{784, 256});
    CHECK(m[2].second == Shape{256, 10});
    CHECK_THROWS_AS((ModelSpec{Architecture::CnnA, 1, 10, 10, 10}.validate()), ConfigError);
    CHECK_THROWS_AS(parse_architecture("resnet"), ConfigError);
    CHECK(parse_architecture("CNN-B") == Architecture::CnnB);
}

TEST_CASE("initialisation is deterministic and bounded") {
    std::size_t scanned = 0;
    for (Architecture arch : kArchs) {
        const ModelSpec spec{arch, 1, 28, 28, 10};
        const Classifier a = init_model(spec, 9), b = init_model(spec, 9), c = init_model(spec, 10);
        CHECK(a.weights() == b.weights());
        CHECK_FALSE(a.weights() == c.weights());
        for (const auto& w : a.weights()) {
            const Shape& s = w.value.shape();
            if (s.size() == 1) {
                CHECK(w.value.max_abs() == 0.0);
                continue;
            }
            const double fan_in = s.size() == 2 ? s[0] : s[1] * s[2] * s[3];
            const double fan_out = s.size() == 2 ? s[1] : s[0] * s[2] * s[3];
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            CHECK(w.value.max_abs() <= bound);
            CHECK(w.value.max_abs() > 0.5 * bound);
            scanned += w.value.size();
        }
    }
    CHECK(scanned >= 10000);
}

TEST_CASE("forward pass shapes and probabilities") {
    std::mt19937_64 rng(61);
    for (Architecture arch : kArchs) {
        const Classifier m = init_model(small_spec(arch), 3);
        for (int t = 0; t < 10; ++t) {
            const Tensor x = testutil::random_tensor({2, 8, 8}, rng, 0, 1);
            CHECK(m.logits(x).shape() == Shape{4});
            const auto p = m.probabilities(x);
            double s = 0.0;
            for (double v : p) s += v;
            CHECK(std::fabs(s - 1.0) < 1e-12);
            CHECK(m.loss(x, 1) >= 0.0);
        }
        CHECK_THROWS_AS(m.input_gradient(Tensor({1, 8, 8}), 0), DimensionError);
        CHECK_THROWS_AS(m.input_gradient(Tensor({2, 8, 8}), 4), IndexError);
    }
}

TEST_CASE("input gradients match directional central differences") {
    std::mt19937_64 rng(67);
    for (Architecture arch : kArchs) {
        const Classifier m = init_model(small_spec(arch), 5);
        for (int t = 0; t < 10; ++t) {
            const Tensor x = testutil::random_tensor({2, 8, 8}, rng, 0, 1);
            Tensor u = testutil::random_tensor({2, 8, 8}, rng);
            double norm = 0.0;
            for (double v : u.values()) norm += v * v;
            u *= 1.0 / std::sqrt(norm);
            const std::size_t y = static_cast<std::size_t>(t % 4);
            const Tensor g = m.input_gradient(x, y);
            double analytic = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) analytic += g[i] * u[i];
            const double h = 1e-5;
            const double numeric = (m.loss(x + u * h, y) - m.loss(x - u * h, y)) / (2 * h);
            CHECK(std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-8}) < 1e-5);
            CHECK(bit_equal(g, m.input_gradient(x, y)));
        }
    }
}

TEST_CASE("parameter gradients match central differences") {
    std::mt19937_64 rng(71);
    for (Architecture arch : kArchs) {
        Classifier m = init_model(small_spec(arch), 7);
        const Tensor x = testutil::random_tensor({2, 8, 8}, rng, 0, 1);
        std::vector<Tensor> grads;
        m.parameter_gradients(x, 2, grads);
        REQUIRE(grads.size() == m.weights().size());
        for (std::size_t p = 0; p < grads.size(); ++p) {
            std::uniform_int_distribution<std::size_t> pick(0, grads[p].size() - 1);
            for (int s = 0; s < 5; ++s) {
                const std::size_t j = pick(rng);
                double& w = m.mutable_weights()[p].value[j];
                const double saved = w, h = 1e-5;
                w = saved + h;
                const double lp = m.loss(x, 2);
                w = saved - h;
                const double lm = m.loss(x, 2);
                w = saved;
                const double numeric = (lp - lm) / (2 * h);
                CHECK(std::fabs(grads[p][j] - numeric) <= 1e-6 * std::max({std::fabs(numeric), 1e-3}));
            }
        }
    }
}

TEST_CASE("zero final layer gives a zero input gradient") {
    for (Architecture arch : kArchs) {
        Classifier m = init_model(small_spec(arch), 11);
        auto& w = m.mutable_weights();
        w[w.size() - 2].value *= 0.0;
        std::mt19937_64 rng(73);
        const Tensor g = m.input_gradient(testutil::random_tensor({2, 8, 8}, rng, 0, 1), 1);
        CHECK(g.max_abs() == 0.0);
    }
}

TEST_CASE("training on separable synthetic data") {
    const LabeledDataset two = synthetic_blobs(100, 2, 28, 5);
    const ModelSpec mlp{Architecture::MlpA, 1, 28, 28, 2};
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 3;
    const TrainResult r = train(mlp, two, cfg);
    CHECK(accuracy(r.model, two) == 1.0);

    const LabeledDataset ten = synthetic_blobs(20, 10, 28, 6);
    TrainConfig cfg10;
    cfg10.epochs = 6;
    cfg10.seed = 4;
    const TrainResult a = train({Architecture::CnnA, 1, 28, 28, 10}, ten, cfg10);
    const TrainResult b = train({Architecture::CnnA, 1, 28, 28, 10}, ten, cfg10);
    CHECK(a.model.weights() == b.model.weights());
    CHECK(a.epoch_losses == b.epoch_losses);
    std::size_t non_increasing = 0;
    for (std::size_t e = 1; e < a.epoch_losses.size(); ++e) non_increasing += a.epoch_losses[e] <= a.epoch_losses[e - 1];
    CHECK(non_increasing * 5 >= (a.epoch_losses.size() - 1) * 4);
    CHECK(accuracy(a.model, ten) >= 0.9);
}

TEST_CASE("training rejects invalid configurations and diverging runs") {
    const LabeledDataset d = synthetic_blobs(10, 3, 8, 1);
    const ModelSpec spec{Architecture::MlpA, 1, 8, 8, 3};
    TrainConfig bad;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(spec, d, bad), ConfigError);
    bad = {};
    bad.adversarial_fraction = 1.5;
    CHECK_THROWS_AS(train(spec, d, bad), ConfigError);
    CHECK_THROWS_AS(train({Architecture::MlpA, 1, 12, 12, 3}, d, TrainConfig{}), DimensionError);

    TrainConfig wild;
    wild.learning_rate = 1e200;
    wild.epochs = 20;
    try {
        train(spec, d, wild);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("batch") != std::string::npos);
    }
}

TEST_CASE("adversarial training hardens the model against FGSM") {
    const std::string prefix = std::string(GATK_SOURCE_DIR) + "/data/mnist5k/train";
    if (!std::filesystem::exists(prefix + "-images-idx3-ubyte")) {
        MESSAGE("MNIST-format data not present; skipping");
        return;
    }
    const LabeledDataset all = load_idx_prefix(prefix);
    const LabeledDataset tr = all.slice(0, 2000), te = all.slice(2000, 500);
    const ModelSpec spec{Architecture::CnnB, 1, 28, 28, 10};
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.learning_rate = 0.02;
    cfg.seed = 12;
    const Classifier plain = train(spec, tr, cfg).model;
    cfg.adversarial_fraction = 0.5;
    const Classifier hard = train(spec, tr, cfg).model;
    const double a0 = fgsm_accuracy(plain, te, 0.2), a1 = fgsm_accuracy(hard, te, 0.2);
    MESSAGE("FGSM(0.2) accuracy q=0: " << a0 << " q=0.5: " << a1);
    CHECK(a1 - a0 >= 0.20);
}

TEST_CASE("weight file layout and round trip") {
    const Weights w{{"a", Tensor::from({1.5, -2.0})}, {"bb", Tensor({1, 2}, std::vector<double>{0.25, 3.0})}};
    RefWriter ref;
    for (char ch : std::string("GATK")) ref.b.push_back(static_cast<std::uint8_t>(ch));
    ref.u32(1);
    ref.u32(2);
    ref.u32(1);
    ref.b.push_back('a');
    ref.u32(1);
    ref.u64(2);
    ref.f64(1.5);
    ref.f64(-2.0);
    ref.u32(2);
    ref.b.push_back('b');
    ref.b.push_back('b');
    ref.u32(2);
    ref.u64(1);
    ref.u64(2);
    ref.f64(0.25);
    ref.f64(3.0);
    ref.u32(static_cast<std::uint32_t>(crc32(0, ref.b.data(), static_cast<uInt>(ref.b.size()))));
    CHECK(encode_weights(w) == ref.b);
    CHECK(decode_weights(ref.b) == w);
}

TEST_CASE("weight file errors are distinct") {
    const Classifier m = init_model(small_spec(Architecture::CnnB), 13);
    const auto bytes = encode_weights(export_classifier(m));

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_weights(bad_magic), FormatError);

    auto bad_version = bytes;
    bad_version[4] = 2;
    CHECK_THROWS_AS(decode_weights(bad_version), VersionError);

    for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
        CHECK_THROWS_AS(decode_weights(std::span(bytes).first(cut)), LengthError);
    }

    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(decode_weights(flipped), DataError);
    auto payload = bytes;
    payload[bytes.size() - 12] ^= 0x01;
    CHECK_THROWS_AS(decode_weights(payload), ChecksumError);

    Weights fewer = export_classifier(m);
    fewer.pop_back();
    CHECK_THROWS_AS(import_classifier(decode_weights(encode_weights(fewer))), ShapeError);
    Weights no_spec = m.weights();
    CHECK_THROWS_AS(import_classifier(no_spec), ShapeError);
}

TEST_CASE("save and load preserve every prediction bit-exactly") {
    const auto dir = std::filesystem::temp_directory_path() / "gatk_models_test";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(79);
    for (Architecture arch : kArchs) {
        const Classifier m = init_model(small_spec(arch), 17);
        const std::string path = (dir / (architecture_name(arch) + ".gatk")).string();
        save_classifier(m, path);
        const Classifier back = load_classifier(path);
        CHECK(back.spec() == m.spec());
        CHECK(back.weights() == m.weights());
        for (int t = 0; t < 5; ++t) {
            const Tensor x = testutil::random_tensor({2, 8, 8}, rng, 0, 1);
            CHECK(bit_equal(back.logits(x), m.logits(x)));
        }
    }
    std::filesystem::remove_all(dir);
}
