#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gatk/attacks.hpp"
#include "gatk/data_io.hpp"
#include "gatk/error.hpp"
#include "gatk/eval.hpp"
#include "gatk/models.hpp"
#include "gatk/update_rules.hpp"

namespace py = pybind11;
using namespace gatk;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(std::move(shape), std::move(data));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::memcpy(out.mutable_data(), t.data(), t.size() * sizeof(double));
    return out;
}

// Splits an N x C x H x W array into per-image tensors.
std::vector<Tensor> split_batch(const Array& a) {
    if (a.ndim() != 4) throw DimensionError("expected an N x C x H x W array");
    const Shape image{static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(2)),
                      static_cast<std::size_t>(a.shape(3))};
    const std::size_t per = shape_numel(image);
    std::vector<Tensor> out;
    for (py::ssize_t i = 0; i < a.shape(0); ++i) {
        const double* p = a.data() + static_cast<std::size_t>(i) * per;
        out.emplace_back(image, std::vector<double>(p, p + per));
    }
    return out;
}

Array stack(const std::vector<Tensor>& ts, const Shape& image) {
    std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(ts.size())};
    shape.insert(shape.end(), image.begin(), image.end());
    Array out(shape);
    double* dst = out.mutable_data();
    for (const auto& t : ts) {
        std::memcpy(dst, t.data(), t.size() * sizeof(double));
        dst += t.size();
    }
    return out;
}

py::tuple dataset_tuple(const LabeledDataset& d) {
    py::array_t<std::int64_t> labels(static_cast<py::ssize_t>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) labels.mutable_at(i) = static_cast<std::int64_t>(d.labels[i]);
    return py::make_tuple(stack(d.images, d.empty() ? Shape{0, 0, 0} : d.image_shape()), labels, d.classes);
}

LabeledDataset dataset_from(const Array& images, const std::vector<std::size_t>& labels, std::size_t classes) {
    LabeledDataset d;
    d.images = split_batch(images);
    d.labels = labels;
    d.classes = classes;
    d.validate();
    return d;
}

AttackConfig make_config(const std::string& method, const std::string& rule, double c, const std::string& sampler,
                         std::size_t n, double beta, double epsilon, std::size_t iterations, double alpha, double mu,
                         std::uint64_t seed, const std::vector<std::string>& transforms) {
    AttackConfig cfg;
    cfg.method = parse_method(method);
    if (rule == "sign") {
        cfg.rule = UpdateRule::sign();
    } else if (rule == "rescale") {
        cfg.rule = UpdateRule::rescale(c);
    } else {
        throw ConfigError("unknown update rule '" + rule + "'");
    }
    if (sampler == "none") {
        cfg.sampler = SamplerConfig::none();
    } else if (sampler == "dfs") {
        cfg.sampler = SamplerConfig::depth_first(n, beta);
    } else if (sampler == "gaussian") {
        cfg.sampler = SamplerConfig::gaussian(n, beta);
    } else {
        throw ConfigError("unknown sampler '" + sampler + "'");
    }
    for (const auto& t : transforms) {
        if (t == "dim") {
            cfg.pipeline.dim = DimConfig{};
        } else if (t == "sim") {
            cfg.pipeline.sim = SimConfig{};
        } else if (t == "tim") {
            cfg.pipeline.tim = TimConfig{};
        } else {
            throw ConfigError("unknown transform '" + t + "'");
        }
    }
    cfg.epsilon = epsilon;
    cfg.iterations = iterations;
    cfg.alpha = alpha;
    cfg.mu = mu;
    cfg.seed = seed;
    if (cfg.method == Method::Fgsm) {
        cfg.iterations = 1;
        cfg.alpha = epsilon;
    }
    cfg.validate();
    return cfg;
}

GradientSource make_source(const std::vector<Classifier>& models) {
    if (models.empty()) throw ConfigError("at least one surrogate model is required");
    return models.size() == 1 ? GradientSource(models.front()) : GradientSource(models);
}

#define GATK_ATTACK_ARGS                                                                                          \
    py::arg("method") = "mifgsm", py::arg("rule") = "sign", py::arg("c") = 2.0, py::arg("sampler") = "none",     \
    py::arg("n") = 12, py::arg("beta") = 1.5, py::arg("epsilon") = 16.0 / 255.0, py::arg("iterations") = 10,     \
    py::arg("alpha") = 1.6 / 255.0, py::arg("mu") = 1.0, py::arg("seed") = 0,                                     \
    py::arg("transforms") = std::vector<std::string>{}

}  // namespace

PYBIND11_MODULE(_gatk, m) {
    m.doc() = "Gradient-based transfer attack toolkit";

    auto base = py::register_exception<Error>(m, "GatkError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

    m.def("sign_update", [](const Array& g) { return to_array(sign_update(to_tensor(g))); }, py::arg("g"));
    m.def("rescale_update", [](const Array& g, double c) { return to_array(rescale_update(to_tensor(g), c)); },
          py::arg("g"), py::arg("c") = 2.0);
    m.def("clip_to_budget",
          [](const Array& adv, const Array& orig, double eps) {
              return to_array(clip_to_budget(to_tensor(adv), to_tensor(orig), eps));
          },
          py::arg("adv"), py::arg("orig"), py::arg("epsilon"));

    py::class_<Classifier>(m, "Classifier")
        .def_static(
            "init",
            [](const std::string& arch, std::size_t channels, std::size_t height, std::size_t width,
               std::size_t classes, std::uint64_t seed) {
                return init_model({parse_architecture(arch), channels, height, width, classes}, seed);
            },
            py::arg("arch"), py::arg("channels") = 1, py::arg("height") = 28, py::arg("width") = 28,
            py::arg("classes") = 10, py::arg("seed") = 0)
        .def_static("load", &load_classifier, py::arg("path"))
        .def("save", [](const Classifier& c, const std::string& path) { save_classifier(c, path); }, py::arg("path"))
        .def_property_readonly("arch", [](const Classifier& c) { return architecture_name(c.spec().arch); })
        .def_property_readonly("input_shape", [](const Classifier& c) { return c.spec().input_shape(); })
        .def_property_readonly("classes", [](const Classifier& c) { return c.spec().classes; })
        .def("logits", [](const Classifier& c, const Array& x) { return to_array(c.logits(to_tensor(x))); })
        .def("predict", [](const Classifier& c, const Array& x) { return c.predict(to_tensor(x)); })
        .def("loss", [](const Classifier& c, const Array& x, std::size_t y) { return c.loss(to_tensor(x), y); })
        .def("input_gradient",
             [](const Classifier& c, const Array& x, std::size_t y) {
                 return to_array(c.input_gradient(to_tensor(x), y));
             },
             py::arg("x"), py::arg("label"))
        .def(
            "accuracy",
            [](const Classifier& c, const Array& images, const std::vector<std::size_t>& labels) {
                return accuracy(c, dataset_from(images, labels, c.spec().classes));
            },
            py::arg("images"), py::arg("labels"));

    m.def(
        "train",
        [](const std::string& arch, const Array& images, const std::vector<std::size_t>& labels, std::size_t classes,
           std::size_t epochs, std::size_t batch_size, double lr, double momentum, std::uint64_t seed,
           double adversarial_fraction, double adversarial_epsilon) {
            const LabeledDataset d = dataset_from(images, labels, classes);
            TrainConfig tc;
            tc.epochs = epochs;
            tc.batch_size = batch_size;
            tc.learning_rate = lr;
            tc.momentum = momentum;
            tc.seed = seed;
            tc.adversarial_fraction = adversarial_fraction;
            tc.adversarial_epsilon = adversarial_epsilon;
            const Shape& s = d.image_shape();
            TrainResult r = [&] {
                py::gil_scoped_release release;
                return train({parse_architecture(arch), s[0], s[1], s[2], classes}, d, tc);
            }();
            return py::make_tuple(std::move(r.model), r.epoch_losses);
        },
        py::arg("arch"), py::arg("images"), py::arg("labels"), py::arg("classes") = 10, py::arg("epochs") = 3,
        py::arg("batch_size") = 32, py::arg("lr") = 0.05, py::arg("momentum") = 0.9, py::arg("seed") = 0,
        py::arg("adversarial_fraction") = 0.0, py::arg("adversarial_epsilon") = 0.2,
        "Returns (classifier, per-epoch mean losses).");

    m.def("load_idx", [](const std::string& prefix) { return dataset_tuple(load_idx_prefix(prefix)); },
          py::arg("prefix"), "Returns (images N x 1 x H x W, labels, classes).");
    m.def(
        "synthetic_blobs",
        [](std::size_t per_class, std::size_t classes, std::size_t size, std::uint64_t seed) {
            return dataset_tuple(synthetic_blobs(per_class, classes, size, seed));
        },
        py::arg("per_class"), py::arg("classes") = 10, py::arg("size") = 28, py::arg("seed") = 1);

    m.def(
        "attack",
        [](const std::vector<Classifier>& models, const Array& x, std::size_t label, const std::string& method,
           const std::string& rule, double c, const std::string& sampler, std::size_t n, double beta, double epsilon,
           std::size_t iterations, double alpha, double mu, std::uint64_t seed,
           const std::vector<std::string>& transforms, std::uint64_t image_index) {
            const AttackConfig cfg =
                make_config(method, rule, c, sampler, n, beta, epsilon, iterations, alpha, mu, seed, transforms);
            const GradientSource src = make_source(models);
            const Tensor xt = to_tensor(x);
            Tensor adv;
            {
                py::gil_scoped_release release;
                adv = run_attack(src, xt, label, cfg, image_index).adversarial;
            }
            return to_array(adv);
        },
        py::arg("models"), py::arg("x"), py::arg("label"), GATK_ATTACK_ARGS, py::arg("image_index") = 0,
        "Crafts one adversarial example; several models form a logit ensemble.");

    m.def(
        "attack_batch",
        [](const std::vector<Classifier>& models, const Array& images, const std::vector<std::size_t>& labels,
           const std::string& method, const std::string& rule, double c, const std::string& sampler, std::size_t n,
           double beta, double epsilon, std::size_t iterations, double alpha, double mu, std::uint64_t seed,
           const std::vector<std::string>& transforms, std::size_t threads) {
            const AttackConfig cfg =
                make_config(method, rule, c, sampler, n, beta, epsilon, iterations, alpha, mu, seed, transforms);
            const GradientSource src = make_source(models);
            const std::vector<Tensor> xs = split_batch(images);
            std::vector<Tensor> out;
            {
                py::gil_scoped_release release;
                const auto items = attack_batch(src, xs, labels, cfg, {}, threads);
                for (const auto& it : items) {
                    if (!it.ok()) std::rethrow_exception(it.exception);
                    out.push_back(it.result->adversarial);
                }
            }
            return stack(out, xs.empty() ? Shape{0, 0, 0} : xs.front().shape());
        },
        py::arg("models"), py::arg("images"), py::arg("labels"), GATK_ATTACK_ARGS, py::arg("threads") = 0);

    m.def(
        "success_rate",
        [](const Classifier& target, const Array& originals, const Array& adversarials,
           const std::vector<std::size_t>& labels, std::optional<std::vector<bool>> mask) {
            const auto o = split_batch(originals), a = split_batch(adversarials);
            std::vector<bool> keep = mask ? *mask : std::vector<bool>(o.size(), true);
            std::unique_ptr<bool[]> flags(new bool[keep.size()]);
            for (std::size_t i = 0; i < keep.size(); ++i) flags[i] = keep[i];
            return success_rate(target, o, a, labels, std::span<const bool>(flags.get(), keep.size()));
        },
        py::arg("target"), py::arg("originals"), py::arg("adversarials"), py::arg("labels"),
        py::arg("mask") = py::none(), "Percentage of masked images whose adversarial version is misclassified.");
}
