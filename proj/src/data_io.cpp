#include "gatk/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "gatk/error.hpp"
#include "gatk/rng.hpp"

namespace gatk {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr char kAdvMagic[4] = {'G', 'A', 'D', 'V'};
constexpr std::uint32_t kAdvVersion = 1;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

std::string hex32(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
    return os.str();
}

void require_length(std::span<const std::uint8_t> b, std::size_t expected, const char* what) {
    if (b.size() < expected) {
        throw LengthError(std::string(what) + ": truncated, expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(b.size()));
    }
    if (b.size() > expected) {
        throw LengthError(std::string(what) + ": trailing data, expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(b.size()));
    }
}

}  // namespace

void LabeledDataset::validate() const {
    if (images.size() != labels.size()) {
        throw ConsistencyError("dataset has " + std::to_string(images.size()) + " images but " +
                               std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] >= classes) {
            throw ConsistencyError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                                   " exceeds class count " + std::to_string(classes));
        }
        if (images[i].shape() != images[0].shape()) {
            throw ConsistencyError("image " + std::to_string(i) + " has shape " + shape_str(images[i].shape()));
        }
        for (double v : images[i].values()) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ConsistencyError("image " + std::to_string(i) + " has a pixel outside [0, 1]");
            }
        }
    }
}

LabeledDataset LabeledDataset::slice(std::size_t first, std::size_t count) const {
    LabeledDataset out;
    out.classes = classes;
    const std::size_t end = std::min(images.size(), first + count);
    for (std::size_t i = std::min(first, end); i < end; ++i) {
        out.images.push_back(images[i]);
        out.labels.push_back(labels[i]);
    }
    return out;
}

LabeledDataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes) {
    if (image_bytes.size() < 4) require_length(image_bytes, 16, "IDX images");
    const std::uint32_t im_magic = read_be32(image_bytes, 0);
    if (im_magic != kIdxImagesMagic) {
        throw FormatError("IDX images: bad magic " + hex32(im_magic) + ", expected " + hex32(kIdxImagesMagic));
    }
    if (image_bytes.size() < 16) require_length(image_bytes, 16, "IDX images");
    const std::size_t count = read_be32(image_bytes, 4);
    const std::size_t rows = read_be32(image_bytes, 8);
    const std::size_t cols = read_be32(image_bytes, 12);
    if (rows == 0 || cols == 0) throw FormatError("IDX images: zero-sized image dimensions");
    if (count > 0 && rows * cols > (image_bytes.size() - 16) / count) {
        std::size_t payload = 0;
        const std::string expected = __builtin_mul_overflow(count, rows * cols, &payload) || payload > std::numeric_limits<std::size_t>::max() - 16
                                         ? "more than addressable"
                                         : std::to_string(16 + payload);
        throw LengthError("IDX images: truncated, header announces " + std::to_string(count) + " images of " +
                          std::to_string(rows) + "x" + std::to_string(cols) + " (" + expected +
                          " bytes) but file has " + std::to_string(image_bytes.size()) + " bytes");
    }
    require_length(image_bytes, 16 + count * rows * cols, "IDX images");

    if (label_bytes.size() < 4) require_length(label_bytes, 8, "IDX labels");
    const std::uint32_t lb_magic = read_be32(label_bytes, 0);
    if (lb_magic != kIdxLabelsMagic) {
        throw FormatError("IDX labels: bad magic " + hex32(lb_magic) + ", expected " + hex32(kIdxLabelsMagic));
    }
    if (label_bytes.size() < 8) require_length(label_bytes, 8, "IDX labels");
    const std::size_t label_count = read_be32(label_bytes, 4);
    if (label_count != count) {
        throw ConsistencyError("IDX: image file holds " + std::to_string(count) + " images but label file holds " +
                               std::to_string(label_count) + " labels");
    }
    require_length(label_bytes, 8 + count, "IDX labels");

    LabeledDataset ds;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    std::size_t max_label = 0;
    const std::size_t plane = rows * cols;
    for (std::size_t i = 0; i < count; ++i) {
        Tensor img({1, rows, cols});
        const std::uint8_t* px = image_bytes.data() + 16 + i * plane;
        for (std::size_t p = 0; p < plane; ++p) img[p] = static_cast<double>(px[p]) / 255.0;
        ds.images.push_back(std::move(img));
        const std::size_t label = label_bytes[8 + i];
        max_label = std::max(max_label, label);
        ds.labels.push_back(label);
    }
    ds.classes = std::max<std::size_t>(10, max_label + 1);
    return ds;
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto images = read_file(images_path);
    const auto labels = read_file(labels_path);
    return parse_idx(images, labels);
}

LabeledDataset load_idx_prefix(const std::string& prefix) {
    return load_idx(prefix + "-images-idx3-ubyte", prefix + "-labels-idx1-ubyte");
}

LabeledDataset synthetic_blobs(std::size_t per_class, std::size_t classes, std::size_t size, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synthetic_blobs: need at least two classes");
    if (size < 4) throw ConfigError("synthetic_blobs: canvas must be at least 4 pixels wide");
    LabeledDataset ds;
    ds.classes = classes;
    RngStream rng(seed);
    const double centre = (static_cast<double>(size) - 1.0) / 2.0;
    const double radius = 0.3 * static_cast<double>(size);
    const double spread = static_cast<double>(size) / 8.0;
    for (std::size_t n = 0; n < per_class; ++n) {
        for (std::size_t k = 0; k < classes; ++k) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
            const double cy = centre + radius * std::sin(angle);
            const double cx = centre + radius * std::cos(angle);
            Tensor img({1, size, size});
            for (std::size_t i = 0; i < size; ++i) {
                for (std::size_t j = 0; j < size; ++j) {
                    const double dy = static_cast<double>(i) - cy;
                    const double dx = static_cast<double>(j) - cx;
                    const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * spread * spread)) + rng.normal(0.0, 0.05);
                    img.at(0, i, j) = std::clamp(v, 0.0, 1.0);
                }
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(k);
        }
    }
    return ds;
}

std::vector<std::uint8_t> encode_adv_batch(const AdvBatch& batch) {
    if (batch.indices.size() != batch.examples.size()) {
        throw ConsistencyError("adversarial batch: index and example counts differ");
    }
    detail::ByteWriter w;
    w.bytes(kAdvMagic, 4);
    w.u32(kAdvVersion);
    w.u64(batch.fingerprint);
    w.u64(batch.seed);
    w.u64(batch.examples.size());
    for (std::size_t i = 0; i < batch.examples.size(); ++i) {
        w.u64(batch.indices[i]);
        w.tensor(batch.examples[i]);
    }
    return std::move(w.data());
}

AdvBatch decode_adv_batch(std::span<const std::uint8_t> bytes, std::optional<std::uint64_t> expected_fingerprint) {
    detail::ByteReader r(bytes, "GADV");
    char magic[4];
    r.bytes(magic, 4);
    if (!std::equal(magic, magic + 4, kAdvMagic)) throw FormatError("GADV: bad magic bytes");
    const std::uint32_t version = r.u32();
    if (version != kAdvVersion) throw VersionError("GADV: unsupported version " + std::to_string(version));
    AdvBatch batch;
    batch.fingerprint = r.u64();
    batch.seed = r.u64();
    if (expected_fingerprint && *expected_fingerprint != batch.fingerprint) {
        throw DriftError("GADV: config fingerprint mismatch (file has " + std::to_string(batch.fingerprint) +
                         ", expected " + std::to_string(*expected_fingerprint) + ")");
    }
    const std::uint64_t count = r.u64();
    // Every example occupies at least 8 + 4 + 8 + 8 bytes.
    if (count > r.remaining() / 28) throw LengthError("GADV: count " + std::to_string(count) + " exceeds file size");
    for (std::uint64_t i = 0; i < count; ++i) {
        batch.indices.push_back(r.u64());
        batch.examples.push_back(r.tensor());
    }
    if (r.remaining() != 0) throw LengthError("GADV: " + std::to_string(r.remaining()) + " trailing bytes");
    return batch;
}

void save_adv_batch(const AdvBatch& batch, const std::string& path) { write_file(path, encode_adv_batch(batch)); }

AdvBatch load_adv_batch(const std::string& path, std::optional<std::uint64_t> expected_fingerprint) {
    return decode_adv_batch(read_file(path), expected_fingerprint);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path);
}

}  // namespace gatk
