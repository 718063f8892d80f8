#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gatk/tensor.hpp"

namespace gatk {

/// Images (C x H x W, pixels in [0, 1]) with class labels in [0, classes).
struct LabeledDataset {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }
    const Shape& image_shape() const { return images.at(0).shape(); }

    /// Throws ConsistencyError if any dataset invariant is violated.
    void validate() const;
    /// Examples [first, first + count), clamped to the dataset size.
    LabeledDataset slice(std::size_t first, std::size_t count) const;
};

/// Parses an MNIST-style IDX pair. Image files carry magic 0x00000803
/// followed by count, rows and cols (big-endian u32) and row-major u8
/// pixels; label files carry 0x00000801, count and u8 labels. Pixels are
/// divided by 255 and shaped 1 x rows x cols. The class count is
/// max(label) + 1, but at least 10 when every label is below 10.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);
LabeledDataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes);

/// Resolves `<prefix>-images-idx3-ubyte` / `<prefix>-labels-idx1-ubyte`.
LabeledDataset load_idx_prefix(const std::string& prefix);

/// Class-conditional Gaussian intensity blobs on an H x H canvas (1 channel).
/// Class k is centred on a fixed point of a circle around the image centre;
/// pixel noise has sigma 0.05 and values are clamped to [0, 1]. Throws
/// ConfigError for fewer than two classes.
LabeledDataset synthetic_blobs(std::size_t per_class, std::size_t classes, std::size_t size, std::uint64_t seed);

/// Adversarial examples tagged with the dataset indices they came from.
struct AdvBatch {
    std::uint64_t fingerprint = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> indices;
    std::vector<Tensor> examples;
};

/// GADV layout (little-endian): "GADV", u32 version, u64 config
/// fingerprint, u64 generator seed, u64 count, then per example u64 original
/// index, u32 rank, u64 dims, f64 payload.
void save_adv_batch(const AdvBatch& batch, const std::string& path);
/// Throws DriftError when `expected_fingerprint` is given and differs.
AdvBatch load_adv_batch(const std::string& path, std::optional<std::uint64_t> expected_fingerprint = std::nullopt);

std::vector<std::uint8_t> encode_adv_batch(const AdvBatch& batch);
AdvBatch decode_adv_batch(std::span<const std::uint8_t> bytes,
                          std::optional<std::uint64_t> expected_fingerprint = std::nullopt);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace gatk
