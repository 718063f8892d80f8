#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "gatk/data_io.hpp"
#include "gatk/error.hpp"
#include "test_util.hpp"

using namespace gatk;
using testutil::bit_equal;

namespace {

void be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> idx_images(const std::vector<std::vector<std::uint8_t>>& imgs, std::uint32_t rows,
                                     std::uint32_t cols, std::uint32_t magic = 0x803) {
    std::vector<std::uint8_t> b;
    be32(b, magic);
    be32(b, static_cast<std::uint32_t>(imgs.size()));
    be32(b, rows);
    be32(b, cols);
    for (const auto& im : imgs) b.insert(b.end(), im.begin(), im.end());
    return b;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels, std::uint32_t magic = 0x801) {
    std::vector<std::uint8_t> b;
    be32(b, magic);
    be32(b, static_cast<std::uint32_t>(labels.size()));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

// Two 3x3 images whose pixels are 0..8 and 100..108.
struct Fixture {
    std::vector<std::uint8_t> images, labels;
    Fixture() {
        std::vector<std::uint8_t> a(9), b(9);
        for (int i = 0; i < 9; ++i) {
            a[i] = static_cast<std::uint8_t>(i);
            b[i] = static_cast<std::uint8_t>(100 + i);
        }
        images = idx_images({a, b}, 3, 3);
        labels = idx_labels({7, 2});
    }
};

}  // namespace

TEST_CASE("idx parser reads a hand-built pair exactly") {
    const Fixture f;
    const LabeledDataset d = parse_idx(f.images, f.labels);
    REQUIRE(d.size() == 2);
    CHECK(d.labels == std::vector<std::size_t>{7, 2});
    CHECK(d.classes == 10);
    CHECK(d.image_shape() == Shape{1, 3, 3});
    for (int i = 0; i < 9; ++i) {
        CHECK(d.images[0][i] == static_cast<double>(i) / 255.0);
        CHECK(d.images[1][i] == static_cast<double>(100 + i) / 255.0);
    }
    d.validate();
}

TEST_CASE("idx parser rejects malformed input") {
    const Fixture f;
    try {
        parse_idx(idx_images({std::vector<std::uint8_t>(4)}, 2, 2, 0x802), idx_labels({1}));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("0x00000802") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_idx(f.images, idx_labels({1}, 0x803)), FormatError);
    CHECK_THROWS_AS(parse_idx(f.images, idx_labels({1, 2, 3})), ConsistencyError);

    auto trailing = f.images;
    trailing.push_back(0);
    CHECK_THROWS_AS(parse_idx(trailing, f.labels), LengthError);

    auto huge = f.images;
    huge[4] = 0xff;  // count = 0xff000002
    CHECK_THROWS_AS(parse_idx(huge, f.labels), LengthError);
}

TEST_CASE("idx parser rejects a truncation at every offset") {
    const Fixture f;
    for (std::size_t cut = 0; cut < f.images.size(); ++cut) {
        CHECK_THROWS_AS(parse_idx(std::span(f.images).first(cut), f.labels), DataError);
    }
    for (std::size_t cut = 0; cut < f.labels.size(); ++cut) {
        CHECK_THROWS_AS(parse_idx(f.images, std::span(f.labels).first(cut)), DataError);
    }
    try {
        parse_idx(std::span(f.images).first(20), f.labels);
        FAIL("expected LengthError");
    } catch (const LengthError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("34") != std::string::npos);
        CHECK(msg.find("20") != std::string::npos);
    }
}

TEST_CASE("idx fuzz: random valid files parse, single-byte truncations never do") {
    std::mt19937_64 rng(89);
    for (int trial = 0; trial < 30; ++trial) {
        const std::uint32_t rows = 1 + rng() % 5, cols = 1 + rng() % 5, n = rng() % 4;
        std::vector<std::vector<std::uint8_t>> imgs(n, std::vector<std::uint8_t>(rows * cols));
        std::vector<std::uint8_t> labels(n);
        for (auto& im : imgs)
            for (auto& p : im) p = static_cast<std::uint8_t>(rng());
        for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % 10);
        const auto ib = idx_images(imgs, rows, cols), lb = idx_labels(labels);
        const LabeledDataset d = parse_idx(ib, lb);
        CHECK(d.size() == n);
        for (std::uint32_t i = 0; i < n; ++i)
            for (std::uint32_t p = 0; p < rows * cols; ++p) CHECK(d.images[i][p] == imgs[i][p] / 255.0);
        d.validate();
        for (std::size_t cut = 0; cut < ib.size(); ++cut) CHECK_THROWS_AS(parse_idx(std::span(ib).first(cut), lb), DataError);
        for (std::size_t cut = 0; cut < lb.size(); ++cut) CHECK_THROWS_AS(parse_idx(ib, std::span(lb).first(cut)), DataError);
    }
}

TEST_CASE("idx files on disk") {
    const auto dir = std::filesystem::temp_directory_path() / "gatk_idx_test";
    std::filesystem::create_directories(dir);
    const Fixture f;
    const std::string prefix = (dir / "tiny").string();
    write_file(prefix + "-images-idx3-ubyte", f.images);
    write_file(prefix + "-labels-idx1-ubyte", f.labels);
    const LabeledDataset d = load_idx_prefix(prefix);
    CHECK(d.size() == 2);
    CHECK_THROWS_AS(load_idx_prefix((dir / "missing").string()), DataError);
    std::filesystem::remove_all(dir);

    const std::string mnist = std::string(GATK_SOURCE_DIR) + "/data/mnist5k/test";
    if (std::filesystem::exists(mnist + "-images-idx3-ubyte")) {
        const LabeledDataset m = load_idx_prefix(mnist);
        CHECK(m.image_shape() == Shape{1, 28, 28});
        CHECK(m.classes == 10);
        m.validate();
    }
}

TEST_CASE("synthetic blobs") {
    const LabeledDataset a = synthetic_blobs(10, 4, 16, 3), b = synthetic_blobs(10, 4, 16, 3);
    CHECK(a.size() == 40);
    CHECK(a.classes == 4);
    CHECK(a.labels == b.labels);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a.images[i], b.images[i]));
    a.validate();
    for (const auto& im : a.images)
        for (double v : im.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    CHECK_FALSE(bit_equal(synthetic_blobs(10, 4, 16, 4).images[0], a.images[0]));
    CHECK_THROWS_AS(synthetic_blobs(10, 1, 16, 3), ConfigError);
}

TEST_CASE("dataset invariants and slicing") {
    LabeledDataset d = synthetic_blobs(3, 2, 8, 1);
    const LabeledDataset s = d.slice(2, 10);
    CHECK(s.size() == 4);
    CHECK(s.labels[0] == d.labels[2]);
    d.labels[0] = 5;
    CHECK_THROWS_AS(d.validate(), ConsistencyError);
    d = synthetic_blobs(3, 2, 8, 1);
    d.images[1][0] = 1.5;
    CHECK_THROWS_AS(d.validate(), ConsistencyError);
    d = synthetic_blobs(3, 2, 8, 1);
    d.labels.pop_back();
    CHECK_THROWS_AS(d.validate(), ConsistencyError);
}

TEST_CASE("adversarial batch files") {
    std::mt19937_64 rng(97);
    AdvBatch batch;
    batch.fingerprint = 0x1234abcd5678ef00ULL;
    batch.seed = 42;
    for (std::uint64_t i = 0; i < 5; ++i) {
        batch.indices.push_back(i * 3 + 1);
        batch.examples.push_back(testutil::random_tensor({1, 4, 4}, rng, 0, 1));
    }
    const auto bytes = encode_adv_batch(batch);
    CHECK(std::memcmp(bytes.data(), "GADV", 4) == 0);
    const AdvBatch back = decode_adv_batch(bytes);
    CHECK(back.fingerprint == batch.fingerprint);
    CHECK(back.seed == 42);
    CHECK(back.indices == batch.indices);
    for (std::size_t i = 0; i < 5; ++i) CHECK(bit_equal(back.examples[i], batch.examples[i]));

    CHECK_NOTHROW(decode_adv_batch(bytes, batch.fingerprint));
    CHECK_THROWS_AS(decode_adv_batch(bytes, batch.fingerprint ^ 1), DriftError);
    auto tampered = bytes;
    tampered[8] ^= 0x10;
    CHECK_THROWS_AS(decode_adv_batch(tampered, batch.fingerprint), DriftError);

    for (std::size_t cut = 0; cut < bytes.size(); cut += 7) {
        CHECK_THROWS_AS(decode_adv_batch(std::span(bytes).first(cut)), DataError);
    }
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_adv_batch(bad_magic), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    CHECK_THROWS_AS(decode_adv_batch(bad_version), VersionError);

    const AdvBatch empty;
    const auto eb = encode_adv_batch(empty);
    CHECK(eb.size() == 4 + 4 + 8 + 8 + 8);
    CHECK(decode_adv_batch(eb).examples.empty());

    const auto dir = std::filesystem::temp_directory_path() / "gatk_adv_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "a.gadv").string();
    save_adv_batch(batch, path);
    CHECK(load_adv_batch(path, batch.fingerprint).indices == batch.indices);
    CHECK_THROWS_AS(load_adv_batch(path, 7), DriftError);
    std::filesystem::remove_all(dir);
}
