#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "gatk/error.hpp"
#include "gatk/tensor.hpp"

namespace gatk::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void f64(double v) { bytes(&v, sizeof v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) u64(d);
        bytes(t.data(), t.size() * sizeof(double));
    }

    std::vector<std::uint8_t>& data() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> in, std::string what) : in_(in), what_(std::move(what)) {}

    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) {
            throw LengthError(what_ + ": truncated, expected " + std::to_string(pos_ + n) + " bytes, have " +
                              std::to_string(in_.size()));
        }
    }
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank == 0 || rank > 8) throw FormatError(what_ + ": implausible tensor rank " + std::to_string(rank));
        Shape shape(rank);
        std::size_t count = 1;
        for (auto& d : shape) {
            d = u64();
            if (d == 0 || d > (std::size_t{1} << 32)) {
                throw FormatError(what_ + ": implausible tensor dimension " + std::to_string(d));
            }
            count *= d;
            if (count > (std::size_t{1} << 34)) throw FormatError(what_ + ": tensor too large");
        }
        need(count * sizeof(double));
        std::vector<double> data(count);
        bytes(data.data(), count * sizeof(double));
        return Tensor(std::move(shape), std::move(data));
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }

private:
    std::span<const std::uint8_t> in_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace gatk::detail
