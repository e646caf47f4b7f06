#include "ssrmap/binary_io.hpp"

#include "ssrmap/error.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace ssrmap {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::DimensionMismatch: return "dimension_mismatch";
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::ModelMismatch: return "model_mismatch";
    }
    return "unknown";
}

void ByteWriter::u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::raw(std::span<const std::uint8_t> data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
}

void ByteWriter::raw(std::string_view data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
}

void ByteReader::need(std::size_t n, const char* what) const {
    if (data_.size() - offset_ < n) {
        fail(ErrorKind::Format, "truncated input at byte offset " + std::to_string(offset_) +
                                    " while reading " + what + " (need " + std::to_string(n) +
                                    " bytes, have " + std::to_string(data_.size() - offset_) + ")");
    }
}

std::uint8_t ByteReader::u8(const char* what) {
    need(1, what);
    return data_[offset_++];
}

std::uint16_t ByteReader::u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(data_[offset_] | (data_[offset_ + 1] << 8));
    offset_ += 2;
    return v;
}

std::uint32_t ByteReader::u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(data_[offset_ + i]) << (8 * i);
    }
    offset_ += 4;
    return v;
}

std::uint64_t ByteReader::u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(data_[offset_ + i]) << (8 * i);
    }
    offset_ += 8;
    return v;
}

float ByteReader::f32(const char* what) { return std::bit_cast<float>(u32(what)); }

double ByteReader::f64(const char* what) { return std::bit_cast<double>(u64(what)); }

std::span<const std::uint8_t> ByteReader::raw(std::size_t n, const char* what) {
    need(n, what);
    auto out = data_.subspan(offset_, n);
    offset_ += n;
    return out;
}

std::string ByteReader::string(std::size_t n, const char* what) {
    auto bytes = raw(n, what);
    return std::string(bytes.begin(), bytes.end());
}

void ByteReader::expect_magic(std::string_view magic, const char* format_name) {
    auto got = raw(magic.size(), "magic");
    if (!std::equal(got.begin(), got.end(), magic.begin())) {
        fail(ErrorKind::Format, std::string("bad magic for ") + format_name + ": expected \"" +
                                    std::string(magic) + "\"");
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::Io, "cannot open " + path);
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path temp = target;
    temp += ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(ErrorKind::Io, "cannot write " + temp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            fail(ErrorKind::Io, "short write to " + temp.string());
        }
    }
    std::error_code ec;
    fs::rename(temp, target, ec);
    if (ec) {
        fail(ErrorKind::Io, "cannot rename " + temp.string() + " to " + path + ": " + ec.message());
    }
}

void write_file_atomic(const std::string& path, std::string_view text) {
    write_file_atomic(path, std::span<const std::uint8_t>(
                                reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> data, std::uint64_t seed) noexcept {
    std::uint64_t h = seed;
    for (std::uint8_t b : data) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) noexcept {
    return fnv1a64(std::span<const std::uint8_t>(
                       reinterpret_cast<const std::uint8_t*>(data.data()), data.size()),
                   seed);
}

} // namespace ssrmap
