#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ssrmap {

// Little-endian byte sink used by every on-disk format in the project.
class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void raw(std::span<const std::uint8_t> data);
    void raw(std::string_view data);

    std::size_t size() const noexcept { return bytes_.size(); }
    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

// Bounds-checked little-endian reader. Reads past the end throw a Format
// error naming the offset and what was being read.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8(const char* what);
    std::uint16_t u16(const char* what);
    std::uint32_t u32(const char* what);
    std::uint64_t u64(const char* what);
    float f32(const char* what);
    double f64(const char* what);
    std::span<const std::uint8_t> raw(std::size_t n, const char* what);
    std::string string(std::size_t n, const char* what);
    void expect_magic(std::string_view magic, const char* format_name);

    std::size_t offset() const noexcept { return offset_; }
    std::size_t remaining() const noexcept { return data_.size() - offset_; }
    bool at_end() const noexcept { return offset_ == data_.size(); }

private:
    void need(std::size_t n, const char* what) const;

    std::span<const std::uint8_t> data_;
    std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

// Writes via a sibling temp file and rename so readers never see a partial file.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::string& path, std::string_view text);

std::uint64_t fnv1a64(std::span<const std::uint8_t> data,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view data,
                      std::uint64_t seed = 0xcbf29ce484222325ULL) noexcept;

} // namespace ssrmap
