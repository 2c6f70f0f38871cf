#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dmpead {

// Little-endian byte encoder for the parameter file formats.
class ByteWriter {
public:
    void bytes(const void* data, std::size_t size);
    void u8(std::uint8_t v) { buffer_.push_back(v); }
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void str(const std::string& s);
    void bits(std::span<const std::uint8_t> flags);  // packed, LSB first

    const std::vector<std::uint8_t>& buffer() const noexcept { return buffer_; }

private:
    std::vector<std::uint8_t> buffer_;
};

// Decoder. Any read past the end throws IntegrityError naming `source`.
class ByteReader {
public:
    ByteReader(std::vector<std::uint8_t> data, std::string source)
        : data_(std::move(data)), source_(std::move(source)) {}

    void expect_magic(const char (&magic)[5]);
    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    std::string str();
    std::vector<std::uint8_t> bits(std::size_t count);
    bool at_end() const noexcept { return pos_ == data_.size(); }
    const std::string& source() const noexcept { return source_; }

private:
    const std::uint8_t* take(std::size_t n);

    std::vector<std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string source_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, const std::string& text);
std::string read_file_text(const std::filesystem::path& path);

}  // namespace dmpead
