#pragma once

#include "simrec/types.hpp"

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace simrec {

/// Little-endian binary writer for the SIMREC-* container formats.
/// Byte layouts are documented in docs/FORMATS.md.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }

    /// Length-prefixed UTF-8 string (u32 byte length + bytes).
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }

    void raw(const void* data, std::size_t len) {
        buf_.append(static_cast<const char*>(data), len);
    }

    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

/// Bounds-checked reader over an in-memory buffer. Throws DataError on
/// truncation so corrupt files fail loudly with the offending offset.
class ByteReader {
public:
    ByteReader(const std::string& buf, std::string source)
        : buf_(buf), source_(std::move(source)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::string str() {
        const std::uint32_t len = u32();
        need(len);
        std::string s = buf_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    /// Consumes `magic` or throws DataError.
    void expect_magic(const std::string& magic) {
        need(magic.size());
        if (buf_.compare(pos_, magic.size(), magic) != 0)
            throw DataError(source_ + ": bad magic bytes (expected " + printable(magic) + ")");
        pos_ += magic.size();
    }

    bool at_end() const { return pos_ == buf_.size(); }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size())
            throw DataError(source_ + ": truncated at byte " + std::to_string(pos_));
    }

    static std::string printable(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c >= 0x20 && c < 0x7F) out.push_back(c);
            else out += "\\x" + std::to_string(static_cast<unsigned char>(c));
        }
        return out;
    }

    const std::string& buf_;
    std::string source_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace simrec
