#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pathonet/errors.hpp"

namespace pathonet {

// Little-endian buffer writer/reader for the binary file formats (MDF1,
// MDQ1, PST1). Host is assumed little-endian; asserted once at startup of
// each writer via a compile-time check below.
static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts unsupported");

class ByteWriter {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }

    template <typename T>
    void pod(T v) { raw(&v, sizeof(T)); }

    void u8(std::uint8_t v) { pod(v); }
    void u16(std::uint16_t v) { pod(v); }
    void u32(std::uint32_t v) { pod(v); }
    void u64(std::uint64_t v) { pod(v); }
    void f32(float v) { pod(v); }

    void magic(const char m[4]) { raw(m, 4); }

    void str16(const std::string& s) {
        u16(static_cast<std::uint16_t>(s.size()));
        raw(s.data(), s.size());
    }

    void str32(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void f32_array(const float* p, std::size_t n) { raw(p, n * sizeof(float)); }

    std::size_t size() const { return buf_.size(); }
    const std::vector<std::uint8_t>& bytes() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* p, std::size_t n, std::string what)
        : p_(p), n_(n), what_(std::move(what)) {}

    explicit ByteReader(const std::vector<std::uint8_t>& buf, std::string what = "buffer")
        : ByteReader(buf.data(), buf.size(), std::move(what)) {}

    void raw(void* out, std::size_t n) {
        if (pos_ + n > n_)
            throw FormatError(what_ + ": truncated (need " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos_) + ", have " +
                              std::to_string(n_ - pos_) + ")");
        std::memcpy(out, p_ + pos_, n);
        pos_ += n;
    }

    template <typename T>
    T pod() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }

    std::uint8_t u8() { return pod<std::uint8_t>(); }
    std::uint16_t u16() { return pod<std::uint16_t>(); }
    std::uint32_t u32() { return pod<std::uint32_t>(); }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    float f32() { return pod<float>(); }

    void expect_magic(const char m[4], const std::string& format_name) {
        char got[4];
        raw(got, 4);
        if (std::memcmp(got, m, 4) != 0)
            throw FormatError(what_ + ": bad magic, not a " + format_name + " file");
    }

    std::string str16() {
        std::uint16_t n = u16();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    std::string str32() {
        std::uint32_t n = u32();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    std::vector<float> f32_array(std::size_t n) {
        std::vector<float> v(n);
        raw(v.data(), n * sizeof(float));
        return v;
    }

    std::size_t remaining() const { return n_ - pos_; }
    std::size_t position() const { return pos_; }

private:
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path);
    auto n = static_cast<std::size_t>(f.tellg());
    f.seekg(0);
    std::vector<std::uint8_t> bytes(n);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (!f) throw IoError("read failed: " + path);
    return bytes;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

} // namespace pathonet
