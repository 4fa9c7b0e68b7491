#pragma once

// Little-endian primitives shared by the artifact file formats.

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "lgrit/core/error.hpp"

namespace lgrit::binio {

inline void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void write_u16(std::ostream& os, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

inline void read_exact(std::istream& is, char* dst, std::size_t n, std::string_view what) {
    is.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw IoError("truncated input while reading " + std::string(what));
}

inline std::uint8_t read_u8(std::istream& is, std::string_view what) {
    char c;
    read_exact(is, &c, 1, what);
    return static_cast<std::uint8_t>(c);
}

inline std::uint16_t read_u16(std::istream& is, std::string_view what) {
    unsigned char b[2];
    read_exact(is, reinterpret_cast<char*>(b), 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32(std::istream& is, std::string_view what) {
    unsigned char b[4];
    read_exact(is, reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float read_f32(std::istream& is, std::string_view what) {
    const std::uint32_t bits = read_u32(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void expect_magic(std::istream& is, std::string_view magic) {
    std::array<char, 16> buf{};
    read_exact(is, buf.data(), magic.size(), "magic");
    if (std::string_view(buf.data(), magic.size()) != magic) {
        throw IoError("bad magic: expected \"" + std::string(magic) + "\"");
    }
}

}  // namespace lgrit::binio
