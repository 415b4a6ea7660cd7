#pragma once

// Little-endian primitives shared by the checkpoint and container formats.

#include "nsql/core.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace nsql::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void write_u32(std::ostream& out, std::uint32_t value)
{
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

inline void write_u8(std::ostream& out, std::uint8_t value)
{
    out.write(reinterpret_cast<const char*>(&value), 1);
}

inline void write_f64(std::ostream& out, double value)
{
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

inline void read_exact(std::istream& in, char* dst, std::size_t count, const std::string& what)
{
    in.read(dst, std::streamsize(count));
    if (std::size_t(in.gcount()) != count) {
        throw LengthError(what + ": file truncated (wanted " + std::to_string(count) + " bytes, got " +
                          std::to_string(in.gcount()) + ")");
    }
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what)
{
    std::uint32_t value = 0;
    read_exact(in, reinterpret_cast<char*>(&value), sizeof value, what);
    return value;
}

inline std::uint8_t read_u8(std::istream& in, const std::string& what)
{
    std::uint8_t value = 0;
    read_exact(in, reinterpret_cast<char*>(&value), 1, what);
    return value;
}

inline double read_f64(std::istream& in, const std::string& what)
{
    double value = 0;
    read_exact(in, reinterpret_cast<char*>(&value), sizeof value, what);
    return value;
}

inline std::string hex_bytes(const std::array<char, 4>& bytes)
{
    static const char* digits = "0123456789abcdef";
    std::string out = "0x";
    for (char c : bytes) {
        const auto b = static_cast<unsigned char>(c);
        out += digits[b >> 4];
        out += digits[b & 15];
    }
    return out;
}

inline void expect_eof(std::istream& in, const std::string& what)
{
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError(what + ": trailing bytes after payload");
    }
}

} // namespace nsql::detail
