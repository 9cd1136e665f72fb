#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "rare/error.hpp"

namespace rare::binary {

// Little-endian primitives shared by the model, BM25 and dense index files.

inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

inline void put_u32(std::ostream& out, std::uint32_t v)
{
    char buf[4];
    for (int i = 0; i < 4; ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFU);
    }
    out.write(buf, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v)
{
    char buf[8];
    for (int i = 0; i < 8; ++i) {
        buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFU);
    }
    out.write(buf, 8);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_string(std::ostream& out, std::string_view s)
{
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

/// Reads with bounds checking; any short read raises `Truncated`.
class reader {
  public:
    reader(std::istream& in, std::string source) : m_in(in), m_source(std::move(source)) {}

    void bytes(char* dst, std::size_t n)
    {
        m_in.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(m_in.gcount()) != n) {
            raise(errc::truncated, m_source);
        }
    }

    std::uint8_t u8()
    {
        char c = 0;
        bytes(&c, 1);
        return static_cast<std::uint8_t>(c);
    }

    std::uint32_t u32()
    {
        unsigned char buf[4];
        bytes(reinterpret_cast<char*>(buf), 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8U) | buf[i];
        }
        return v;
    }

    std::uint64_t u64()
    {
        unsigned char buf[8];
        bytes(reinterpret_cast<char*>(buf), 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) {
            v = (v << 8U) | buf[i];
        }
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string string()
    {
        std::uint32_t const n = u32();
        std::string s(n, '\0');
        if (n > 0) {
            bytes(s.data(), n);
        }
        return s;
    }

    /// Consumes the magic tag; mismatch (including a short file) is `BadMagic`.
    void expect_magic(std::string_view magic)
    {
        std::string got(magic.size(), '\0');
        m_in.read(got.data(), static_cast<std::streamsize>(magic.size()));
        if (static_cast<std::size_t>(m_in.gcount()) != magic.size() || got != magic) {
            raise(errc::bad_magic, m_source + " (expected " + std::string(magic) + ")");
        }
    }

    void expect_version(std::uint32_t expected)
    {
        std::uint32_t const v = u32();
        if (v != expected) {
            raise(errc::version_mismatch,
                  m_source + ": file version " + std::to_string(v) + ", supported "
                      + std::to_string(expected));
        }
    }

    [[nodiscard]] std::string const& source() const { return m_source; }

  private:
    std::istream& m_in;
    std::string m_source;
};

}  // namespace rare::binary
