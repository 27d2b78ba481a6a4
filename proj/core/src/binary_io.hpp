#pragma once

// Little-endian primitives shared by the dataset and checkpoint containers.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "motiondiff/error.hpp"

namespace motiondiff::io {

template <class U>
void put_le(std::ostream& os, U v) {
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(buf, sizeof(U));
}

template <class U>
U get_le(std::istream& is, const std::string& what) {
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw DataError("truncated " + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

inline void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
inline void put_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
inline void put_i32(std::ostream& os, std::int32_t v) { put_le(os, static_cast<std::uint32_t>(v)); }
inline void put_f32(std::ostream& os, float v) { put_le(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(std::istream& is, const std::string& what) { return get_le<std::uint32_t>(is, what); }
inline std::uint64_t get_u64(std::istream& is, const std::string& what) { return get_le<std::uint64_t>(is, what); }
inline std::int32_t get_i32(std::istream& is, const std::string& what) {
    return static_cast<std::int32_t>(get_le<std::uint32_t>(is, what));
}
inline float get_f32(std::istream& is, const std::string& what) {
    return std::bit_cast<float>(get_le<std::uint32_t>(is, what));
}
inline double get_f64(std::istream& is, const std::string& what) {
    return std::bit_cast<double>(get_le<std::uint64_t>(is, what));
}

inline void put_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char (&magic)[5], const std::string& what) {
    char buf[4] = {};
    if (!is.read(buf, 4) || std::string(buf, 4) != std::string(magic, 4)) {
        throw DataError(what + ": bad magic, expected '" + std::string(magic, 4) + "'");
    }
}

}  // namespace motiondiff::io
